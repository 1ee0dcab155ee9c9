"""Monte Carlo experiment orchestration: paired runs, curve aggregation, CSV,
SVG and manifest output."""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .envs import GridSpec, get_env
from .operators import BetaSchedule
from .qlearning import AgentConfig, RunRecord, derive_seed, run_training

log = logging.getLogger(__name__)

COLORS = {"classical": "tab:blue", "consistent": "tab:green", "advantage": "tab:red"}


@dataclass
class LearningCurve:
    mean: np.ndarray
    stderr: np.ndarray
    runs: int
    label: str
    env: str
    fingerprint: str
    final_values: np.ndarray

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])


class ExperimentError(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def fingerprint(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def aggregate(records: list[RunRecord], label: str, env: str, fp: str) -> LearningCurve:
    """Per-timestep mean (and standard error) over runs, reduced in run order."""
    stack = np.stack([r.totals for r in records])
    n = stack.shape[0]
    mean = stack.mean(axis=0)
    stderr = stack.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return LearningCurve(mean, stderr, n, label, env, fp, stack[:, -1].copy())


def _one_run(args):
    env_name, bins, config, seed = args
    env = get_env(env_name)
    return run_training(env, env.grid(bins), config, seed)


def monte_carlo(
    env_name: str,
    configs: list[AgentConfig],
    runs: int,
    master_seed: int = 0,
    grid: GridSpec | None = None,
    workers: int = 1,
) -> list[LearningCurve]:
    """``runs`` paired runs per config; run ``i`` uses the same seed for every config.

    Results do not depend on ``workers``: records are reduced in run order.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if not configs:
        raise ValueError("need at least one config")
    env = get_env(env_name)
    grid = env.grid() if grid is None else grid
    shared = {k: v for k, v in configs[0].describe().items() if k not in ("operator_variant", "beta_schedule")}
    for c in configs[1:]:
        other = {k: v for k, v in c.describe().items() if k not in ("operator_variant", "beta_schedule")}
        if other != shared:
            raise ValueError("configs may differ only in operator variant and beta schedule")
    seeds = [derive_seed(master_seed, i) for i in range(runs)]
    curves = []
    for config in configs:
        jobs = [(env_name, grid.bins, config, s) for s in seeds]
        try:
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    records = list(pool.map(_one_run, jobs))
            else:
                records = [_one_run(j) for j in jobs]
        except Exception as exc:
            done = [c.label for c in curves]
            raise ExperimentError(f"run failed for {config.label}: {exc}", done) from exc
        fp = fingerprint(
            {"env": env_name, "grid": grid.bins, "config": config.describe(), "seeds": seeds}
        )
        curves.append(aggregate(records, config.label, env_name, fp))
        log.info("%s/%s: final mean %.6g over %d runs", env_name, config.label, curves[-1].final_mean, runs)
    return curves


# -- output -------------------------------------------------------------------------


def export_csv(curves: list[LearningCurve], path, include_stderr: bool = True) -> Path:
    """Write ``step,<label>...`` (then ``<label>_se`` columns) with 17 significant digits."""
    if not curves:
        raise ValueError("no curves to export")
    length = len(curves[0].mean)
    if any(len(c.mean) != length for c in curves):
        raise ValueError("curves must have equal length")
    header = ["step"] + [c.label for c in curves]
    cols = [c.mean for c in curves]
    if include_stderr:
        header += [f"{c.label}_se" for c in curves]
        cols += [c.stderr for c in curves]
    lines = [",".join(header)]
    for t in range(length):
        lines.append(",".join([str(t + 1)] + [f"{col[t]:.17g}" for col in cols]))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    return {name: data[:, i] for i, name in enumerate(header)}


def render_plot(curves: list[LearningCurve], out_path, title: str | None = None) -> list[str]:
    """SVG line plot, one line per curve. Returns the legend labels."""
    if not curves:
        raise ValueError("no curves to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "bellman-lab", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(8, 5))
        for c in curves:
            t = np.arange(1, len(c.mean) + 1)
            ax.plot(t, c.mean, label=c.label, color=COLORS.get(c.label), linewidth=1.2)
        ax.set_xlabel("timestep")
        ax.set_ylabel("mean cumulative discounted reward")
        ax.set_title(title or f"{curves[0].env} ({curves[0].runs} runs)")
        legend = ax.legend()
        labels = [txt.get_text() for txt in legend.get_texts()]
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return labels


# -- experiment specification and manifest ------------------------------------------------


@dataclass
class ExperimentSpec:
    env: str
    variants: list[str]
    runs: int
    master_seed: int
    bins: tuple[int, ...]
    base: AgentConfig

    def configs(self) -> list[AgentConfig]:
        out = []
        for v in self.variants:
            sched = self.base.beta_schedule if v == "advantage" else None
            out.append(AgentConfig(**{**_config_kwargs(self.base), "operator_variant": v, "beta_schedule": sched}))
        return out

    def to_manifest(self) -> dict:
        return {
            "env": self.env,
            "variants": self.variants,
            "runs": self.runs,
            "master_seed": self.master_seed,
            "grid": list(self.bins),
            "seed_rule": "run i uses SeedSequence([master_seed, i]).generate_state(1)[0]",
            "config": self.base.describe(),
            "software": {
                "bellman_lab": __version__,
                "numpy": np.__version__,
                "python": sys.version.split()[0],
                "platform": platform.platform(),
            },
        }

    @classmethod
    def from_manifest(cls, data: dict) -> "ExperimentSpec":
        cfg = dict(data["config"])
        sched = cfg.pop("beta_schedule")
        cfg["beta_schedule"] = BetaSchedule.parse(sched) if sched else None
        cfg["operator_variant"] = "classical"
        return cls(data["env"], list(data["variants"]), int(data["runs"]), int(data["master_seed"]),
                   tuple(data["grid"]), AgentConfig(**cfg))


def _config_kwargs(c: AgentConfig) -> dict:
    return {f: getattr(c, f) for f in c.__dataclass_fields__}


def run_experiment(spec: ExperimentSpec, out_dir, workers: int = 1, plot: bool = True) -> list[LearningCurve]:
    """Run every variant, then write ``curves.csv``, ``curves.svg`` and ``manifest.txt``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = get_env(spec.env)
    curves = monte_carlo(spec.env, spec.configs(), spec.runs, spec.master_seed, env.grid(spec.bins), workers)
    export_csv(curves, out / "curves.csv")
    if plot:
        render_plot(curves, out / "curves.svg")
    manifest = spec.to_manifest()
    manifest["fingerprints"] = {c.label: c.fingerprint for c in curves}
    manifest["final_means"] = {c.label: repr(c.final_mean) for c in curves}
    (out / "manifest.txt").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return curves


def load_manifest(path) -> ExperimentSpec:
    return ExperimentSpec.from_manifest(json.loads(Path(path).read_text()))
