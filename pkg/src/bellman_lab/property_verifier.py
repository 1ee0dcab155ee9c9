"""Randomized checks of operator properties on small MDPs.

Each trial draws its instance from ``np.random.default_rng([seed, trial])``,
so any reported violation can be regenerated from ``(seed, trial)`` alone and
re-evaluated with :func:`replay`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dp_solvers import fixed_point_iterate
from .mdp_core import (
    Mdp,
    greedy_policy,
    random_mdp,
    random_policy,
    state_values_from_q,
    sup_norm_distance,
)
from .operators import BetaSchedule, OperatorKind, apply

CONTRACTION_SLACK = 1e-10
MONOTONE_SLACK = 1e-12
TABLE_RANGE = 100.0
MAX_STATES = 10
MAX_ACTIONS = 4
GAP_EPS = 1e-6
GAP_TOL = 1e-8
GATE = 1e-8


@dataclass
class PropertyReport:
    name: str
    trials: int
    violations: list[dict] = field(default_factory=list)
    inconclusive: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        if self.violations:
            return "fail"
        if self.inconclusive:
            return "inconclusive"
        return "pass"

    def to_dict(self) -> dict:
        return {
            "property": self.name,
            "trials": self.trials,
            "verdict": self.verdict,
            "violations": self.violations,
            "inconclusive": self.inconclusive,
            "stats": self.stats,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialize {type(x)}")


# -- instance generation ----------------------------------------------------------


@dataclass
class Instance:
    mdp: Mdp
    op: OperatorKind
    u: np.ndarray
    v: np.ndarray


def draw_instance(
    tag: str,
    seed: int,
    trial: int,
    beta: float | None = None,
    gamma: float | None = None,
    monotone_pair: bool = False,
    min_actions: int = 1,
) -> Instance:
    """Random MDP, operator parameters and table pair for one trial.

    With ``monotone_pair`` the second table is the first plus a nonnegative
    perturbation, so ``u <= v`` entrywise.
    """
    rng = np.random.default_rng([seed, trial])
    n_s = int(rng.integers(1, MAX_STATES + 1))
    n_a = int(rng.integers(min_actions, MAX_ACTIONS + 1))
    g = float(rng.uniform(0.0, 0.99)) if gamma is None else gamma
    sparsity = float(rng.choice([0.0, 0.5, 0.9]))
    m = random_mdp(int(rng.integers(2**32)), n_s, n_a, (-1.0, 1.0), g, sparsity=sparsity)
    policy = None
    if tag in ("expectation_q", "advantage_q"):
        policy = random_policy(rng, n_s, n_a)
        if rng.random() < 0.3:
            policy = greedy_policy(rng.random((n_s, n_a)))
    op = OperatorKind(tag, policy=policy, beta=beta if tag == "advantage_q" else None)
    shape = op.table_shape(m)
    u = rng.uniform(-TABLE_RANGE, TABLE_RANGE, size=shape)
    if monotone_pair:
        bump = rng.uniform(0.0, TABLE_RANGE, size=shape) * (rng.random(shape) < 0.5)
        v = u + bump
    else:
        v = rng.uniform(-TABLE_RANGE, TABLE_RANGE, size=shape)
    return Instance(m, op, u, v)


def _worst_entry(diff: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.unravel_index(np.argmax(diff), diff.shape))


def _contraction_measure(inst: Instance, factor: float) -> dict:
    tu = apply(inst.op, inst.mdp, inst.u)
    tv = apply(inst.op, inst.mdp, inst.v)
    gap = np.abs(tu - tv)
    return {
        "lhs": float(gap.max()),
        "rhs": factor * sup_norm_distance(inst.u, inst.v),
        "entry": _worst_entry(gap),
    }


def _monotone_measure(inst: Instance) -> dict:
    excess = apply(inst.op, inst.mdp, inst.u) - apply(inst.op, inst.mdp, inst.v)
    return {"max_excess": float(excess.max()), "entry": _worst_entry(excess)}


def _witness(inst: Instance, seed: int, trial: int, measured: dict) -> dict:
    return {
        "seed": seed,
        "trial": trial,
        "n_states": inst.mdp.n_states,
        "n_actions": inst.mdp.n_actions,
        "gamma": inst.mdp.gamma,
        "operator": inst.op.tag,
        "beta": inst.op.beta,
        "policy": inst.op.policy,
        "u": inst.u,
        "v": inst.v,
        **measured,
    }


# -- operator axioms ----------------------------------------------------------------


def check_contraction(tag: str, trials: int = 10_000, seed: int = 0, beta: float | None = None) -> PropertyReport:
    """``||T u - T v|| <= gamma ||u - v|| + 1e-10`` on random instances."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if tag == "advantage_q" and beta is None:
        beta = 0.0
    report = PropertyReport(f"contraction:{tag}", trials)
    worst = 0.0
    for trial in range(trials):
        inst = draw_instance(tag, seed, trial, beta=beta)
        meas = _contraction_measure(inst, inst.mdp.gamma)
        worst = max(worst, meas["lhs"] - meas["rhs"])
        if meas["lhs"] > meas["rhs"] + CONTRACTION_SLACK:
            report.violations.append(_witness(inst, seed, trial, meas))
    report.stats["max_lhs_minus_rhs"] = worst
    return report


def check_monotonicity(tag: str, trials: int = 10_000, seed: int = 0, beta: float | None = None) -> PropertyReport:
    """``u <= v  =>  T u <= T v + 1e-12`` on random instances."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if tag == "advantage_q" and beta is None:
        beta = 0.0
    report = PropertyReport(f"monotonicity:{tag}", trials)
    worst = -np.inf
    for trial in range(trials):
        inst = draw_instance(tag, seed, trial, beta=beta, monotone_pair=True)
        meas = _monotone_measure(inst)
        worst = max(worst, meas["max_excess"])
        if meas["max_excess"] > MONOTONE_SLACK:
            report.violations.append(_witness(inst, seed, trial, meas))
    report.stats["max_excess"] = float(worst)
    return report


def find_noncontraction_witness(
    beta: float,
    trials: int = 100_000,
    seed: int = 0,
    gamma: float = 0.9,
    max_witnesses: int = 1,
) -> PropertyReport:
    """Search for ``||T_a u - T_a v|| > gamma ||u - v||`` with the advantage operator.

    Each witness found is a violation of the contraction property; the search
    stops after ``max_witnesses``. A strict-inequality margin of 1e-10 keeps
    round-off from producing spurious witnesses.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    report = PropertyReport("noncontraction:advantage_q", 0)
    best = -np.inf
    for trial in range(trials):
        report.trials = trial + 1
        inst = draw_instance("advantage_q", seed, trial, beta=beta, gamma=gamma, min_actions=2)
        meas = _contraction_measure(inst, gamma)
        meas["fixed_gamma"] = gamma
        best = max(best, meas["lhs"] - meas["rhs"])
        if meas["lhs"] > meas["rhs"] + CONTRACTION_SLACK:
            report.violations.append(_witness(inst, seed, trial, meas))
            if len(report.violations) >= max_witnesses:
                break
    report.stats["max_lhs_minus_rhs"] = float(best)
    return report


def replay(witness: dict) -> dict:
    """Regenerate a stored witness from its seed and re-measure it."""
    tag = witness["operator"]
    if "max_excess" in witness:
        inst = draw_instance(tag, witness["seed"], witness["trial"], beta=witness["beta"], monotone_pair=True)
        return _monotone_measure(inst)
    fixed_gamma = witness.get("fixed_gamma")
    inst = draw_instance(
        tag,
        witness["seed"],
        witness["trial"],
        beta=witness["beta"],
        gamma=fixed_gamma,
        min_actions=2 if fixed_gamma is not None else 1,
    )
    return _contraction_measure(inst, inst.mdp.gamma)


# -- paired iteration: classical vs advantage operator ---------------------------------


@dataclass
class PairedRun:
    """Final iterates of the classical and advantage sequences from a common start."""

    q_classical: np.ndarray
    q_advantage: np.ndarray
    iterations: int
    converged: bool
    residual_classical: float
    residual_advantage: float

    @property
    def gap_classical(self) -> np.ndarray:
        q = self.q_classical
        return q - state_values_from_q(q, greedy_policy(q))[:, None]

    @property
    def gap_advantage(self) -> np.ndarray:
        q = self.q_advantage
        return q - state_values_from_q(q, greedy_policy(q))[:, None]


def paired_iteration(
    mdps: list[Mdp], schedule: BetaSchedule, k_max: int = 100_000, gate: float = GATE
) -> list[PairedRun]:
    """Run ``Q_{k+1} = T_b Q_k`` and ``Q_{k+1} = T_a^{(k)} Q_k`` side by side.

    ``T_b`` is the expectation operator under the greedy policy of the current
    iterate (equal to the optimality operator), and ``T_a^{(k)}`` is the
    advantage operator with the same greedy policy and coefficient
    ``schedule.at(k)``. Instances of equal shape are iterated as one batch;
    the batch stops once every instance has both residuals below ``gate``, or
    at ``k_max``.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    out: list[PairedRun | None] = [None] * len(mdps)
    groups: dict[tuple[int, int], list[int]] = {}
    for i, m in enumerate(mdps):
        groups.setdefault((m.n_states, m.n_actions), []).append(i)
    for (n_s, n_a), idx in groups.items():
        p = np.stack([mdps[i].transition for i in idx])
        r = np.stack([mdps[i].reward for i in idx])
        g = np.array([mdps[i].gamma for i in idx])[:, None, None]
        qb = np.zeros((len(idx), n_s, n_a))
        qa = np.zeros_like(qb)
        res_b = res_a = np.full(len(idx), np.inf)
        k = 0
        while k < k_max:
            vb = qb.max(axis=2)
            va = qa.max(axis=2)
            nb = r + g * np.einsum("bijk,bk->bij", p, vb)
            na = r + g * np.einsum("bijk,bk->bij", p, va) + schedule.at(k) * (qa - va[:, :, None])
            res_b = np.abs(nb - qb).max(axis=(1, 2))
            res_a = np.abs(na - qa).max(axis=(1, 2))
            qb, qa = nb, na
            k += 1
            if res_b.max() < gate and res_a.max() < gate:
                break
        for j, i in enumerate(idx):
            ok = bool(res_b[j] < gate and res_a[j] < gate)
            out[i] = PairedRun(qb[j], qa[j], k, ok, float(res_b[j]), float(res_a[j]))
    return out


def _run_for(m, schedule, k_max, paired):
    return paired if paired is not None else paired_iteration([m], schedule, k_max)[0]


def check_optimality_preservation(
    m: Mdp, schedule: BetaSchedule, k_max: int = 100_000, paired: PairedRun | None = None
) -> PropertyReport:
    """Actions strictly suboptimal under the classical limit stay suboptimal under the advantage one."""
    run = _run_for(m, schedule, k_max, paired)
    report = PropertyReport("optimality_preservation", 1)
    report.stats["iterations"] = run.iterations
    if not run.converged:
        report.inconclusive.append(
            {"residual_classical": run.residual_classical, "residual_advantage": run.residual_advantage}
        )
        return report
    gb, ga = run.gap_classical, run.gap_advantage
    for s, a in np.argwhere(gb < -GAP_EPS):
        if not ga[s, a] < 0.0:
            report.violations.append(
                {"entry": (int(s), int(a)), "gap_classical": float(gb[s, a]), "gap_advantage": float(ga[s, a])}
            )
    return report


def check_gap_increasing(
    m: Mdp, schedule: BetaSchedule, k_max: int = 100_000, paired: PairedRun | None = None
) -> PropertyReport:
    """``|Q_b - V_b| <= |Q_a - V_a| + 1e-8`` entrywise at the gated limit."""
    run = _run_for(m, schedule, k_max, paired)
    report = PropertyReport("gap_increasing", 1)
    report.stats["iterations"] = run.iterations
    if not run.converged:
        report.inconclusive.append(
            {"residual_classical": run.residual_classical, "residual_advantage": run.residual_advantage}
        )
        return report
    gb, ga = np.abs(run.gap_classical), np.abs(run.gap_advantage)
    for s, a in np.argwhere(gb > ga + GAP_TOL):
        report.violations.append(
            {"entry": (int(s), int(a)), "gap_classical": float(gb[s, a]), "gap_advantage": float(ga[s, a])}
        )
    report.stats["max_gap_ratio"] = float(np.max(ga / np.where(gb > GAP_EPS, gb, np.inf), initial=0.0))
    return report


def merge_reports(name: str, reports: list[PropertyReport]) -> PropertyReport:
    """Combine per-instance reports, tagging each entry with its instance index."""
    merged = PropertyReport(name, sum(r.trials for r in reports))
    for i, r in enumerate(reports):
        merged.violations += [{"instance": i, **v} for v in r.violations]
        merged.inconclusive += [{"instance": i, **v} for v in r.inconclusive]
    return merged


# -- consistent vs classical fixed points ------------------------------------------------


@dataclass
class GapSummary:
    sup_norm_difference: float
    policy_agreement: float
    policies_coincide: bool
    q_consistent: np.ndarray
    q_classical: np.ndarray


def consistent_vs_classical_gap(m: Mdp, tol: float = 1e-10) -> GapSummary:
    q0 = np.zeros((m.n_states, m.n_actions))
    qc, _ = fixed_point_iterate(OperatorKind("consistent_q"), m, q0, tol)
    qb, _ = fixed_point_iterate(OperatorKind("optimality_q"), m, q0, tol)
    agree = np.argmax(qc, axis=1) == np.argmax(qb, axis=1)
    return GapSummary(
        sup_norm_distance(qc, qb), float(agree.mean()), bool(agree.all()), qc, qb
    )
