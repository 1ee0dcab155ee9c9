"""Command-line entry point: ``bellman-lab {solve,verify,train,experiment}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dp_solvers import DEFAULT_MAX_ITERS, DEFAULT_TOL, fixed_point_iterate
from .envs import ENVS, get_env
from .harness import ExperimentSpec, export_csv, load_manifest, monte_carlo, run_experiment
from .mdp_core import load_mdp, random_mdp
from .operators import CLI_NAMES, BetaSchedule, OperatorKind
from .property_verifier import (
    check_contraction,
    check_gap_increasing,
    check_monotonicity,
    check_optimality_preservation,
    consistent_vs_classical_gap,
    find_noncontraction_witness,
    merge_reports,
    paired_iteration,
)
from .qlearning import AgentConfig, default_beta_schedule

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2

TRAIN_OPERATORS = {"classical": "classical", "optimality-q": "classical",
                   "consistent": "consistent", "advantage": "advantage"}


def _grid(text: str | None):
    if text is None:
        return None
    return tuple(int(x) for x in text.split(","))


def _policy(path: str | None, n_states: int, n_actions: int) -> np.ndarray:
    if path is None:
        return np.full((n_states, n_actions), 1.0 / n_actions)
    return np.loadtxt(path, ndmin=2)


def cmd_solve(args) -> int:
    m = load_mdp(args.mdp)
    tag = CLI_NAMES[args.operator]
    policy = _policy(args.policy, m.n_states, m.n_actions) if tag in ("expectation_q", "advantage_q") else None
    op = OperatorKind(tag, policy=policy, beta=args.beta if tag == "advantage_q" else None)
    f0 = np.zeros(op.table_shape(m))
    f, trace = fixed_point_iterate(op, m, f0, args.tol, args.max_iters)
    if args.trace_out:
        trace.to_csv(args.trace_out)
    print(f"# {trace.terminated_reason} after {trace.n_iters} iterations, "
          f"last residual {trace.residuals[-1]:.3e}")
    np.savetxt(sys.stdout, np.atleast_2d(f) if f.ndim == 1 else f, fmt="%.17g")
    return 0 if trace.converged else EXIT_FAIL


def cmd_verify(args) -> int:
    prop = args.property
    tag = CLI_NAMES.get(args.operator, args.operator)
    if prop == "contraction":
        report = check_contraction(tag, args.trials, args.seed, args.beta)
    elif prop == "monotonicity":
        report = check_monotonicity(tag, args.trials, args.seed, args.beta)
    elif prop == "noncontraction":
        report = find_noncontraction_witness(0.9 if args.beta is None else args.beta, args.trials, args.seed)
    elif prop in ("optimality-preservation", "gap-increasing"):
        schedule = BetaSchedule.parse(args.schedule) if args.schedule else None
        mdps = [random_mdp([args.seed, i], args.states, args.actions, gamma=args.gamma) for i in range(args.trials)]
        schedule = schedule or default_beta_schedule(args.gamma)
        runs = paired_iteration(mdps, schedule, args.k_max)
        check = check_optimality_preservation if prop == "optimality-preservation" else check_gap_increasing
        report = merge_reports(prop, [check(m, schedule, paired=r) for m, r in zip(mdps, runs)])
    elif prop == "consistent-gap":
        mdps = [random_mdp([args.seed, i], args.states, args.actions, gamma=args.gamma) for i in range(args.trials)]
        gaps = [consistent_vs_classical_gap(m) for m in mdps]
        print(json.dumps({
            "instances": len(gaps),
            "mean_sup_norm_difference": float(np.mean([g.sup_norm_difference for g in gaps])),
            "mean_policy_agreement": float(np.mean([g.policy_agreement for g in gaps])),
            "policies_coincide_rate": float(np.mean([g.policies_coincide for g in gaps])),
        }, indent=2))
        return EXIT_PASS
    else:  # argparse restricts choices
        raise AssertionError(prop)
    if args.report_out:
        Path(args.report_out).write_text(report.to_json())
    print(f"{report.name}: {report.verdict} ({report.trials} trials, "
          f"{len(report.violations)} violations, {len(report.inconclusive)} inconclusive)")
    return {"pass": EXIT_PASS, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}[report.verdict]


def _base_config(args) -> AgentConfig:
    schedule = BetaSchedule.parse(args.beta) if args.beta else default_beta_schedule(args.gamma)
    return AgentConfig(
        alpha=args.alpha,
        epsilon=args.epsilon,
        gamma=args.gamma,
        operator_variant="classical",
        beta_schedule=schedule,
        episode_cap=args.episode_cap,
        step_cap=args.steps,
    )


def cmd_train(args) -> int:
    base = _base_config(args)
    variant = TRAIN_OPERATORS[args.operator]
    config = AgentConfig(**{**base.__dict__, "operator_variant": variant,
                            "beta_schedule": base.beta_schedule if variant == "advantage" else None})
    env = get_env(args.env)
    curves = monte_carlo(args.env, [config], args.runs, args.seed, env.grid(_grid(args.grid)), args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_csv(curves, out / "curves.csv")
    print(f"{args.env}/{variant}: final mean {curves[0].final_mean:.6g} over {args.runs} runs")
    return 0


def cmd_experiment(args) -> int:
    if args.manifest:
        spec = load_manifest(args.manifest)
    else:
        env = get_env(args.env)
        bins = _grid(args.grid) or env.desk_grid
        spec = ExperimentSpec(args.env, [TRAIN_OPERATORS[v] for v in args.compare.split(",")],
                              args.runs, args.seed, bins, _base_config(args))
    curves = run_experiment(spec, args.out, args.workers, plot=not args.no_plot)
    for c in curves:
        print(f"{c.env}/{c.label}: final mean {c.final_mean:.6g} over {c.runs} runs")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bellman-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="iterate an operator to its fixed point on an MDP file")
    p.add_argument("mdp")
    p.add_argument("--operator", choices=sorted(CLI_NAMES), default="optimality-q")
    p.add_argument("--policy", help="whitespace-separated policy matrix (default: uniform)")
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--trace-out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="randomized operator property checks")
    p.add_argument("--property", required=True, choices=[
        "contraction", "monotonicity", "noncontraction",
        "optimality-preservation", "gap-increasing", "consistent-gap"])
    p.add_argument("--operator", default="optimality-q", choices=sorted(CLI_NAMES))
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=float)
    p.add_argument("--schedule", help="beta schedule for paired-iteration checks")
    p.add_argument("--states", type=int, default=5)
    p.add_argument("--actions", type=int, default=3)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--k-max", type=int, default=100_000)
    p.add_argument("--report-out")
    p.set_defaults(func=cmd_verify)

    for name, func, helptext in (("train", cmd_train, "Monte Carlo training runs for one operator"),
                                 ("experiment", cmd_experiment, "compare operators: CSV + SVG + manifest")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--env", choices=sorted(ENVS), default="mountaincar")
        p.add_argument("--runs", type=int, default=10)
        p.add_argument("--steps", type=int, default=10_000)
        p.add_argument("--episode-cap", type=int, default=10_000)
        p.add_argument("--alpha", type=float, default=0.1)
        p.add_argument("--epsilon", type=float, default=0.1)
        p.add_argument("--gamma", type=float, default=0.99)
        p.add_argument("--beta", help="geometric:b0:lambda or invsq:b0 (default geometric:gamma:0.999)")
        p.add_argument("--grid", help="bin counts, e.g. 40,40")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default="out")
        if name == "train":
            p.add_argument("--operator", choices=sorted(TRAIN_OPERATORS), default="classical")
        else:
            p.add_argument("--compare", default="classical,consistent,advantage")
            p.add_argument("--manifest", help="re-run the experiment recorded in a manifest.txt")
            p.add_argument("--no-plot", action="store_true")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
