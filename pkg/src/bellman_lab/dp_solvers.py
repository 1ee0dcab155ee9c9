"""Exact dynamic-programming machinery: fixed-point iteration, policy evaluation,
policy iteration and a linear-solve oracle for ``q_pi``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mdp_core import Mdp, greedy_policy, sup_norm_distance
from .operators import OperatorKind, apply, apply_expectation_q

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000


@dataclass
class IterationTrace:
    """Per-step residuals of a fixed-point run.

    ``residuals[k] = ||f_{k+1} - f_k||`` and ``dist_to_final[k] = ||f_k - f_final||``
    for ``k = 0..K``, where ``f_final`` is the returned iterate. The final
    iterate stands in for the unknown fixed point, so ``dist_to_final`` is
    only computed once the run has ended.
    """

    residuals: list[float] = field(default_factory=list)
    dist_to_final: list[float] = field(default_factory=list)
    terminated_reason: str = "max_iters"

    @property
    def converged(self) -> bool:
        return self.terminated_reason == "converged"

    @property
    def n_iters(self) -> int:
        return len(self.residuals)

    def rows(self):
        """``(iter, residual, dist_to_final)`` rows; the last row has no residual."""
        for k, d in enumerate(self.dist_to_final):
            res = self.residuals[k] if k < len(self.residuals) else 0.0
            yield k, res, d

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,residual,dist_to_final\n")
            for k, res, d in self.rows():
                fh.write(f"{k},{res:.17g},{d:.17g}\n")


def fixed_point_iterate(
    op: OperatorKind,
    m: Mdp,
    f0: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> tuple[np.ndarray, IterationTrace]:
    """Iterate ``f_{k+1} = T f_k`` until ``||f_{k+1} - f_k|| <= tol``.

    Hitting ``max_iters`` is not an error: the trace is flagged ``max_iters`` and
    the last iterate is returned (the advantage operator need not contract).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    f = np.array(f0, dtype=float)
    if f.shape != op.table_shape(m):
        raise ValueError(f"f0 has shape {f.shape}, expected {op.table_shape(m)}")
    iterates = [f]
    trace = IterationTrace()
    for _ in range(max_iters):
        nxt = apply(op, m, f)
        res = sup_norm_distance(nxt, f)
        trace.residuals.append(res)
        iterates.append(nxt)
        f = nxt
        if res <= tol:
            trace.terminated_reason = "converged"
            break
        if not math.isfinite(res):
            break
    trace.dist_to_final = [sup_norm_distance(x, f) for x in iterates]
    return f, trace


def exact_q_pi(m: Mdp, pi: np.ndarray) -> np.ndarray:
    """Solve ``(I - gamma P Pi) q = r`` for the action values of ``pi``."""
    n_s, n_a = m.n_states, m.n_actions
    pi = np.asarray(pi, dtype=float)
    # Pi maps a successor-state distribution onto (s', a') pairs
    big_pi = np.zeros((n_s, n_s * n_a))
    for s in range(n_s):
        big_pi[s, s * n_a:(s + 1) * n_a] = pi[s]
    a_mat = np.eye(n_s * n_a) - m.gamma * m.transition.reshape(n_s * n_a, n_s) @ big_pi
    try:
        q = np.linalg.solve(a_mat, m.reward.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular Bellman expectation system") from exc
    return q.reshape(n_s, n_a)


def policy_evaluation(
    m: Mdp,
    pi: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    q0: np.ndarray | None = None,
) -> tuple[np.ndarray, IterationTrace]:
    op = OperatorKind("expectation_q", policy=pi)
    if q0 is None:
        q0 = np.zeros((m.n_states, m.n_actions))
    return fixed_point_iterate(op, m, q0, tol, max_iters)


@dataclass
class PolicyIterationResult:
    policy: np.ndarray
    q: np.ndarray
    policies: list[np.ndarray]
    eval_iters: list[int]
    converged: bool

    @property
    def n_outer(self) -> int:
        return len(self.eval_iters)


def policy_iteration(
    m: Mdp,
    pi0: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_outer: int = 1000,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> PolicyIterationResult:
    """Alternate evaluation (to ``tol``) and greedy improvement until the policy is stable."""
    pi = greedy_policy(np.zeros((m.n_states, m.n_actions))) if pi0 is None else np.asarray(pi0, float)
    policies = [pi]
    eval_iters = []
    q = np.zeros((m.n_states, m.n_actions))
    for _ in range(max_outer):
        q, trace = policy_evaluation(m, pi, tol, max_iters, q0=q)
        eval_iters.append(trace.n_iters)
        new_pi = greedy_policy(q)
        if np.array_equal(new_pi, pi):
            return PolicyIterationResult(pi, q, policies, eval_iters, True)
        pi = new_pi
        policies.append(pi)
    return PolicyIterationResult(pi, q, policies, eval_iters, False)


def bellman_residual(m: Mdp, pi: np.ndarray, q: np.ndarray) -> float:
    return sup_norm_distance(apply_expectation_q(m, pi, q), q)


@dataclass
class RateReport:
    """Outcome of :func:`convergence_rate_check`.

    ``ok`` covers the pointwise geometric bound only. ``sufficient_data`` is
    false for traces with fewer than three points; no slope is fitted then.
    """

    ok: bool
    sufficient_data: bool
    bound_violations: list[int]
    log_slope: float | None

    @property
    def empirical_rate(self) -> float | None:
        return None if self.log_slope is None else math.exp(self.log_slope)


def convergence_rate_check(
    trace: IterationTrace, gamma: float, slack: float = 1e-9, floor: float = 1e-9
) -> RateReport:
    """Check ``||f_n - f*|| <= gamma**n ||f_0 - f*|| + slack`` along a trace.

    Also fits the least-squares slope of ``log ||f_n - f*||`` against ``n`` over
    the points above ``floor``; below it the final-iterate stand-in for ``f*``
    dominates the error.
    """
    dist = np.asarray(trace.dist_to_final, dtype=float)
    n = np.arange(dist.size)
    bound = gamma**n * (dist[0] if dist.size else 0.0) + slack
    violations = [int(k) for k in np.nonzero(dist > bound)[0]]
    usable = dist > floor
    slope = None
    if usable.sum() >= 3:
        slope = float(np.polyfit(n[usable], np.log(dist[usable]), 1)[0])
    return RateReport(not violations, dist.size >= 3, violations, slope)
