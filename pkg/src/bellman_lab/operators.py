"""Bellman-type operators on finite MDPs.

Every operator is a pure function of an :class:`~bellman_lab.mdp_core.Mdp` and a
value table; none of them mutates its input. :class:`OperatorKind` bundles an
operator tag with the extra parameters it needs so that solvers and property
checks can treat all operators uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp_core import Mdp, state_values_from_q, validate_policy

TAGS = ("optimality_v", "optimality_q", "expectation_q", "consistent_q", "advantage_q")

# CLI / config spelling -> tag
CLI_NAMES = {
    "optimality-v": "optimality_v",
    "optimality-q": "optimality_q",
    "expectation-q": "expectation_q",
    "consistent": "consistent_q",
    "advantage": "advantage_q",
}


def _check_q(m: Mdp, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (m.n_states, m.n_actions):
        raise ValueError(f"q has shape {q.shape}, expected {(m.n_states, m.n_actions)}")
    return q


def _check_pi(m: Mdp, pi: np.ndarray) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (m.n_states, m.n_actions):
        raise ValueError(f"policy has shape {pi.shape}, expected {(m.n_states, m.n_actions)}")
    return pi


def apply_optimality_v(m: Mdp, v: np.ndarray) -> np.ndarray:
    """``max_a [r(s,a) + gamma * sum_s' P(s'|s,a) v(s')]``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (m.n_states,):
        raise ValueError(f"v has shape {v.shape}, expected {(m.n_states,)}")
    return (m.reward + m.gamma * (m.transition @ v)).max(axis=1)


def apply_optimality_q(m: Mdp, q: np.ndarray) -> np.ndarray:
    q = _check_q(m, q)
    return m.reward + m.gamma * (m.transition @ q.max(axis=1))


def apply_expectation_q(m: Mdp, pi: np.ndarray, q: np.ndarray) -> np.ndarray:
    q = _check_q(m, q)
    pi = _check_pi(m, pi)
    return m.reward + m.gamma * (m.transition @ state_values_from_q(q, pi))


def apply_consistent(m: Mdp, q: np.ndarray) -> np.ndarray:
    """Consistent operator: a self-transition bootstraps from ``q[s, a]`` rather than the max."""
    q = _check_q(m, q)
    future = m.off_diagonal_transition @ q.max(axis=1) + m.self_transition * q
    return m.reward + m.gamma * future


def apply_advantage(m: Mdp, pi: np.ndarray, q: np.ndarray, beta: float) -> np.ndarray:
    """Expectation operator plus ``beta * (q[s, a] - sum_b pi[s, b] q[s, b])``."""
    q = _check_q(m, q)
    pi = _check_pi(m, pi)
    if not math.isfinite(beta):
        raise ValueError(f"beta must be finite, got {beta!r}")
    v = state_values_from_q(q, pi)
    base = m.reward + m.gamma * (m.transition @ v)
    return base + beta * (q - v[:, None])


@dataclass(frozen=True, eq=False)
class OperatorKind:
    tag: str
    policy: np.ndarray | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown operator {self.tag!r}; expected one of {TAGS}")
        needs_policy = self.tag in ("expectation_q", "advantage_q")
        if needs_policy:
            if self.policy is None:
                raise ValueError(f"{self.tag} requires a policy")
            report = validate_policy(self.policy)
            if not report.ok:
                raise ValueError(f"invalid policy: {report.violations}")
        elif self.policy is not None:
            raise ValueError(f"{self.tag} takes no policy")
        if self.tag == "advantage_q":
            if self.beta is None or not math.isfinite(self.beta) or self.beta < 0:
                raise ValueError("advantage_q requires a finite beta >= 0")
        elif self.beta is not None:
            raise ValueError(f"{self.tag} takes no beta")

    @property
    def acts_on_state_values(self) -> bool:
        return self.tag == "optimality_v"

    def contraction_factor(self, m: Mdp) -> float | None:
        """Nominal sup-norm contraction factor; ``None`` when none is guaranteed."""
        return None if self.tag == "advantage_q" else m.gamma

    def table_shape(self, m: Mdp) -> tuple[int, ...]:
        return (m.n_states,) if self.acts_on_state_values else (m.n_states, m.n_actions)

    def __call__(self, m: Mdp, f: np.ndarray) -> np.ndarray:
        return apply(self, m, f)


def apply(op: OperatorKind, m: Mdp, f: np.ndarray) -> np.ndarray:
    if op.tag == "optimality_v":
        return apply_optimality_v(m, f)
    if op.tag == "optimality_q":
        return apply_optimality_q(m, f)
    if op.tag == "expectation_q":
        return apply_expectation_q(m, op.policy, f)
    if op.tag == "consistent_q":
        return apply_consistent(m, f)
    return apply_advantage(m, op.policy, f, op.beta)


# -- beta schedules -------------------------------------------------------------


@dataclass(frozen=True)
class BetaSchedule:
    """Decaying advantage coefficient with a finite sum.

    ``geometric``: ``beta0 * lam**j``; ``inverse_square``: ``beta0 / (1 + j)**2``.
    """

    family: str = "geometric"
    beta0: float = 0.99
    lam: float = 0.999

    def __post_init__(self):
        if self.family not in ("geometric", "inverse_square"):
            raise ValueError(f"unknown beta family {self.family!r}")
        if not (math.isfinite(self.beta0) and self.beta0 >= 0):
            raise ValueError("beta0 must be finite and >= 0")
        if self.family == "geometric" and not (0.0 < self.lam < 1.0):
            raise ValueError("geometric schedule needs lambda in (0, 1)")

    @classmethod
    def parse(cls, text: str) -> "BetaSchedule":
        """Parse ``geometric:<beta0>:<lambda>`` or ``invsq:<beta0>``."""
        parts = text.strip().split(":")
        if parts[0] == "geometric" and len(parts) == 3:
            return cls("geometric", float(parts[1]), float(parts[2]))
        if parts[0] == "invsq" and len(parts) == 2:
            return cls("inverse_square", float(parts[1]), 0.0)
        raise ValueError(f"bad beta schedule {text!r}; use geometric:b0:lambda or invsq:b0")

    @classmethod
    def zero(cls) -> "BetaSchedule":
        return cls("geometric", 0.0, 0.5)

    def __str__(self):
        if self.family == "geometric":
            return f"geometric:{self.beta0!r}:{self.lam!r}"
        return f"invsq:{self.beta0!r}"

    def at(self, j: int) -> float:
        return beta_at(self, j)

    def total(self) -> float:
        """Closed-form bound on the infinite sum."""
        if self.family == "geometric":
            return self.beta0 / (1.0 - self.lam)
        return self.beta0 * math.pi**2 / 6.0

    def first_index_below(self, eps: float) -> int:
        """Smallest ``J`` with ``beta_j < eps`` for every ``j >= J``."""
        if eps <= 0:
            raise ValueError("eps must be positive")
        if self.beta0 < eps:
            return 0
        if self.family == "geometric":
            j = max(0, math.floor(math.log(eps / self.beta0) / math.log(self.lam)))
        else:
            j = max(0, math.floor(math.sqrt(self.beta0 / eps)) - 1)
        while self.at(j) >= eps:
            j += 1
        return j

    def values(self, n: int) -> np.ndarray:
        j = np.arange(n, dtype=float)
        if self.family == "geometric":
            return self.beta0 * self.lam**j
        return self.beta0 / (1.0 + j) ** 2


def beta_at(schedule: BetaSchedule, j: int) -> float:
    if j < 0:
        raise ValueError("iteration index must be >= 0")
    if schedule.family == "geometric":
        return schedule.beta0 * schedule.lam**j
    return schedule.beta0 / (1.0 + j) ** 2
