"""Finite MDP data model and the quantities derived from it.

Action-value tables, state-value tables and policies are plain numpy arrays:

* ``q`` has shape ``(n_states, n_actions)``
* ``v`` has shape ``(n_states,)``
* a policy ``pi`` has shape ``(n_states, n_actions)`` with rows on the simplex

Tabular learners working on discretized continuous systems use
:class:`SparseQTable` (or :class:`DenseQTable` for small grids), which share a
row-oriented read/write interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite MDP with transition tensor ``P[s, a, s']`` and rewards ``r[s, a, s']``."""

    transition: np.ndarray
    reward_sas: np.ndarray
    gamma: float

    def __post_init__(self):
        p = np.array(self.transition, dtype=float)
        r = np.array(self.reward_sas, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {p.shape}")
        if r.shape != p.shape:
            raise ValueError(f"reward shape {r.shape} does not match transition {p.shape}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("an MDP needs at least one state and one action")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward_sas", r)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @cached_property
    def reward(self) -> np.ndarray:
        """Expected one-step reward ``r(s, a)``, shape ``(S, A)``."""
        out = np.einsum("ijk,ijk->ij", self.transition, self.reward_sas)
        out.setflags(write=False)
        return out

    @cached_property
    def self_transition(self) -> np.ndarray:
        """``P[s, a, s]``, shape ``(S, A)``."""
        idx = np.arange(self.n_states)
        out = self.transition[idx, :, idx].copy()
        out.setflags(write=False)
        return out

    @cached_property
    def off_diagonal_transition(self) -> np.ndarray:
        """Transition tensor with the self-loop mass ``P[s, a, s]`` zeroed."""
        out = self.transition.copy()
        idx = np.arange(self.n_states)
        out[idx, :, idx] = 0.0
        out.setflags(write=False)
        return out


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_mdp(m: Mdp, tol: float = SIMPLEX_TOL) -> ValidationReport:
    """List every violated MDP invariant. An empty report means the MDP is valid."""
    report = ValidationReport()
    p = m.transition
    for s, a in np.argwhere(np.any((p < 0.0) | (p > 1.0), axis=2)):
        report.violations.append(f"probability out of [0, 1] at (s={s}, a={a})")
    sums = p.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(sums - 1.0) > tol)):
        report.violations.append(
            f"row sum {sums[s, a]!r} != 1 at (s={s}, a={a})"
        )
    if not np.all(np.isfinite(m.reward_sas)):
        report.violations.append("non-finite reward entries")
    if not (0.0 <= m.gamma < 1.0):
        report.violations.append(f"discount gamma={m.gamma!r} outside [0, 1)")
    return report


def validate_policy(pi: np.ndarray, tol: float = SIMPLEX_TOL) -> ValidationReport:
    report = ValidationReport()
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 2:
        report.violations.append(f"policy must be 2-D, got shape {pi.shape}")
        return report
    if np.any((pi < 0.0) | (pi > 1.0)):
        report.violations.append("policy entries outside [0, 1]")
    bad = np.nonzero(np.abs(pi.sum(axis=1) - 1.0) > tol)[0]
    for s in bad:
        report.violations.append(f"policy row {s} does not sum to 1")
    return report


def reward_sa(m: Mdp, s: int, a: int) -> float:
    if not (0 <= s < m.n_states and 0 <= a < m.n_actions):
        raise IndexError(f"(s={s}, a={a}) out of range for {m.n_states}x{m.n_actions} MDP")
    return float(m.reward[s, a])


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """One-hot argmax policy. Ties go to the lowest action index."""
    q = np.asarray(q, dtype=float)
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
    return pi


def _check_pair(q: np.ndarray, pi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if q.shape != pi.shape:
        raise ValueError(f"q shape {q.shape} does not match policy shape {pi.shape}")
    return q, pi


def state_values_from_q(q: np.ndarray, pi: np.ndarray) -> np.ndarray:
    q, pi = _check_pair(q, pi)
    return (pi * q).sum(axis=1)


def advantage(q: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """``A[s, a] = q[s, a] - sum_b pi[s, b] q[s, b]``."""
    q, pi = _check_pair(q, pi)
    return q - state_values_from_q(q, pi)[:, None]


def sup_norm_distance(f: np.ndarray, g: np.ndarray) -> float:
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch: {f.shape} vs {g.shape}")
    if f.size == 0:
        return 0.0
    return float(np.max(np.abs(f - g)))


def random_mdp(
    seed,
    n_states: int,
    n_actions: int,
    reward_range: tuple[float, float] = (-1.0, 1.0),
    gamma: float = 0.9,
    self_loops: bool = True,
    sparsity: float = 0.0,
) -> Mdp:
    """Random valid MDP, deterministic for a fixed seed.

    ``sparsity`` is the probability that a given successor is dropped from a
    row (at least one successor is always kept). ``self_loops=False`` removes
    all self-transition mass; it requires ``n_states >= 2``.
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be >= 1")
    if not self_loops and n_states < 2:
        raise ValueError("a single-state MDP always self-loops")
    rng = np.random.default_rng(seed)
    p = rng.random((n_states, n_actions, n_states))
    if sparsity > 0.0:
        p *= rng.random(p.shape) >= sparsity
    if not self_loops:
        idx = np.arange(n_states)
        p[idx, :, idx] = 0.0
    # rows emptied by sparsity get one random successor
    for s, a in zip(*np.nonzero(p.sum(axis=2) == 0.0)):
        choices = [t for t in range(n_states) if self_loops or t != s]
        p[s, a, rng.choice(choices)] = 1.0
    p /= p.sum(axis=2, keepdims=True)
    lo, hi = reward_range
    r = rng.uniform(lo, hi, size=p.shape)
    return Mdp(p, r, gamma)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> np.ndarray:
    pi = rng.random((n_states, n_actions))
    return pi / pi.sum(axis=1, keepdims=True)


# -- sparse / dense tables for discretized environments -----------------------


class SparseQTable:
    """Action values keyed by integer cell index; unseen cells read as ``default``."""

    def __init__(self, n_actions: int, default: float = 0.0):
        self.n_actions = n_actions
        self.default = float(default)
        self._rows: dict[int, list[float]] = {}

    def row(self, cell: int) -> list[float]:
        """Writable row for ``cell``, allocated on first access."""
        r = self._rows.get(cell)
        if r is None:
            r = [self.default] * self.n_actions
            self._rows[cell] = r
        return r

    def peek(self, cell: int) -> list[float]:
        """Read-only view of a row; does not allocate."""
        r = self._rows.get(cell)
        return list(r) if r is not None else [self.default] * self.n_actions

    def get(self, cell: int, action: int) -> float:
        r = self._rows.get(cell)
        return self.default if r is None else r[action]

    def set(self, cell: int, action: int, value: float) -> None:
        self.row(cell)[action] = float(value)

    def __len__(self):
        return len(self._rows)

    def items(self):
        return self._rows.items()

    def max_abs(self) -> float:
        return max((abs(x) for r in self._rows.values() for x in r), default=abs(self.default))


class DenseQTable(SparseQTable):
    """Preallocated variant with the same interface, for grids that fit in memory."""

    def __init__(self, n_cells: int, n_actions: int, default: float = 0.0):
        super().__init__(n_actions, default)
        self.n_cells = n_cells
        self._dense = [[self.default] * n_actions for _ in range(n_cells)]

    def row(self, cell: int) -> list[float]:
        return self._dense[cell]

    def peek(self, cell: int) -> list[float]:
        return list(self._dense[cell])

    def get(self, cell: int, action: int) -> float:
        return self._dense[cell][action]

    def __len__(self):
        return self.n_cells

    def items(self):
        return enumerate(self._dense)

    def max_abs(self) -> float:
        return max(abs(x) for r in self._dense for x in r)


# -- text file format ----------------------------------------------------------

_FMT = "{:.17g}"


def dumps_mdp(m: Mdp) -> str:
    """Serialize to the MDP text format (see README for the grammar)."""
    lines = [
        "# finite MDP",
        f"n_states {m.n_states}",
        f"n_actions {m.n_actions}",
        f"gamma {_FMT.format(m.gamma)}",
        "transition",
    ]
    for s, a, t in zip(*np.nonzero(m.transition)):
        lines.append(f"{s} {a} {t} {_FMT.format(m.transition[s, a, t])}")
    lines.append("end")
    lines.append("reward")
    for s, a, t in zip(*np.nonzero(m.reward_sas)):
        lines.append(f"{s} {a} {t} {_FMT.format(m.reward_sas[s, a, t])}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def loads_mdp(text: str) -> Mdp:
    header: dict[str, str] = {}
    blocks: dict[str, list[tuple[int, int, int, float]]] = {"transition": [], "reward": []}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if current is None:
            if line in blocks:
                current = line
                continue
            key, _, value = line.partition(" ")
            if key not in ("n_states", "n_actions", "gamma") or not value.strip():
                raise ValueError(f"line {lineno}: unexpected {line!r}")
            header[key] = value.strip()
        elif line == "end":
            current = None
        else:
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected 's a s_next value', got {line!r}")
            blocks[current].append((int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])))
    if current is not None:
        raise ValueError(f"unterminated {current} block")
    missing = {"n_states", "n_actions", "gamma"} - header.keys()
    if missing:
        raise ValueError(f"missing header fields: {sorted(missing)}")
    n_s, n_a = int(header["n_states"]), int(header["n_actions"])
    p = np.zeros((n_s, n_a, n_s))
    r = np.zeros((n_s, n_a, n_s))
    for arr, name in ((p, "transition"), (r, "reward")):
        for s, a, t, x in blocks[name]:
            if not (0 <= s < n_s and 0 <= a < n_a and 0 <= t < n_s):
                raise ValueError(f"{name} entry ({s}, {a}, {t}) is out of range")
            arr[s, a, t] = x
    return Mdp(p, r, float(header["gamma"]))


def save_mdp(m: Mdp, path) -> None:
    Path(path).write_text(dumps_mdp(m))


def load_mdp(path) -> Mdp:
    return loads_mdp(Path(path).read_text())
