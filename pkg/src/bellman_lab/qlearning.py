"""Tabular Q-learning on discretized classic-control systems.

The bootstrap target is chosen by operator variant:

* ``classical``: ``r + gamma * max_a' q[s', a']``
* ``consistent``: as classical, except that a transition which stays in the
  same grid cell bootstraps from ``q[s, a]``
* ``advantage``: classical target plus ``beta_j * (q[s, a] - max_b q[s, b])``,
  i.e. the advantage term evaluated under the greedy policy the learner
  tracks; ``beta_j`` advances once per update

A run is a fixed-length window of ``step_cap`` timesteps split into episodes of
at most ``episode_cap`` steps. The learner keeps one running total of
discounted reward for the whole run (the discount restarts with each episode).
When an episode reaches the goal early, the rest of its ``episode_cap`` slot is
filled with the last total, so every episode occupies the same number of
timesteps and totals at a given timestep are comparable across runs.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field

import numpy as np

from .envs import EnvSpec, GridSpec
from .mdp_core import DenseQTable, SparseQTable
from .operators import BetaSchedule

VARIANTS = ("classical", "consistent", "advantage")

# grids up to this many cells get a preallocated table
DENSE_CELL_LIMIT = 200_000


def default_beta_schedule(gamma: float) -> BetaSchedule:
    return BetaSchedule("geometric", gamma, 0.999)


@dataclass(frozen=True)
class AgentConfig:
    alpha: float = 0.1
    epsilon: float = 0.1
    gamma: float = 0.99
    operator_variant: str = "classical"
    beta_schedule: BetaSchedule | None = None
    episode_cap: int = 10_000
    step_cap: int = 10_000
    # optional per-episode multiplicative decay; 1.0 keeps the rate fixed
    epsilon_decay: float = 1.0
    alpha_decay: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma must lie in [0, 1)")
        if self.operator_variant not in VARIANTS:
            raise ValueError(f"operator_variant must be one of {VARIANTS}")
        if self.operator_variant == "advantage" and self.beta_schedule is None:
            raise ValueError("the advantage variant requires a beta schedule")
        if self.episode_cap < 1 or self.step_cap < 1:
            raise ValueError("episode_cap and step_cap must be >= 1")
        if not (0.0 < self.epsilon_decay <= 1.0 and 0.0 < self.alpha_decay <= 1.0):
            raise ValueError("decay factors must lie in (0, 1]")

    @property
    def label(self) -> str:
        return self.operator_variant

    def describe(self) -> dict:
        d = asdict(self)
        d["beta_schedule"] = str(self.beta_schedule) if self.beta_schedule else None
        return d


@dataclass
class RunRecord:
    seed: int
    totals: np.ndarray
    episodes_completed: int
    episode_lengths: list[int] = field(default_factory=list)
    episode_terminated: list[bool] = field(default_factory=list)
    q_max_abs: float = 0.0

    @property
    def steps_to_goal(self) -> list[int | None]:
        return [n if done else None for n, done in zip(self.episode_lengths, self.episode_terminated)]


def td_target(
    variant: str,
    q: SparseQTable,
    s: int,
    a: int,
    r: float,
    s_next: int,
    terminated: bool,
    beta_j: float,
    gamma: float,
) -> float:
    """Sampled bootstrap target for one transition between grid cells."""
    if terminated:
        target = r
    elif variant == "consistent" and s_next == s:
        target = r + gamma * q.get(s, a)
    else:
        target = r + gamma * max(q.peek(s_next))
    if variant == "advantage":
        row = q.peek(s)
        target += beta_j * (row[a] - max(row))
    return target


def q_update(q: SparseQTable, s: int, a: int, target: float, alpha: float) -> float:
    """Move ``q[s, a]`` a fraction ``alpha`` toward ``target``; returns the new value."""
    row = q.row(s)
    row[a] += alpha * (target - row[a])
    return row[a]


def greedy_action(row) -> int:
    """Argmax with ties going to the lowest index."""
    return row.index(max(row))


def select_action(q: SparseQTable, s: int, epsilon: float, rng: random.Random) -> int:
    """Epsilon-greedy choice. Always consumes one uniform draw (plus one when exploring)."""
    if rng.random() < epsilon:
        return rng.randrange(q.n_actions)
    return greedy_action(q.peek(s))


def derive_seed(master_seed: int, index: int) -> int:
    """Child seed for run ``index``: first 32-bit word of ``SeedSequence([master, index])``."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def make_table(grid: GridSpec, n_actions: int) -> SparseQTable:
    if grid.n_cells <= DENSE_CELL_LIMIT:
        return DenseQTable(grid.n_cells, n_actions)
    return SparseQTable(n_actions)


def run_training(env: EnvSpec, grid: GridSpec, config: AgentConfig, seed: int) -> RunRecord:
    """One independent training run of ``config.step_cap`` timesteps.

    Two generators are derived from ``seed``: one for initial states and one
    for exploration, so episode ``k`` starts from the same state for every
    operator variant run with the same seed.
    """
    env_rng = random.Random(derive_seed(seed, 0))
    agent_rng = random.Random(derive_seed(seed, 1))
    q = make_table(grid, env.n_actions)
    index = grid.make_discretizer()
    step, observe = env.step, env.observe
    n_actions = env.n_actions
    gamma = config.gamma
    alpha = config.alpha
    epsilon = config.epsilon
    variant = config.operator_variant
    consistent = variant == "consistent"
    schedule = config.beta_schedule if variant == "advantage" else None
    beta_j = 0

    step_cap, episode_cap = config.step_cap, config.episode_cap
    totals = np.empty(step_cap)
    lengths: list[int] = []
    finished: list[bool] = []
    total = 0.0
    t = 0
    while t < step_cap:
        state = env.reset(env_rng)
        cell = index(observe(state))
        window = min(episode_cap, step_cap - t)
        discount = 1.0
        k = 0
        terminated = False
        while k < window:
            row = q.row(cell)
            if agent_rng.random() < epsilon:
                a = agent_rng.randrange(n_actions)
            else:
                a = row.index(max(row))
            out = step(state, a)
            r = out.reward
            terminated = out.terminated
            total += discount * r
            discount *= gamma
            totals[t] = total
            t += 1
            k += 1
            state = out.next_state
            next_cell = index(observe(state))
            if terminated:
                target = r
            elif consistent and next_cell == cell:
                target = r + gamma * row[a]
            else:
                target = r + gamma * max(q.row(next_cell))
            if schedule is not None:
                target += schedule.at(beta_j) * (row[a] - max(row))
                beta_j += 1
            row[a] += alpha * (target - row[a])
            if terminated:
                break
            cell = next_cell
        lengths.append(k)
        finished.append(terminated)
        if terminated and k < window:
            pad = window - k
            totals[t:t + pad] = total
            t += pad
        epsilon *= config.epsilon_decay
        alpha *= config.alpha_decay
    return RunRecord(seed, totals, len(lengths), lengths, finished, q.max_abs())
