"""Deterministic classic-control systems and uniform grid discretization.

Dynamics and constants follow the Gymnasium classic-control implementations
(MountainCar-v0, CartPole-v1, Acrobot-v1 with the "book" equations and no
torque noise) so results are comparable with runs made on those environments.
States are plain tuples of floats; steps are pure functions.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence


class StepOutcome(NamedTuple):
    next_state: tuple[float, ...]
    reward: float
    terminated: bool
    truncated: bool = False


# -- MountainCar ----------------------------------------------------------------

MC_MIN_POSITION = -1.2
MC_MAX_POSITION = 0.6
MC_MAX_SPEED = 0.07
MC_GOAL_POSITION = 0.5
MC_FORCE = 0.001
MC_GRAVITY = 0.0025


def mountain_car_step(s: Sequence[float], a: int) -> StepOutcome:
    if a not in (0, 1, 2):
        raise ValueError(f"MountainCar action must be 0, 1 or 2, got {a!r}")
    position, velocity = s
    velocity += (a - 1) * MC_FORCE + math.cos(3 * position) * (-MC_GRAVITY)
    velocity = min(max(velocity, -MC_MAX_SPEED), MC_MAX_SPEED)
    position += velocity
    position = min(max(position, MC_MIN_POSITION), MC_MAX_POSITION)
    if position == MC_MIN_POSITION and velocity < 0:
        velocity = 0.0
    terminated = position >= MC_GOAL_POSITION and velocity >= 0.0
    return StepOutcome((position, velocity), -1.0, terminated)


def mountain_car_reset(rng: random.Random) -> tuple[float, float]:
    return (rng.uniform(-0.6, -0.4), 0.0)


# -- CartPole -------------------------------------------------------------------

CP_GRAVITY = 9.8
CP_MASS_CART = 1.0
CP_MASS_POLE = 0.1
CP_TOTAL_MASS = CP_MASS_CART + CP_MASS_POLE
CP_HALF_LENGTH = 0.5
CP_POLEMASS_LENGTH = CP_MASS_POLE * CP_HALF_LENGTH
CP_FORCE_MAG = 10.0
CP_TAU = 0.02
CP_THETA_THRESHOLD = 12 * 2 * math.pi / 360
CP_X_THRESHOLD = 2.4


def cart_pole_step(s: Sequence[float], a: int) -> StepOutcome:
    """Explicit-Euler cart-pole step; reward +1 on every step, the failing one included."""
    if a not in (0, 1):
        raise ValueError(f"CartPole action must be 0 or 1, got {a!r}")
    x, x_dot, theta, theta_dot = s
    force = CP_FORCE_MAG if a == 1 else -CP_FORCE_MAG
    costheta = math.cos(theta)
    sintheta = math.sin(theta)
    temp = (force + CP_POLEMASS_LENGTH * theta_dot**2 * sintheta) / CP_TOTAL_MASS
    thetaacc = (CP_GRAVITY * sintheta - costheta * temp) / (
        CP_HALF_LENGTH * (4.0 / 3.0 - CP_MASS_POLE * costheta**2 / CP_TOTAL_MASS)
    )
    xacc = temp - CP_POLEMASS_LENGTH * thetaacc * costheta / CP_TOTAL_MASS
    x = x + CP_TAU * x_dot
    x_dot = x_dot + CP_TAU * xacc
    theta = theta + CP_TAU * theta_dot
    theta_dot = theta_dot + CP_TAU * thetaacc
    terminated = (
        x < -CP_X_THRESHOLD
        or x > CP_X_THRESHOLD
        or theta < -CP_THETA_THRESHOLD
        or theta > CP_THETA_THRESHOLD
    )
    return StepOutcome((x, x_dot, theta, theta_dot), 1.0, terminated)


def cart_pole_reset(rng: random.Random) -> tuple[float, ...]:
    return tuple(rng.uniform(-0.05, 0.05) for _ in range(4))


# -- Acrobot --------------------------------------------------------------------

AC_DT = 0.2
AC_LINK_LENGTH_1 = 1.0
AC_LINK_MASS_1 = 1.0
AC_LINK_MASS_2 = 1.0
AC_LINK_COM_POS_1 = 0.5
AC_LINK_COM_POS_2 = 0.5
AC_LINK_MOI = 1.0
AC_MAX_VEL_1 = 4 * math.pi
AC_MAX_VEL_2 = 9 * math.pi
AC_TORQUES = (-1.0, 0.0, 1.0)
AC_G = 9.8


def acrobot_derivs(y: Sequence[float], torque: float) -> tuple[float, float, float, float]:
    """Time derivative of ``(theta1, theta2, dtheta1, dtheta2)``."""
    m1, m2 = AC_LINK_MASS_1, AC_LINK_MASS_2
    l1 = AC_LINK_LENGTH_1
    lc1, lc2 = AC_LINK_COM_POS_1, AC_LINK_COM_POS_2
    i1 = i2 = AC_LINK_MOI
    g = AC_G
    theta1, theta2, dtheta1, dtheta2 = y
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(theta2)) + i1 + i2
    d2 = m2 * (lc2**2 + l1 * lc2 * math.cos(theta2)) + i2
    phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (
        -m2 * l1 * lc2 * dtheta2**2 * math.sin(theta2)
        - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
        + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2)
        + phi2
    )
    ddtheta2 = (
        torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * math.sin(theta2) - phi2
    ) / (m2 * lc2**2 + i2 - d2**2 / d1)
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return dtheta1, dtheta2, ddtheta1, ddtheta2


def rk4_step(f: Callable, y: Sequence[float], dt: float, *args) -> tuple[float, ...]:
    k1 = f(y, *args)
    k2 = f([yi + dt / 2 * ki for yi, ki in zip(y, k1)], *args)
    k3 = f([yi + dt / 2 * ki for yi, ki in zip(y, k2)], *args)
    k4 = f([yi + dt * ki for yi, ki in zip(y, k3)], *args)
    return tuple(
        yi + dt / 6.0 * (a + 2 * b + 2 * c + d) for yi, a, b, c, d in zip(y, k1, k2, k3, k4)
    )


def _wrap(x: float) -> float:
    """Map an angle into [-pi, pi)."""
    diff = 2 * math.pi
    while x > math.pi:
        x -= diff
    while x < -math.pi:
        x += diff
    return x


def acrobot_angles(s: Sequence[float]) -> tuple[float, float, float, float]:
    c1, s1, c2, s2, w1, w2 = s
    return math.atan2(s1, c1), math.atan2(s2, c2), w1, w2


def acrobot_observation(y: Sequence[float]) -> tuple[float, ...]:
    t1, t2, w1, w2 = y
    return (math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), w1, w2)


def acrobot_terminal(s: Sequence[float]) -> bool:
    c1, s1, c2, s2 = s[:4]
    # cos(t1 + t2) = c1 c2 - s1 s2
    return -c1 - (c1 * c2 - s1 * s2) > 1.0


def acrobot_step_angles(y: Sequence[float], a: int) -> tuple[tuple[float, ...], float, bool]:
    """Step on the internal angle state; returns ``(next_y, reward, terminated)``."""
    if a not in (0, 1, 2):
        raise ValueError(f"Acrobot action must be 0, 1 or 2, got {a!r}")
    t1, t2, w1, w2 = rk4_step(acrobot_derivs, tuple(y), AC_DT, AC_TORQUES[a])
    ny = (
        _wrap(t1),
        _wrap(t2),
        min(max(w1, -AC_MAX_VEL_1), AC_MAX_VEL_1),
        min(max(w2, -AC_MAX_VEL_2), AC_MAX_VEL_2),
    )
    terminated = -math.cos(ny[0]) - math.cos(ny[1] + ny[0]) > 1.0
    return ny, (0.0 if terminated else -1.0), terminated


def acrobot_step(s: Sequence[float], a: int) -> StepOutcome:
    """Step on the 6-D observation ``(cos t1, sin t1, cos t2, sin t2, w1, w2)``."""
    ny, reward, terminated = acrobot_step_angles(acrobot_angles(s), a)
    return StepOutcome(acrobot_observation(ny), reward, terminated)


def acrobot_reset(rng: random.Random) -> tuple[float, ...]:
    return acrobot_observation(tuple(rng.uniform(-0.1, 0.1) for _ in range(4)))


def acrobot_energy(y: Sequence[float]) -> float:
    """Total mechanical energy of an angle state; potential is measured from the pivot."""
    m1, m2 = AC_LINK_MASS_1, AC_LINK_MASS_2
    l1 = AC_LINK_LENGTH_1
    lc1, lc2 = AC_LINK_COM_POS_1, AC_LINK_COM_POS_2
    i1 = i2 = AC_LINK_MOI
    t1, t2, w1, w2 = y
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(t2)) + i1 + i2
    d2 = m2 * (lc2**2 + l1 * lc2 * math.cos(t2)) + i2
    d3 = m2 * lc2**2 + i2
    kinetic = 0.5 * (d1 * w1**2 + 2 * d2 * w1 * w2 + d3 * w2**2)
    potential = -m1 * AC_G * lc1 * math.cos(t1) - m2 * AC_G * (
        l1 * math.cos(t1) + lc2 * math.cos(t1 + t2)
    )
    return kinetic + potential


# -- grids ------------------------------------------------------------------------

_INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class GridSpec:
    bins: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        bins = tuple(int(b) for b in self.bins)
        lower = tuple(float(x) for x in self.lower)
        upper = tuple(float(x) for x in self.upper)
        if not (len(bins) == len(lower) == len(upper)) or not bins:
            raise ValueError("bins, lower and upper must have the same non-zero length")
        if any(b < 1 for b in bins):
            raise ValueError("bin counts must be >= 1")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise ValueError("lower bound must be below upper bound in every dimension")
        if math.prod(bins) > _INT64_MAX:
            raise ValueError("grid has more cells than a 64-bit index can address")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_cells(self) -> int:
        return math.prod(self.bins)

    @property
    def ndim(self) -> int:
        return len(self.bins)

    def with_bins(self, bins: Sequence[int]) -> "GridSpec":
        if len(bins) != self.ndim:
            raise ValueError(f"expected {self.ndim} bin counts, got {len(bins)}")
        return GridSpec(tuple(bins), self.lower, self.upper)

    def cell_coords(self, index: int) -> tuple[int, ...]:
        coords = []
        for b in reversed(self.bins):
            index, c = divmod(index, b)
            coords.append(c)
        return tuple(reversed(coords))

    def cell_center(self, index: int) -> tuple[float, ...]:
        return tuple(
            lo + (c + 0.5) * (hi - lo) / b
            for c, b, lo, hi in zip(self.cell_coords(index), self.bins, self.lower, self.upper)
        )

    def make_discretizer(self) -> Callable[[Sequence[float]], int]:
        """Closure equivalent to ``discretize(s, self)`` without per-call validation."""
        spec = tuple(zip(self.bins, self.lower, (hi - lo for lo, hi in zip(self.lower, self.upper))))

        def index(s):
            idx = 0
            for x, (b, lo, width) in zip(s, spec):
                if x <= lo:
                    i = 0
                else:
                    i = int((x - lo) / width * b)
                    if i >= b:
                        i = b - 1
                idx = idx * b + i
            return idx

        return index


def discretize(s: Sequence[float], g: GridSpec) -> int:
    """Row-major cell index of ``s`` under uniform per-dimension binning.

    Values outside ``[lower, upper]`` are clamped; the upper bound maps to the
    last bin.
    """
    if len(s) != g.ndim:
        raise ValueError(f"state has {len(s)} dimensions, grid has {g.ndim}")
    idx = 0
    for x, b, lo, hi in zip(s, g.bins, g.lower, g.upper):
        if x <= lo:
            i = 0
        else:
            i = min(int((x - lo) / (hi - lo) * b), b - 1)
        idx = idx * b + i
    return idx


# -- environment registry ------------------------------------------------------------

# CartPole velocities are unbounded; these clipping ranges are a convention.
CART_POLE_BOUNDS = (
    (-CP_X_THRESHOLD, CP_X_THRESHOLD),
    (-3.0, 3.0),
    (-CP_THETA_THRESHOLD, CP_THETA_THRESHOLD),
    (-3.5, 3.5),
)


def _acrobot_internal_step(y, a):
    ny, reward, terminated = acrobot_step_angles(y, a)
    return StepOutcome(ny, reward, terminated)


def _acrobot_internal_reset(rng):
    return tuple(rng.uniform(-0.1, 0.1) for _ in range(4))


def _identity(s):
    return s


@dataclass(frozen=True)
class EnvSpec:
    """Environment entry used by the learner.

    ``step``/``reset`` act on the internal simulation state and ``observe``
    maps it to the observation that gets discretized. Only Acrobot differs:
    it integrates joint angles and observes their cosines and sines.
    """

    name: str
    n_actions: int
    step: Callable[[Sequence[float], int], StepOutcome]
    reset: Callable[[random.Random], tuple[float, ...]]
    bounds: tuple[tuple[float, float], ...]
    paper_grid: tuple[int, ...]
    desk_grid: tuple[int, ...]
    observe: Callable[[Sequence[float]], tuple[float, ...]] = _identity

    def grid(self, bins: Sequence[int] | None = None) -> GridSpec:
        bins = self.desk_grid if bins is None else tuple(bins)
        if len(bins) != len(self.bounds):
            raise ValueError(f"{self.name} needs {len(self.bounds)} bin counts, got {len(bins)}")
        return GridSpec(bins, tuple(b[0] for b in self.bounds), tuple(b[1] for b in self.bounds))


ENVS = {
    "mountaincar": EnvSpec(
        "mountaincar",
        3,
        mountain_car_step,
        mountain_car_reset,
        ((MC_MIN_POSITION, MC_MAX_POSITION), (-MC_MAX_SPEED, MC_MAX_SPEED)),
        paper_grid=(40, 40),
        desk_grid=(40, 40),
    ),
    "cartpole": EnvSpec(
        "cartpole",
        2,
        cart_pole_step,
        cart_pole_reset,
        CART_POLE_BOUNDS,
        paper_grid=(150,) * 4,
        desk_grid=(12,) * 4,
    ),
    "acrobot": EnvSpec(
        "acrobot",
        3,
        _acrobot_internal_step,
        _acrobot_internal_reset,
        ((-1.0, 1.0),) * 4 + ((-AC_MAX_VEL_1, AC_MAX_VEL_1), (-AC_MAX_VEL_2, AC_MAX_VEL_2)),
        paper_grid=(30,) * 6,
        desk_grid=(6,) * 6,
        observe=acrobot_observation,
    ),
}


def get_env(name: str) -> EnvSpec:
    try:
        return ENVS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None

