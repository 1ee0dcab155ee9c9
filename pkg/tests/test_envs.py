import math
import random
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from bellman_lab.envs import (
    AC_DT,
    CP_THETA_THRESHOLD,
    ENVS,
    GridSpec,
    acrobot_angles,
    acrobot_energy,
    acrobot_observation,
    acrobot_reset,
    acrobot_step,
    acrobot_step_angles,
    acrobot_terminal,
    cart_pole_step,
    discretize,
    get_env,
    mountain_car_reset,
    mountain_car_step,
    rk4_step,
    acrobot_derivs,
)


class TestMountainCar:
    def test_closed_form_update(self):
        getcontext().prec = 40
        x = Decimal("-0.5")
        # cos(-1.5) to 40 digits via its Taylor series
        t, term, cos = Decimal("-1.5"), Decimal(1), Decimal(0)
        for k in range(60):
            cos += term
            term *= -t * t / ((2 * k + 1) * (2 * k + 2))
        v = Decimal("-0.0025") * cos
        out = mountain_car_step((-0.5, 0.0), 1)
        assert abs(out.next_state[1] - float(v)) <= 1e-17
        assert abs(out.next_state[0] - float(x + v)) <= 1e-16
        assert out.reward == -1.0 and not out.terminated

    def test_valley_bottom_is_still_with_no_push(self):
        x = -math.pi / 6
        out = mountain_car_step((x, 0.0), 1)
        assert abs(out.next_state[1]) <= 1e-18

    def test_goal_terminates_with_penalty(self):
        out = mountain_car_step((0.49, 0.05), 2)
        assert out.terminated and out.reward == -1.0

    def test_left_wall_zeroes_velocity(self):
        out = mountain_car_step((-1.19, -0.07), 0)
        assert out.next_state == (-1.2, 0.0)

    def test_bad_action(self):
        with pytest.raises(ValueError):
            mountain_car_step((0.0, 0.0), 3)

    def test_reset_range(self):
        rng = random.Random(0)
        for _ in range(100):
            x, v = mountain_car_reset(rng)
            assert -0.6 <= x <= -0.4 and v == 0.0


def cart_pole_reference(s, a):
    """Equations of motion solved as a 2x2 linear system instead of the closed form."""
    x, xd, th, thd = s
    mc, mp, l, g = 1.0, 0.1, 0.5, 9.8
    f = 10.0 if a == 1 else -10.0
    # (mc+mp) xdd + mp l cos th thdd = f + mp l thd^2 sin th
    # cos th xdd + (4/3) l thdd = g sin th
    lhs = np.array([[mc + mp, mp * l * math.cos(th)], [math.cos(th), 4.0 / 3.0 * l]])
    rhs = np.array([f + mp * l * thd**2 * math.sin(th), g * math.sin(th)])
    xdd, thdd = np.linalg.solve(lhs, rhs)
    return (x + 0.02 * xd, xd + 0.02 * xdd, th + 0.02 * thd, thd + 0.02 * thdd)


class TestCartPole:
    def test_alternating_forces_stay_upright(self):
        s = (0.0, 0.0, 0.0, 0.0)
        for k in range(10):
            expect = cart_pole_reference(s, k % 2)
            out = cart_pole_step(s, k % 2)
            assert np.allclose(out.next_state, expect, rtol=0, atol=1e-12)
            assert not out.terminated and abs(out.next_state[2]) < 0.05
            s = out.next_state

    def test_angle_threshold(self):
        out = cart_pole_step((0.0, 0.0, CP_THETA_THRESHOLD, 0.1), 1)
        assert out.terminated
        assert out.reward == 1.0

    def test_position_threshold(self):
        assert cart_pole_step((2.39, 1.0, 0.0, 0.0), 1).terminated

    def test_reward_every_step(self):
        rng = random.Random(1)
        s = ENVS["cartpole"].reset(rng)
        while True:
            out = cart_pole_step(s, 1)
            assert out.reward == 1.0
            if out.terminated:
                break
            s = out.next_state

    def test_bad_action(self):
        with pytest.raises(ValueError):
            cart_pole_step((0.0,) * 4, 2)


def acrobot_reference_step(y, torque):
    """Mass-matrix form of the two-link dynamics with a hand-rolled RK4."""
    def deriv(z):
        t1, t2, w1, w2 = z
        l1, lc, m, inertia, g = 1.0, 0.5, 1.0, 1.0, 9.8
        m11 = m * lc**2 + m * (l1**2 + lc**2 + 2 * l1 * lc * math.cos(t2)) + 2 * inertia
        m12 = m * (lc**2 + l1 * lc * math.cos(t2)) + inertia
        m22 = m * lc**2 + inertia
        h = m * l1 * lc * math.sin(t2)
        grav2 = m * lc * g * math.sin(t1 + t2)
        grav1 = (m * lc + m * l1) * g * math.sin(t1) + grav2
        rhs = np.array([h * (2 * w1 * w2 + w2**2) - grav1, torque - h * w1**2 - grav2])
        acc = np.linalg.solve(np.array([[m11, m12], [m12, m22]]), rhs)
        return np.array([w1, w2, acc[0], acc[1]])

    z = np.array(y, dtype=float)
    k1 = deriv(z)
    k2 = deriv(z + AC_DT / 2 * k1)
    k3 = deriv(z + AC_DT / 2 * k2)
    k4 = deriv(z + AC_DT * k3)
    z = z + AC_DT / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    t1 = (z[0] + math.pi) % (2 * math.pi) - math.pi
    t2 = (z[1] + math.pi) % (2 * math.pi) - math.pi
    return (t1, t2, float(np.clip(z[2], -4 * math.pi, 4 * math.pi)), float(np.clip(z[3], -9 * math.pi, 9 * math.pi)))


class TestAcrobot:
    def test_hanging_rest_is_equilibrium(self):
        out = acrobot_step(acrobot_observation((0.0, 0.0, 0.0, 0.0)), 1)
        assert np.allclose(out.next_state, (1.0, 0.0, 1.0, 0.0, 0.0, 0.0), rtol=0, atol=1e-15)
        assert out.reward == -1.0 and not out.terminated

    def test_termination_predicate(self):
        delta = 1e-6
        # theta2 = 0: -cos t1 - cos t1 = 1 + delta
        t1 = math.acos(-(1 + delta) / 2)
        assert acrobot_terminal(acrobot_observation((t1, 0.0, 0.0, 0.0)))
        t1 = math.acos(-(1 - delta) / 2)
        assert not acrobot_terminal(acrobot_observation((t1, 0.0, 0.0, 0.0)))

    def test_terminal_step_reward_zero(self):
        y = (math.pi - 0.1, 0.0, 0.0, 0.0)
        _, reward, terminated = acrobot_step_angles(y, 1)
        assert terminated and reward == 0.0

    def test_matches_independent_integrator(self):
        rng = random.Random(7)
        y = tuple(rng.uniform(-0.1, 0.1) for _ in range(4))
        ref = y
        for _ in range(100):
            a = rng.randrange(3)
            y, _, _ = acrobot_step_angles(y, a)
            ref = acrobot_reference_step(ref, a - 1.0)
            diff = [min(abs(p - q), 2 * math.pi - abs(p - q)) for p, q in zip(y[:2], ref[:2])]
            diff += [abs(p - q) for p, q in zip(y[2:], ref[2:])]
            assert max(diff) <= 1e-9

    def test_energy_conserved_without_torque(self):
        rng = random.Random(3)
        y = tuple(rng.uniform(-0.1, 0.1) for _ in range(4))
        e0 = acrobot_energy(y)
        for _ in range(1000):
            y, _, _ = acrobot_step_angles(y, 1)
            assert abs(acrobot_energy(y) - e0) <= 1e-3 * abs(e0)

    def test_energy_error_shrinks_with_step_size(self):
        y0 = (1.0, -0.5, 0.3, 0.2)
        errs = []
        for dt in (0.04, 0.02):
            y = y0
            for _ in range(int(round(20 / dt))):
                y = rk4_step(acrobot_derivs, y, dt, 0.0)
            errs.append(abs(acrobot_energy(y) - acrobot_energy(y0)))
        assert errs[1] < errs[0] / 8

    def test_observation_round_trip(self):
        obs = acrobot_reset(random.Random(0))
        assert np.allclose(acrobot_observation(acrobot_angles(obs)), obs, rtol=0, atol=1e-15)

    def test_bad_action(self):
        with pytest.raises(ValueError):
            acrobot_step_angles((0.0,) * 4, 3)


class TestDeterminism:
    @pytest.mark.parametrize("name", sorted(ENVS))
    def test_same_seed_same_trajectory(self, name):
        env = get_env(name)
        trajs = []
        for _ in range(2):
            rng = random.Random(42)
            s = env.reset(rng)
            traj = [s]
            for k in range(50):
                out = env.step(s, k % env.n_actions)
                traj.append(out)
                s = out.next_state
                if out.terminated:
                    s = env.reset(rng)
            trajs.append(traj)
        assert trajs[0] == trajs[1]

    def test_unknown_env(self):
        with pytest.raises(ValueError):
            get_env("pendulum")


class TestDiscretize:
    def test_corners(self):
        g = ENVS["mountaincar"].grid()
        assert discretize(g.lower, g) == 0
        assert discretize(g.upper, g) == g.n_cells - 1

    def test_mountain_car_midpoint(self):
        g = ENVS["mountaincar"].grid()
        mid = tuple((lo + hi) / 2 for lo, hi in zip(g.lower, g.upper))
        assert discretize(mid, g) == 820 == oracles.flatten_index((20, 20), (40, 40))

    def test_clamping(self):
        g = GridSpec((4, 5), (0.0, 0.0), (1.0, 1.0))
        assert discretize((-3.0, 7.0), g) == discretize((0.0, 1.0), g) == 4

    def test_surjective_over_bin_centers(self):
        g = GridSpec((3, 4, 5), (-1.0, 0.0, 2.0), (1.0, 2.0, 7.0))
        seen = {discretize(g.cell_center(i), g) for i in range(g.n_cells)}
        assert seen == set(range(g.n_cells))

    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
    def test_round_trip_within_half_bin(self, s):
        g = GridSpec((3, 7, 2), (-1.0, 0.0, -5.0), (1.0, 4.0, 5.0))
        center = g.cell_center(discretize(s, g))
        for x, c, b, lo, hi in zip(s, center, g.bins, g.lower, g.upper):
            clamped = min(max(x, lo), hi)
            assert abs(clamped - c) <= (hi - lo) / b / 2 + 1e-12

    @given(st.lists(st.floats(-10, 10), min_size=4, max_size=4))
    def test_matches_independent_flattening_and_closure(self, s):
        g = ENVS["cartpole"].grid((5, 6, 7, 8))
        idx = discretize(s, g)
        assert idx == g.make_discretizer()(s)
        assert oracles.flatten_index(g.cell_coords(idx), g.bins) == idx

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            discretize((0.0,), ENVS["mountaincar"].grid())

    @pytest.mark.parametrize("bins,lower,upper", [
        ((0, 2), (0, 0), (1, 1)),
        ((2, 2), (1, 0), (1, 1)),
        ((2,), (0, 0), (1, 1)),
        ((2**32, 2**32), (0, 0), (1, 1)),
    ])
    def test_invalid_grid(self, bins, lower, upper):
        with pytest.raises(ValueError):
            GridSpec(bins, lower, upper)

    def test_paper_grids_fit_in_int64(self):
        for env in ENVS.values():
            assert env.grid(env.paper_grid).n_cells < 2**63
