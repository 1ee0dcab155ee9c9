import json

import numpy as np
import pytest

import oracles
from bellman_lab.mdp_core import Mdp, greedy_policy, random_mdp
from bellman_lab.operators import BetaSchedule
from bellman_lab.property_verifier import (
    PropertyReport,
    check_contraction,
    check_gap_increasing,
    check_monotonicity,
    check_optimality_preservation,
    consistent_vs_classical_gap,
    draw_instance,
    find_noncontraction_witness,
    merge_reports,
    paired_iteration,
    replay,
)
from conftest import absorbing_mdp

CONTRACTIONS = ["optimality_v", "optimality_q", "expectation_q", "consistent_q"]


class TestDrawInstance:
    def test_replayable(self):
        a = draw_instance("expectation_q", 3, 17)
        b = draw_instance("expectation_q", 3, 17)
        assert np.array_equal(a.u, b.u) and np.array_equal(a.op.policy, b.op.policy)
        assert np.array_equal(a.mdp.transition, b.mdp.transition)

    def test_ranges(self):
        for trial in range(50):
            inst = draw_instance("optimality_q", 0, trial, monotone_pair=True)
            assert 1 <= inst.mdp.n_states <= 10 and 1 <= inst.mdp.n_actions <= 4
            assert 0.0 <= inst.mdp.gamma < 0.99
            assert np.all(np.abs(inst.u) <= 100) and np.all(inst.v >= inst.u)

    def test_fixed_gamma_and_min_actions(self):
        inst = draw_instance("advantage_q", 0, 5, beta=0.9, gamma=0.9, min_actions=2)
        assert inst.mdp.gamma == 0.9 and inst.mdp.n_actions >= 2


class TestAxioms:
    @pytest.mark.parametrize("tag", CONTRACTIONS)
    def test_contraction_passes(self, tag):
        report = check_contraction(tag, trials=300, seed=1)
        assert report.verdict == "pass"
        assert report.stats["max_lhs_minus_rhs"] <= 1e-10

    @pytest.mark.parametrize("tag", CONTRACTIONS + ["advantage_q"])
    def test_monotonicity_passes(self, tag):
        assert check_monotonicity(tag, trials=300, seed=2).verdict == "pass"

    def test_advantage_with_large_beta_is_not_a_contraction(self):
        report = check_contraction("advantage_q", trials=300, seed=0, beta=0.9)
        assert report.verdict == "fail"
        w = report.violations[0]
        again = replay(w)
        assert again["lhs"] == w["lhs"] and again["rhs"] == w["rhs"]

    def test_invalid_trials(self):
        with pytest.raises(ValueError):
            check_contraction("optimality_q", trials=0)


class TestNoncontractionWitness:
    def test_witness_found_and_replayed(self):
        report = find_noncontraction_witness(0.9, trials=1000, seed=0)
        assert len(report.violations) == 1
        w = report.violations[0]
        assert w["gamma"] == 0.9 and w["n_actions"] >= 2
        again = replay(w)
        assert again["lhs"] > again["rhs"] + 1e-10
        assert again["lhs"] == w["lhs"]

    def test_no_witness_without_advantage_term(self):
        report = find_noncontraction_witness(0.0, trials=2000, seed=0)
        assert report.violations == [] and report.trials == 2000
        assert report.stats["max_lhs_minus_rhs"] <= 1e-10

    def test_report_serializes(self):
        report = find_noncontraction_witness(0.9, trials=1000, seed=4)
        data = json.loads(report.to_json())
        assert data["verdict"] == "fail"
        assert isinstance(data["violations"][0]["u"], list)


def loop_paired(m, schedule, k):
    """Loop-based oracle for k steps of the classical and advantage recursions."""
    p, r = m.transition.tolist(), m.reward_sas.tolist()
    qb = [[0.0] * m.n_actions for _ in range(m.n_states)]
    qa = [[0.0] * m.n_actions for _ in range(m.n_states)]
    for j in range(k):
        qb = oracles.optimality_q(p, r, m.gamma, qb)
        pi = greedy_policy(np.array(qa)).tolist()
        qa = oracles.advantage_q(p, r, m.gamma, pi, qa, schedule.at(j))
    return np.array(qb), np.array(qa)


class TestPairedIteration:
    def test_matches_loop_oracle(self):
        schedule = BetaSchedule("geometric", 0.9, 0.9)
        mdps = [random_mdp(s, 4, 3, gamma=0.8) for s in range(3)] + [random_mdp(9, 2, 2, gamma=0.5)]
        runs = paired_iteration(mdps, schedule, k_max=25, gate=1e-300)
        for m, run in zip(mdps, runs):
            qb, qa = loop_paired(m, schedule, 25)
            assert run.iterations == 25 and not run.converged
            assert np.max(np.abs(run.q_classical - qb)) <= 1e-10
            assert np.max(np.abs(run.q_advantage - qa)) <= 1e-10

    def test_converges_to_optimal_values(self):
        m = random_mdp(2, 5, 3, gamma=0.9)
        run = paired_iteration([m], BetaSchedule("geometric", 0.9, 0.999))[0]
        assert run.converged
        assert np.max(np.abs(run.q_classical.max(axis=1) - run.q_advantage.max(axis=1))) <= 1e-6

    def test_zero_schedule_gives_identical_sequences(self):
        m = random_mdp(4, 4, 2)
        run = paired_iteration([m], BetaSchedule.zero(), k_max=50)[0]
        assert np.array_equal(run.q_classical, run.q_advantage)

    def test_invalid_k_max(self):
        with pytest.raises(ValueError):
            paired_iteration([absorbing_mdp()], BetaSchedule(), k_max=0)


class TestWellBehaving:
    @pytest.mark.parametrize("seed", range(8))
    def test_optimality_preserved_and_gap_increased(self, seed):
        m = random_mdp(seed, 5, 3, gamma=0.9)
        schedule = BetaSchedule("geometric", 0.9, 0.999)
        run = paired_iteration([m], schedule)[0]
        assert check_optimality_preservation(m, schedule, paired=run).verdict == "pass"
        report = check_gap_increasing(m, schedule, paired=run)
        assert report.verdict == "pass"
        assert report.stats["max_gap_ratio"] >= 1.0

    def test_budget_exhaustion_is_inconclusive(self):
        m = random_mdp(0, 5, 3, gamma=0.95)
        schedule = BetaSchedule()
        report = check_gap_increasing(m, schedule, k_max=3)
        assert report.verdict == "inconclusive" and not report.violations
        assert check_optimality_preservation(m, schedule, k_max=3).verdict == "inconclusive"

    def test_merge_tags_instances(self):
        a = PropertyReport("x", 1, violations=[{"entry": (0, 0)}])
        b = PropertyReport("x", 1, inconclusive=[{"why": "budget"}])
        merged = merge_reports("x", [a, b])
        assert merged.trials == 2 and merged.verdict == "fail"
        assert merged.violations[0]["instance"] == 0 and merged.inconclusive[0]["instance"] == 1


class TestConsistentGap:
    def test_absorbing_state_closed_form(self):
        p = np.ones((1, 2, 1))
        r = np.array([[[1.0]], [[0.5]]]).reshape(1, 2, 1)
        m = Mdp(p, r, 0.9)
        gap = consistent_vs_classical_gap(m, tol=1e-12)
        assert np.allclose(gap.q_consistent, [[10.0, 5.0]], rtol=0, atol=1e-8)
        # classical values couple both actions through max_a q = 10
        assert np.allclose(gap.q_classical, [[10.0, 9.5]], rtol=0, atol=1e-8)
        assert gap.policies_coincide and gap.sup_norm_difference == pytest.approx(4.5, abs=1e-8)

    def test_without_self_loops_fixed_points_coincide(self):
        m = random_mdp(5, 6, 3, self_loops=False)
        gap = consistent_vs_classical_gap(m)
        assert gap.sup_norm_difference <= 1e-12 and gap.policy_agreement == 1.0
