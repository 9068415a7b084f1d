"""Multicut decomposition against exhaustive enumeration.

The oracle solves every feasible first-stage configuration with the exact
scenario QP solver and applies the risk measure to the resulting value
vector; the decomposition must reproduce the best configuration and value.
"""

import io

import numpy as np
import pytest

from sysrisk import (CutPool, DiscreteScalarDistribution, RiskSpec,
                     ScenarioSolution, SecondStageScenario, TwoStageInstance,
                     TwoStageIterationError, WirelessConfig,
                     delivered_proportion, evaluate_risk,
                     feasible_configurations, generate_instance, solve_master,
                     solve_second_stage_centralized, solve_two_stage,
                     trace_to_csv, unpack_solution)
from sysrisk import two_stage


def enumeration_oracle(instance):
    """Brute force: risk value of the scenario-value vector at every z."""
    probs = instance.probs
    best = None
    for z in feasible_configurations(instance.num_first_stage, instance.budget):
        values = np.array([
            solve_second_stage_centralized(s, z).value
            for s in instance.scenarios])
        rho = evaluate_risk(instance.risk_spec,
                            DiscreteScalarDistribution(values, probs))
        if best is None or rho < best[0] - 1e-12:
            best = (rho, z.copy())
    return best


def tiny_wireless(seed=3, num_scenarios=3, risk=None):
    cfg = WirelessConfig(num_robots=5, num_candidates=2, budget=1,
                         num_scenarios=num_scenarios, map_size=1.0,
                         candidate_positions=((0.3, 0.3), (0.7, 0.7)),
                         source_mean=(0.5, 0.5), seed=seed)
    inst, _ = generate_instance(cfg, risk)
    return cfg, inst


def plain_scenario(probability=1.0):
    return SecondStageScenario(probability=probability,
                               cost_lin=np.zeros(1), lower=np.zeros(1),
                               upper=np.ones(1))


class TestMaster:
    def make_instance(self, scenarios, lower_bound=0.0):
        return TwoStageInstance(num_first_stage=2, budget=1,
                                risk_spec=RiskSpec("Expectation"),
                                scenarios=scenarios,
                                value_lower_bound=lower_bound)

    def test_no_objective_cuts_clamps_at_the_floor(self):
        inst = self.make_instance([plain_scenario(0.5), plain_scenario(0.5)],
                                  lower_bound=-2.5)
        pool = CutPool(inst.probs)
        pool.add_risk_cut(np.ones(2))
        sol = solve_master(inst, pool)
        assert sol.eta == pytest.approx(-2.5, abs=1e-7)
        assert np.allclose(sol.q, -2.5, atol=1e-8)

    def test_single_scenario_constant_cut(self):
        inst = self.make_instance([plain_scenario(1.0)])
        pool = CutPool(inst.probs)
        pool.add_risk_cut(np.ones(1))
        pool.add_objective_cut(np.zeros(2), np.array([3.0]), np.zeros((1, 2)))
        sol = solve_master(inst, pool)
        assert sol.eta == pytest.approx(3.0, abs=1e-7)

    def test_risk_cut_weighting(self):
        # With bounds q >= (2, 6) the all-ones cut gives 4 while the cut
        # mu = (0, 2) gives 0.5*0*2 + 0.5*2*6 = 6; the master reports the max.
        inst = self.make_instance([plain_scenario(0.5), plain_scenario(0.5)])
        pool = CutPool(inst.probs)
        pool.add_risk_cut(np.ones(2))
        pool.add_risk_cut(np.array([0.0, 2.0]))
        pool.add_objective_cut(np.zeros(2), np.array([2.0, 6.0]),
                               np.zeros((2, 2)))
        sol = solve_master(inst, pool)
        assert sol.eta == pytest.approx(6.0, abs=1e-8)

    def test_ties_resolve_to_the_first_configuration(self):
        inst = self.make_instance([plain_scenario(1.0)])
        pool = CutPool(inst.probs)
        pool.add_risk_cut(np.ones(1))
        pool.add_objective_cut(np.zeros(2), np.array([1.0]), np.zeros((1, 2)))
        sol = solve_master(inst, pool)
        assert tuple(sol.z) == (0, 0)

    def test_empty_pool_is_a_contract_error(self):
        inst = self.make_instance([plain_scenario(1.0)])
        with pytest.raises(ValueError, match="initial risk cut"):
            solve_master(inst, CutPool(inst.probs))


class TestCutPool:
    def test_risk_cut_normalization_enforced(self):
        pool = CutPool(np.array([0.25, 0.75]))
        pool.add_risk_cut(np.array([4.0, 0.0]))
        with pytest.raises(ValueError, match="sum p_s mu_s"):
            pool.add_risk_cut(np.array([2.0, 2.0]))
        with pytest.raises(ValueError, match="nonnegative"):
            pool.add_risk_cut(np.array([8.0, -4.0 / 3.0]))
        with pytest.raises(ValueError, match="length"):
            pool.add_risk_cut(np.ones(3))

    def test_duplicate_risk_cut_not_added(self):
        pool = CutPool(np.array([0.5, 0.5]))
        assert pool.add_risk_cut(np.ones(2))
        assert not pool.add_risk_cut(np.ones(2))
        assert len(pool.risk_cuts) == 1

    def test_scenario_bounds_take_the_tightest_cut(self):
        pool = CutPool(np.array([1.0]))
        anchor = np.array([0.0, 0.0])
        pool.add_objective_cut(anchor, np.array([1.0]), np.array([[2.0, 0.0]]))
        pool.add_objective_cut(anchor, np.array([0.5]), np.array([[0.0, 0.0]]))
        z = np.array([1.0, 0.0])
        assert pool.scenario_bounds(z, -10.0)[0] == pytest.approx(3.0)
        assert pool.scenario_bounds(anchor, -10.0)[0] == pytest.approx(1.0)
        assert pool.scenario_bounds(anchor, 7.0)[0] == pytest.approx(7.0)


class TestScenarioSolve:
    def test_subgradient_validity_by_enumeration(self):
        cfg, inst = tiny_wireless(seed=5, num_scenarios=2)
        zs = list(feasible_configurations(2, 1))
        for scenario in inst.scenarios:
            sols = {tuple(z): solve_second_stage_centralized(scenario, z)
                    for z in zs}
            for z in zs:
                base = sols[tuple(z)]
                for zp in zs:
                    lin = base.value + base.subgradient @ (zp - z)
                    assert lin <= sols[tuple(zp)].value + 1e-7

    def test_closed_network_value(self):
        # With no reporting point open nothing can be delivered, so the
        # objective collapses to the undelivered-share penalty plus the
        # weighted unsent information.
        cfg, inst = tiny_wireless(seed=7, num_scenarios=1)
        scenario = inst.scenarios[0]
        sol = solve_second_stage_centralized(scenario, np.zeros(2))
        parts = unpack_solution(sol.x, cfg.num_robots, cfg.num_candidates)
        c1, c2 = cfg.loss_weights
        assert delivered_proportion(sol.x, cfg) == pytest.approx(0.0, abs=1e-8)
        expected = c1 * float(cfg.weights @ parts["y"]) + c2
        assert sol.value == pytest.approx(expected, abs=1e-7)

    def test_duplicate_scenarios_solve_identically(self):
        cfg, inst = tiny_wireless(seed=9, num_scenarios=1)
        scenario = inst.scenarios[0]
        z = np.array([1.0, 0.0])
        a = solve_second_stage_centralized(scenario, z)
        b = solve_second_stage_centralized(scenario, z)
        assert a.value == b.value
        assert np.array_equal(a.subgradient, b.subgradient)
        assert np.array_equal(a.x, b.x)

    def test_tied_variables_are_merged_exactly(self):
        scenario = SecondStageScenario(
            probability=1.0, cost_lin=np.array([2.0, 3.0]),
            eq_A=np.array([[1.0, 1.0]]), eq_b=np.array([4.0]),
            lower=np.zeros(2), upper=np.full(2, 4.0),
            tie_pairs=((0, 1),))
        sol = solve_second_stage_centralized(scenario, np.zeros(0))
        assert sol.x[0] == pytest.approx(sol.x[1], abs=1e-9)
        assert sol.x[0] == pytest.approx(2.0, abs=1e-8)
        assert sol.value == pytest.approx(10.0, abs=1e-7)

    def test_logical_caps_pin_and_release(self):
        # v0 <= 2 z0; closed z pins the variable at its lower bound, open z
        # frees it up to the cap.
        scenario = SecondStageScenario(
            probability=1.0, cost_lin=np.array([-1.0]),
            lower=np.zeros(1), upper=np.full(1, np.inf),
            link_ub=((0, 0, 2.0),))
        closed = solve_second_stage_centralized(scenario, np.zeros(1))
        assert closed.x[0] == pytest.approx(0.0, abs=1e-10)
        open_ = solve_second_stage_centralized(scenario, np.ones(1))
        assert open_.x[0] == pytest.approx(2.0, abs=1e-8)
        assert open_.value == pytest.approx(-2.0, abs=1e-8)
        # the cap dual carries the slope: value decreases by 2 per unit z
        assert open_.subgradient[0] == pytest.approx(-2.0, abs=1e-6)


class TestSolveTwoStage:
    def test_single_scenario_expectation_matches_enumeration(self):
        cfg, inst = tiny_wireless(seed=11, num_scenarios=1)
        res = solve_two_stage(inst)
        rho, z = enumeration_oracle(inst)
        assert res.converged
        assert res.risk_value == pytest.approx(rho, abs=1e-6)
        assert tuple(res.z) == tuple(int(b) for b in z)

    @pytest.mark.parametrize("risk", [RiskSpec("AVaR", alpha=0.3),
                                      RiskSpec("MeanSemideviation", order=1.0,
                                               kappa=0.5)])
    def test_risk_averse_matches_enumeration(self, risk):
        cfg, inst = tiny_wireless(seed=13, num_scenarios=4, risk=risk)
        res = solve_two_stage(inst)
        rho, z = enumeration_oracle(inst)
        assert res.converged
        assert res.risk_value == pytest.approx(rho, abs=1e-6)

    def test_z_independent_scenario_stops_at_iteration_two(self):
        scenario = SecondStageScenario(
            probability=1.0, cost_lin=np.ones(1),
            lower=np.full(1, 2.0), upper=np.full(1, 5.0))
        inst = TwoStageInstance(num_first_stage=2, budget=1,
                                risk_spec=RiskSpec("Expectation"),
                                scenarios=[scenario])
        res = solve_two_stage(inst)
        assert res.converged and res.iterations == 2
        assert res.risk_value == pytest.approx(2.0, abs=1e-8)
        assert res.trace[0].eta == pytest.approx(0.0, abs=1e-9)
        assert res.trace[1].eta == pytest.approx(res.trace[1].rho, abs=1e-6)

    def test_bound_monotonicity_and_gap_sign(self):
        cfg, inst = tiny_wireless(seed=17, num_scenarios=4,
                                  risk=RiskSpec("AVaR", alpha=0.25))
        res = solve_two_stage(inst)
        etas = [row.eta for row in res.trace]
        for prev, nxt in zip(etas, etas[1:]):
            assert nxt >= prev - 1e-9
        for row in res.trace:
            assert row.rho >= row.eta - 1e-9

    def test_objective_cuts_are_valid_at_random_feasible_points(self):
        cfg, inst = tiny_wireless(seed=19, num_scenarios=3,
                                  risk=RiskSpec("AVaR", alpha=0.5))
        pool = CutPool(inst.probs)
        pool.add_risk_cut(np.ones(len(inst.scenarios)))
        anchor = np.array([1.0, 0.0])
        sols = [solve_second_stage_centralized(s, anchor)
                for s in inst.scenarios]
        pool.add_objective_cut(anchor,
                               np.array([s.value for s in sols]),
                               np.stack([s.subgradient for s in sols]))
        rng = np.random.default_rng(0)
        zs = list(feasible_configurations(2, 1))
        for zp in rng.choice(len(zs), size=5):
            z = zs[zp]
            bound = pool.scenario_bounds(z, -np.inf)
            truth = np.array([solve_second_stage_centralized(s, z).value
                              for s in inst.scenarios])
            assert np.all(bound <= truth + 1e-7)

    def test_trace_csv_round_trip(self):
        cfg, inst = tiny_wireless(seed=23, num_scenarios=2)
        res = solve_two_stage(inst)
        buf = io.StringIO()
        trace_to_csv(res.trace, buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "iteration,eta,rho,z,value_1,value_2"
        assert len(lines) == len(res.trace) + 1
        first = lines[1].split(",")
        assert int(first[0]) == 1
        assert float(first[2]) == pytest.approx(res.trace[0].rho, rel=1e-10)
        assert set(first[3]) <= {"0", "1"} and len(first[3]) == 2

    def test_iteration_cap_raises_with_trace(self):
        cfg, inst = tiny_wireless(seed=29, num_scenarios=4,
                                  risk=RiskSpec("AVaR", alpha=0.25))
        with pytest.raises(TwoStageIterationError) as err:
            solve_two_stage(inst, max_iterations=1)
        assert len(err.value.trace) == 1

    def test_value_cache_skips_repeat_scenario_solves(self, monkeypatch):
        cfg, inst = tiny_wireless(seed=31, num_scenarios=3,
                                  risk=RiskSpec("AVaR", alpha=0.5))
        calls = {"n": 0}
        real = two_stage.solve_second_stage_centralized

        def counting(scenario, z, tol=1e-10):
            calls["n"] += 1
            return real(scenario, z, tol=tol)

        monkeypatch.setattr(two_stage, "solve_second_stage_centralized",
                            counting)
        cache = {}
        first = solve_two_stage(inst, value_cache=cache)
        after_first = calls["n"]
        assert after_first > 0 and len(cache) > 0
        second = solve_two_stage(inst, value_cache=cache)
        assert calls["n"] == after_first
        assert second.risk_value == pytest.approx(first.risk_value, abs=0)

    def test_thread_count_env_does_not_change_results(self, monkeypatch):
        cfg, inst = tiny_wireless(seed=37, num_scenarios=4)
        base = solve_two_stage(inst)
        monkeypatch.setenv("SYSRISK_THREADS", "3")
        threaded = solve_two_stage(inst)
        assert threaded.risk_value == base.risk_value
        assert np.array_equal(threaded.scenario_values, base.scenario_values)

    def test_input_validation(self):
        cfg, inst = tiny_wireless(seed=41, num_scenarios=1)
        with pytest.raises(ValueError, match="eps_master"):
            solve_two_stage(inst, eps_master=0.0)
        with pytest.raises(ValueError, match="unknown mode"):
            solve_two_stage(inst, mode="magic")
        scenario = plain_scenario()
        with pytest.raises(ValueError, match="budget"):
            TwoStageInstance(num_first_stage=1, budget=1,
                             risk_spec=RiskSpec("Expectation"),
                             scenarios=[scenario])
        with pytest.raises(ValueError, match="scenario"):
            TwoStageInstance(num_first_stage=2, budget=1,
                             risk_spec=RiskSpec("Expectation"), scenarios=[])
