import math

import numpy as np
import pytest

import gearbandit as gb
from gearbandit.joint import (default_mc_horizon, enumeration_size,
                              joint_consumption, joint_cost, joint_states)
from conftest import make_m1


def m1_pair(budget):
    m1 = make_m1()
    return gb.JointInstance(projects=(m1, m1), budget=budget)


def joint_vi_oracle(instance, sweeps=400):
    """Independent optimum: value iteration with tensor-contracted expectations."""
    shape = tuple(m.n_states for m in instance.projects)
    states = joint_states(instance)
    feas = {s: gb.feasible_actions(instance, s) for s in states}
    v = np.zeros(shape)
    beta = instance.discount
    for _ in range(sweeps):
        new = np.empty(shape)
        for s in states:
            best = math.inf
            for a in feas[s]:
                exp = v
                for axis, (m, s_l, a_l) in enumerate(
                        zip(instance.projects, s, a)):
                    row = m.transitions[a_l][s_l - 1]
                    exp = np.tensordot(row, exp, axes=([0], [0]))
                best = min(best, joint_cost(instance, s, a) + beta * float(exp))
            new[tuple(x - 1 for x in s)] = best
        if np.max(np.abs(new - v)) < 1e-13:
            v = new
            break
        v = new
    return {s: float(v[tuple(x - 1 for x in s)]) for s in states}


class TestInstance:
    def test_valid_pair(self):
        assert gb.validate_instance(m1_pair(1.0)) == []

    def test_discount_mismatch_reported(self):
        m1 = make_m1()
        other = m1.with_discount(0.6)
        bad = gb.JointInstance(projects=(m1, other), budget=5.0)
        assert any(v.code == "discount-mismatch" for v in gb.validate_instance(bad))

    def test_passive_infeasibility_reported(self):
        m = gb.MultiGearModel(
            n_states=1, n_gears=2, discount=0.5,
            holding_cost=[[1.0, 0.0]], resource_use=[[2.0, 3.0]],
            transitions=[[[1.0]], [[1.0]]])
        bad = gb.JointInstance(projects=(m, m), budget=3.0)
        assert any(v.code == "passive-infeasible" for v in gb.validate_instance(bad))

    def test_feasibility_filter(self):
        inst = m1_pair(1.0)
        acts = gb.feasible_actions(inst, (1, 1))
        assert acts == [(0, 0), (0, 1), (1, 0)]


class TestExactDp:
    def test_single_project_reduces_to_zero_price_solve(self):
        m = gb.random_model(4, 3, 3)
        inst = gb.JointInstance(projects=(m,), budget=float(m.resource_use.max()) + 1)
        dp = gb.solve_joint_dp(inst)
        sol = gb.solve_lambda_price(m, 0.0)
        for s in range(1, 4):
            assert dp.value_of((s,)) == pytest.approx(float(sol.values[s - 1]),
                                                      abs=1e-9)

    def test_slack_budget_decouples(self):
        inst = m1_pair(2.0)
        dp = gb.solve_joint_dp(inst)
        sols = [gb.solve_lambda_price(m, 0.0) for m in inst.projects]
        for s in joint_states(inst):
            expected = sum(float(sol.values[x - 1]) for sol, x in zip(sols, s))
            assert dp.value_of(s) == pytest.approx(expected, abs=1e-9)

    def test_binding_budget_matches_independent_oracle(self):
        inst = m1_pair(1.0)
        dp = gb.solve_joint_dp(inst)
        oracle = joint_vi_oracle(inst)
        for s in joint_states(inst):
            assert dp.value_of(s) == pytest.approx(oracle[s], abs=1e-9)

    def test_m1_pair_regression_value(self):
        assert gb.solve_joint_dp(m1_pair(1.0)).value_of((1, 1)) == pytest.approx(2.0)

    def test_random_instances_match_oracle(self):
        for seed in range(4):
            inst = gb.random_instance(seed, 2, 3, 2, budget_fraction=0.4)
            dp = gb.solve_joint_dp(inst)
            oracle = joint_vi_oracle(inst)
            for s in joint_states(inst):
                assert dp.value_of(s) == pytest.approx(oracle[s], abs=1e-8)

    def test_three_projects_match_oracle(self):
        inst = gb.random_instance(11, 3, 2, 2, budget_fraction=0.5)
        dp = gb.solve_joint_dp(inst)
        oracle = joint_vi_oracle(inst)
        for s in joint_states(inst):
            assert dp.value_of(s) == pytest.approx(oracle[s], abs=1e-8)

    def test_enumeration_cap_enforced(self):
        inst = m1_pair(1.0)
        with pytest.raises(gb.EnumerationCapError) as err:
            gb.solve_joint_dp(inst, cap=enumeration_size(inst) - 1)
        assert err.value.size == enumeration_size(inst)


class TestLagrangianBound:
    def test_slack_budget_gives_zero_multiplier(self):
        inst = m1_pair(10.0)
        dual = gb.lagrangian_bound(inst, (1, 1))
        assert dual.lambda_star == 0.0
        expected = sum(float(gb.solve_lambda_price(m, 0.0).values[0])
                       for m in inst.projects)
        assert dual.bound == pytest.approx(expected, abs=1e-9)

    def test_bound_below_exact_optimum(self):
        for seed in range(5):
            inst = gb.random_instance(seed, 2, 3, 2, budget_fraction=0.35)
            dp = gb.solve_joint_dp(inst)
            for initial in [(1, 1), (2, 3)]:
                dual = gb.lagrangian_bound(inst, initial)
                assert dual.bound <= dp.value_of(initial) + 1e-7

    def test_bound_is_dual_objective_at_reported_multiplier(self):
        inst = m1_pair(1.0)
        dual = gb.lagrangian_bound(inst, (1, 2))
        mass = inst.budget / (1.0 - inst.discount)
        assert dual.bound == pytest.approx(
            sum(dual.per_project_values) - dual.lambda_star * mass, abs=1e-12)

    def test_dual_objective_concave_in_price(self):
        inst = m1_pair(1.0)
        mass = inst.budget / (1.0 - inst.discount)

        def dual_value(lam):
            return sum(float(gb.solve_lambda_price(m, lam).values[0])
                       for m in inst.projects) - lam * mass

        a, b, c = dual_value(0.2), dual_value(0.7), dual_value(1.2)
        assert b >= 0.5 * (a + c) - 1e-9


class TestDownshiftPolicy:
    def test_slack_budget_keeps_top_gears(self):
        inst = m1_pair(10.0)
        tables = [gb.run_ds(m)[0] for m in inst.projects]
        assert gb.downshift_policy_action(inst, tables, (1, 1)) == (1, 1)

    def test_worked_example_downshifts_lowest_index(self):
        inst = m1_pair(1.0)
        tables = [gb.run_ds(m)[0] for m in inst.projects]
        assert gb.downshift_policy_action(inst, tables, (1, 2)) == (0, 1)

    def test_nonpositive_index_downshifted_despite_slack(self):
        losing = gb.MultiGearModel(
            n_states=1, n_gears=2, discount=0.5,
            holding_cost=[[0.0, 1.0]], resource_use=[[0.0, 1.0]],
            transitions=[[[1.0]], [[1.0]]])
        inst = gb.JointInstance(projects=(losing,), budget=10.0)
        table, _ = gb.run_ds(losing)
        assert table.lookup(1, 1) < 0
        assert gb.downshift_policy_action(inst, [table], (1,)) == (0,)

    def test_ties_break_to_lowest_project(self):
        inst = m1_pair(1.0)
        tables = [gb.run_ds(m)[0] for m in inst.projects]
        # both projects in state 1 share index 1.0; project 0 yields first
        assert gb.downshift_policy_action(inst, tables, (1, 1)) == (0, 1)

    def test_actions_always_feasible(self):
        for seed in range(5):
            inst = gb.random_instance(seed, 3, 3, 3, budget_fraction=0.3)
            tables = [gb.run_ds(m)[0] for m in inst.projects]
            policy = gb.downshift_policy(inst, tables)
            for s in joint_states(inst):
                action = policy(s)
                assert inst.fits(joint_consumption(inst, s, action))


class TestTwoGearReduction:
    def test_two_gear_selection_is_greedy_prefix(self):
        rng = np.random.default_rng(0)
        for seed in range(6):
            inst = gb.random_instance(seed, 4, 3, 2, budget_fraction=0.45)
            tables = [gb.run_ds(m)[0] for m in inst.projects]
            for _ in range(20):
                state = tuple(int(rng.integers(1, m.n_states + 1))
                              for m in inst.projects)
                action = gb.downshift_policy_action(inst, tables, state)
                chosen = {l for l, a in enumerate(action) if a == 1}

                candidates = sorted(
                    range(len(inst.projects)),
                    key=lambda l: (-tables[l].lookup(state[l], 1), -l))
                passive_load = joint_consumption(
                    inst, state, (0,) * len(inst.projects))
                expected = set()
                load = passive_load
                for l in candidates:
                    if tables[l].lookup(state[l], 1) <= 0:
                        break
                    m = inst.projects[l]
                    extra = (m.resource_use[state[l] - 1, 1]
                             - m.resource_use[state[l] - 1, 0])
                    if not inst.fits(load + extra):
                        break
                    load += extra
                    expected.add(l)
                assert chosen == expected


class TestEvaluation:
    def test_all_passive_decouples(self):
        inst = m1_pair(1.0)
        value = gb.evaluate_joint_policy(inst, gb.all_passive_policy(inst), (1, 2))
        per = [gb.evaluate_policy(m, gb.StationaryPolicy.uniform(m, 0)).cost
               for m in inst.projects]
        assert value.value == pytest.approx(float(per[0][0] + per[1][1]), abs=1e-9)

    def test_sandwich_on_worked_pair(self):
        inst = m1_pair(1.0)
        tables = [gb.run_ds(m)[0] for m in inst.projects]
        policy = gb.downshift_policy(inst, tables)
        dual = gb.lagrangian_bound(inst, (1, 1))
        optimum = gb.solve_joint_dp(inst).value_of((1, 1))
        heuristic = gb.evaluate_joint_policy(inst, policy, (1, 1)).value
        assert dual.bound <= optimum + 1e-7
        assert optimum <= heuristic + 1e-9

    def test_mc_agrees_with_exact(self):
        inst = m1_pair(1.0)
        tables = [gb.run_ds(m)[0] for m in inst.projects]
        policy = gb.downshift_policy(inst, tables)
        exact = gb.evaluate_joint_policy(inst, policy, (2, 2)).value
        mc = gb.evaluate_joint_policy(inst, policy, (2, 2), mode="mc",
                                      replications=800, seed=5)
        slack = 3.0 * (mc.stderr or 0.0) + 1e-5
        assert abs(mc.value - exact) <= slack

    def test_mc_deterministic_per_seed(self):
        inst = m1_pair(1.0)
        policy = gb.myopic_policy(inst)
        a = gb.evaluate_joint_policy(inst, policy, (1, 1), mode="mc",
                                     replications=50, seed=11)
        b = gb.evaluate_joint_policy(inst, policy, (1, 1), mode="mc",
                                     replications=50, seed=11)
        assert a.value == b.value

    def test_horizon_controls_truncation_bias(self):
        inst = m1_pair(1.0)
        horizon = default_mc_horizon(inst, bias=1e-6)
        worst = sum(float(np.max(np.abs(m.holding_cost))) for m in inst.projects)
        assert inst.discount ** horizon * worst / (1 - inst.discount) < 1e-6

    def test_infeasible_policy_rejected(self):
        inst = m1_pair(1.0)
        with pytest.raises(gb.GearBanditError):
            gb.evaluate_joint_policy(inst, lambda s: (1, 1), (1, 1))

    def test_random_feasible_policy_is_stationary_and_seeded(self):
        inst = m1_pair(1.0)
        pol_a = gb.random_feasible_policy(inst, seed=3)
        pol_b = gb.random_feasible_policy(inst, seed=3)
        for s in joint_states(inst):
            assert pol_a(s) == pol_b(s)
            assert inst.fits(joint_consumption(inst, s, pol_a(s)))
