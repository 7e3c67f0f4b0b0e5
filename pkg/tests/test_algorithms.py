import itertools
import json
import math
import random

import numpy as np
import pytest

from owm.algorithms import (
    GreedyPolicy,
    LpGuidedPolicy,
    RandomPolicy,
    expected_offline_opt_iid,
    make_policy,
    offline_opt_bruteforce,
    offline_opt_for_instance,
    run_online,
    trace_to_csv,
    trace_to_json,
)
from owm.bounds import stochastic_lp_bound
from owm.instances import (
    Activity,
    Arrival,
    OnlineInstance,
    make_budget_block,
    make_budget_staged,
    make_cyclic_instance,
    make_iid_block,
    make_planted_cover_system,
    make_staged_instance,
)
from owm.valuations import (
    BudgetAdditiveValuation,
    CoverageValuation,
    ItemMultiset,
    ResourceLimitError,
)


def plain_instance(valuations, order):
    """Single-stage instance delivering ``order`` with no deactivation."""
    return OnlineInstance(list(valuations), Arrival("stages", stages=[list(order)]))


class TestGreedyPolicy:
    def test_block_first_item_ties_to_lowest(self):
        trace = run_online(make_budget_block(), "greedy", seed=0, record_steps=True)
        first = trace.steps[0]
        assert first.agent == 0 and first.gain == 2.0

    def test_block_welfare_five_any_order(self):
        for order in itertools.permutations(range(3)):
            inst = plain_instance(make_budget_block().agents, order)
            trace = run_online(inst, "greedy", seed=0)
            assert trace.welfare == 5.0

    def test_unique_argmax(self):
        a = CoverageValuation(3, [[0, 1], [2]])
        b = CoverageValuation(3, [[0], [2]])
        inst = plain_instance([a, b], [0])
        trace = run_online(inst, "greedy", seed=0, record_steps=True)
        assert trace.steps[0].agent == 0 and trace.steps[0].gain == 2.0

    def test_saturated_agent_never_beats_positive_gain(self):
        # agent 0 is at its budget once it holds two items
        val = BudgetAdditiveValuation([2, 2, 2, 2], 3)
        inst = plain_instance([val, val], [0, 1, 2, 3])
        trace = run_online(inst, "greedy", seed=0, record_steps=True)
        agents = [s.agent for s in trace.steps]
        assert agents == [0, 1, 0, 1]
        assert trace.welfare == 6.0

    def test_all_zero_gains_still_assigned(self):
        val = BudgetAdditiveValuation([2, 2], 1)
        inst = plain_instance([val], [0, 1])
        trace = run_online(inst, "greedy", seed=0, record_steps=True)
        assert trace.steps[1].agent == 0 and trace.steps[1].gain == 0.0
        assert trace.per_agent_items[0] == 2

    def test_no_active_agents_discards(self):
        inst = make_budget_block()
        inst.activity = Activity("fixed", deactivate_after=[0, 0])
        trace = run_online(inst, "greedy", seed=0, record_steps=True)
        assert all(s.agent is None for s in trace.steps)
        assert trace.welfare == 0.0

    def test_deactivated_agents_gain_zero(self):
        inst = make_budget_staged(2, seed=0)
        trace = run_online(inst, "greedy", seed=3, record_steps=True)
        for s in trace.steps:
            if s.agent is not None:
                assert trace.deact_stage[s.agent] >= s.stage

    def test_tie_break_validation(self):
        with pytest.raises(ValueError):
            GreedyPolicy(tie_break="alphabetical")
        with pytest.raises(ValueError):
            make_policy("optimal")


class TestRandomPolicy:
    def test_single_active_agent(self):
        val = BudgetAdditiveValuation([1], 1)
        inst = plain_instance([val], [0])
        trace = run_online(inst, "random", seed=5, record_steps=True)
        assert trace.steps[0].agent == 0

    def test_uniform_split(self):
        inst = make_budget_block()
        counts = [0, 0]
        n = 4000
        for seed in range(n):
            trace = run_online(inst, "random", seed=seed, record_steps=True)
            counts[trace.steps[0].agent] += 1
        # 3-sigma binomial band around n/2
        sigma = math.sqrt(n * 0.25)
        assert abs(counts[0] - n / 2) < 3 * sigma

    def test_seeded_reproducibility(self):
        inst = make_budget_staged(3, seed=0)
        t1 = run_online(inst, "random", seed=11, record_steps=True)
        t2 = run_online(inst, "random", seed=11, record_steps=True)
        assert trace_to_json(t1) == trace_to_json(t2)


class TestLpGuidedPolicy:
    def test_probability_one_allocates(self):
        y = np.array([[1.0]])
        policy = LpGuidedPolicy(y, p=[1.0], draws=1)
        inst = OnlineInstance([BudgetAdditiveValuation([1], 1)],
                              Arrival("iid", p=[1.0], draws=4))
        trace = run_online(inst, policy, seed=0, record_steps=True)
        assert all(s.agent == 0 for s in trace.steps)

    def test_zero_y_always_discards(self):
        policy = LpGuidedPolicy(np.zeros((2, 3)), p=[1 / 3] * 3, draws=3)
        trace = run_online(make_iid_block(), policy, seed=0, record_steps=True)
        assert all(s.agent is None for s in trace.steps)
        assert trace.welfare == 0.0

    def test_infeasible_y_rejected(self):
        with pytest.raises(ValueError):
            LpGuidedPolicy(np.array([[1.0], [0.5]]), p=[1.0], draws=1)
        with pytest.raises(ValueError):
            LpGuidedPolicy(np.array([[-0.5]]), p=[1.0], draws=1)

    def test_allocation_frequencies_converge(self):
        # allocation frequency of (agent, type) per arrival approaches y/draws
        val = BudgetAdditiveValuation([2, 2, 2], 3)
        res = stochastic_lp_bound([val, val], draws=3, p=[1 / 3] * 3)
        policy = LpGuidedPolicy(res.y, p=[1 / 3] * 3, draws=3)
        inst = make_iid_block()
        counts = np.zeros((2, 3))
        arrivals = np.zeros(3)
        n = 3000
        for seed in range(n):
            trace = run_online(inst, policy, seed=seed, record_steps=True)
            for s in trace.steps:
                arrivals[s.item] += 1
                if s.agent is not None:
                    counts[s.agent, s.item] += 1
        total_steps = 3 * n
        for i in range(2):
            for j in range(3):
                want = res.y[i, j] / 3
                got = counts[i, j] / total_steps
                sigma = math.sqrt(max(want * (1 - want), 1e-9) / total_steps)
                assert abs(got - want) < 4 * sigma + 1e-9

    def test_expected_one_step_gain_dominates_lp_rate(self):
        # from the empty state the guided rule's exact expected gain is at
        # least (LP - current welfare) / draws
        val = BudgetAdditiveValuation([2, 2, 2], 3)
        res = stochastic_lp_bound([val, val], draws=3, p=[1 / 3] * 3)
        p = np.array([1 / 3] * 3)
        empty = ItemMultiset({}, 3)
        gain = 0.0
        for j in range(3):
            for i in range(2):
                marginal = val.marginal_gain(empty, j)
                gain += p[j] * (res.y[i, j] / (p[j] * 3)) * marginal
        assert gain >= (res.value - 0.0) / 3 - 1e-9


class TestRunOnline:
    def test_deterministic_end_to_end(self):
        inst = make_budget_staged(4, seed=0)
        a = run_online(inst, "greedy", seed=9, record_steps=True)
        b = run_online(inst, "greedy", seed=9, record_steps=True)
        assert trace_to_json(a) == trace_to_json(b)

    def test_fast_and_generic_paths_agree(self):
        inst = make_budget_staged(3, seed=0)
        for seed in range(5):
            fast = run_online(inst, "greedy", seed=seed, record_steps=True)
            slow = run_online(inst, "greedy", seed=seed, record_steps=True,
                              use_fast_path=False)
            assert trace_to_json(fast) == trace_to_json(slow)
        for seed in range(5):
            fast = run_online(inst, GreedyPolicy(tie_break="random"), seed=seed,
                              record_steps=True)
            slow = run_online(inst, GreedyPolicy(tie_break="random"), seed=seed,
                              record_steps=True, use_fast_path=False)
            assert trace_to_json(fast) == trace_to_json(slow)

    def test_empty_arrival(self):
        inst = OnlineInstance([BudgetAdditiveValuation([1], 1)],
                              Arrival("stages", stages=[[]]))
        trace = run_online(inst, "greedy", seed=0)
        assert trace.welfare == 0.0

    def test_welfare_is_sum_of_gains(self):
        inst = make_budget_staged(3, seed=0)
        trace = run_online(inst, "greedy", seed=2, record_steps=True)
        assert trace.welfare == pytest.approx(sum(s.gain for s in trace.steps))
        welfare_so_far = 0.0
        for s in trace.steps:
            welfare_so_far += s.gain
            assert s.welfare == pytest.approx(welfare_so_far)

    def test_gains_nonnegative_for_monotone_valuations(self):
        base = make_cyclic_instance(make_planted_cover_system(2, 3, 2, seed=1))
        inst = make_staged_instance(base, t=3, seed=0)
        trace = run_online(inst, "greedy", seed=4, record_steps=True)
        assert all(s.gain >= 0 for s in trace.steps)

    def test_welfare_curve_recorded(self):
        trace = run_online(make_budget_block(), "greedy", seed=0,
                           record_welfare_curve=True)
        assert list(trace.welfare_curve) == [2.0, 4.0, 5.0]

    def test_stage_values_sum_to_welfare(self):
        inst = make_budget_staged(4, seed=0)
        trace = run_online(inst, "greedy", seed=7)
        by_stage = np.zeros(5)
        for agent in range(inst.num_agents):
            by_stage[trace.deact_stage[agent]] += trace.per_agent_value[agent]
        assert by_stage[1:].sum() == pytest.approx(trace.welfare)

    def test_allocation_reconstruction(self):
        inst = make_budget_block()
        trace = run_online(inst, "greedy", seed=0, record_steps=True)
        alloc = trace.allocation(inst)
        assert alloc.is_disjoint()
        assert alloc.items_assigned() == 3

    def test_per_stage_item_counts(self):
        inst = make_budget_staged(3, seed=0)
        trace = run_online(inst, "greedy", seed=5, record_steps=True)
        assert trace.stage_agent_items.shape == (3, 6)
        assert trace.stage_agent_items.sum() == 9  # every item assigned
        for s in trace.steps:
            assert trace.stage_agent_items[s.stage - 1, s.agent] >= 1
        assert (trace.stage_agent_items.sum(axis=0) == trace.per_agent_items).all()


class TestBruteForce:
    def test_budget_block_optimum(self):
        inst = make_budget_block()
        _, opt = offline_opt_bruteforce(inst.agents, [0, 1, 2])
        assert opt == 5.0

    def test_planted_instance_recovers_yes_value(self):
        base = make_cyclic_instance(make_planted_cover_system(2, 2, 2, seed=3))
        _, opt = offline_opt_bruteforce(base.valuations(), list(range(4)))
        assert opt == 2 * 4  # n * |U| = 8

    def test_single_agent_takes_everything(self):
        v = CoverageValuation(4, [[0], [1], [2, 3]])
        _, opt = offline_opt_bruteforce([v], [0, 1, 2])
        assert opt == 4.0

    def test_activity_mask_respected(self):
        val = BudgetAdditiveValuation([2, 2], 3)
        alloc, opt = offline_opt_bruteforce([val, val], [0, 1], allowed=[[0], [0]])
        assert opt == 3.0
        assert alloc.bundles[1].size() == 0

    def test_no_agent_allowed_item_skipped(self):
        val = BudgetAdditiveValuation([2], 3)
        _, opt = offline_opt_bruteforce([val], [0], allowed=[[]])
        assert opt == 0.0

    def test_limit_enforced(self):
        val = BudgetAdditiveValuation([1] * 10, 3)
        with pytest.raises(ResourceLimitError):
            offline_opt_bruteforce([val] * 4, list(range(10)), limit=1000)

    def test_staged_budget_offline_opt_is_five_per_stage(self):
        inst = make_budget_staged(2, seed=0)
        for seed in (0, 1, 2):
            _, opt = offline_opt_for_instance(inst, seed=seed)
            assert opt == 10.0

    def test_expected_iid_opt_block(self):
        val = BudgetAdditiveValuation([2, 2, 2], 3)
        assert expected_offline_opt_iid([val, val], [1 / 3] * 3, 3) == pytest.approx(5.0)

    def test_expected_iid_opt_limit(self):
        val = BudgetAdditiveValuation([1] * 4, 3)
        with pytest.raises(ResourceLimitError):
            expected_offline_opt_iid([val], [0.25] * 4, 10, limit=100)


class TestHalfCompetitiveness:
    def test_greedy_half_of_optimum_all_orders(self):
        rng = random.Random(17)
        for trial in range(20):
            m = rng.randint(2, 4)
            n = rng.randint(1, 3)
            vals = []
            for _ in range(n):
                if rng.random() < 0.5:
                    u = rng.randint(2, 6)
                    vals.append(CoverageValuation(
                        u, [rng.sample(range(u), rng.randint(0, u)) for _ in range(m)]))
                else:
                    budget = rng.uniform(1, 4)
                    vals.append(BudgetAdditiveValuation(
                        [rng.uniform(0, budget) for _ in range(m)], budget))
            _, opt = offline_opt_bruteforce(vals, list(range(m)))
            for order in itertools.permutations(range(m)):
                trace = run_online(plain_instance(vals, order), "greedy", seed=0)
                assert trace.welfare >= 0.5 * opt - 1e-9


class TestTraceExport:
    def test_csv(self):
        trace = run_online(make_budget_block(), "greedy", seed=0, record_steps=True)
        text = trace_to_csv(trace)
        lines = text.strip().splitlines()
        assert lines[0] == "step,item,agent,gain,welfare"
        assert len(lines) == 4
        assert lines[1].startswith("0,0,0,2.0")

    def test_csv_requires_steps(self):
        trace = run_online(make_budget_block(), "greedy", seed=0)
        with pytest.raises(ValueError):
            trace_to_csv(trace)

    def test_json_serializable(self):
        trace = run_online(make_budget_block(), "greedy", seed=0, record_steps=True)
        blob = json.dumps(trace_to_json(trace), sort_keys=True)
        assert json.loads(blob)["welfare"] == 5.0
