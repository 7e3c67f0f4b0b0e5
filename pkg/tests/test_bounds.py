import itertools
import math
import random

import numpy as np
import pytest
from scipy.optimize import linprog

from lp_reference import exact_lp_max
from owm.bounds import (
    CoverBoundParams,
    LinearProgram,
    ResourceLimitError,
    build_budget_lp,
    budget_lp_from_instance,
    cover_value_bound,
    enumerate_multisets,
    export_lp_text,
    harmonic_item_bound,
    harmonic_item_sum,
    lp_residual,
    solve_lp,
    staged_integral_closed_form,
    staged_integral_quadrature,
    staged_value_bound,
    stochastic_lp_bound,
    value_envelope,
)
from owm.instances import make_budget_block, make_budget_staged, materialize_activity
from owm.valuations import BudgetAdditiveValuation, CoverageValuation


class TestSimplexBasics:
    def test_single_variable(self):
        sol = solve_lp(LinearProgram([1.0], [[1.0]], [1.0]))
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(1.0, abs=1e-12)
        assert sol.residual <= 1e-7

    def test_two_variables(self):
        # max 3x + 2y s.t. x + y <= 4, x <= 2  ->  x=2, y=2, obj=10
        sol = solve_lp(LinearProgram([3, 2], [[1, 1], [1, 0]], [4, 2]))
        assert sol.objective == pytest.approx(10.0, abs=1e-9)
        assert sol.values == pytest.approx([2.0, 2.0], abs=1e-9)

    def test_negative_rhs_feasible(self):
        # x >= 1 encoded as -x <= -1, maximize -x  ->  x=1, obj=-1
        sol = solve_lp(LinearProgram([-1.0], [[-1.0]], [-1.0]))
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(-1.0, abs=1e-9)

    def test_equality_via_row_pair(self):
        # x + y = 2, max x + 2y  ->  y=2
        lp = LinearProgram([1, 2], [[1, 1], [-1, -1]], [2, -2])
        sol = solve_lp(lp)
        assert sol.objective == pytest.approx(4.0, abs=1e-9)
        assert sol.residual <= 1e-7

    def test_infeasible(self):
        # x <= 1 and x >= 2
        lp = LinearProgram([1.0], [[1.0], [-1.0]], [1.0, -2.0])
        assert solve_lp(lp).status == "infeasible"

    def test_unbounded(self):
        lp = LinearProgram([1.0, 0.0], [[0.0, 1.0]], [1.0])
        assert solve_lp(lp).status == "unbounded"

    def test_degenerate_cycling_prone(self):
        # Beale's example: naive most-negative pivoting can cycle
        lp = LinearProgram(
            [0.75, -150.0, 0.02, -6.0],
            [[0.25, -60.0, -0.04, 9.0],
             [0.5, -90.0, -0.02, 3.0],
             [0.0, 0.0, 1.0, 0.0]],
            [0.0, 0.0, 1.0],
        )
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(0.05, abs=1e-9)

    def test_zero_objective(self):
        sol = solve_lp(LinearProgram([0.0, 0.0], [[1.0, 1.0]], [3.0]))
        assert sol.status == "optimal" and sol.objective == 0.0

    def test_dimension_validation(self):
        with pytest.raises(ValueError):
            LinearProgram([1.0], [[1.0, 2.0]], [1.0])


class TestSimplexAgainstExactRational:
    def test_random_small_lps(self):
        rng = random.Random(99)
        solved = 0
        for trial in range(60):
            n = rng.randint(1, 4)
            m = rng.randint(1, 3)
            c = [rng.randint(-3, 5) for _ in range(n)]
            a = [[rng.randint(-3, 5) for _ in range(n)] for _ in range(m)]
            b = [rng.randint(-2, 6) for _ in range(m)]
            # bounding row keeps the region compact so a vertex optimum exists
            a.append([1] * n)
            b.append(rng.randint(1, 8))
            status, exact = exact_lp_max(c, a, b)
            sol = solve_lp(LinearProgram(c, a, b))
            assert sol.status == status, (c, a, b)
            if status == "optimal":
                solved += 1
                assert sol.objective == pytest.approx(float(exact), abs=1e-7)
                assert sol.residual <= 1e-7
        assert solved >= 20

    def test_block_lp_exact_rational(self):
        model = build_budget_lp([[2, 2, 2], [2, 2, 2]], [3, 3])
        status, exact = exact_lp_max(
            model.lp.c.tolist(),
            model.lp.a.tolist(),
            model.lp.b.tolist(),
        )
        assert status == "optimal" and float(exact) == 6.0


class TestSimplexAgainstScipy:
    def test_random_medium_lps(self):
        rng = np.random.default_rng(4)
        for trial in range(30):
            n = int(rng.integers(2, 8))
            m = int(rng.integers(2, 6))
            c = rng.uniform(-2, 4, n)
            a = rng.uniform(-2, 4, (m, n))
            b = rng.uniform(0.5, 6, m)
            lp = LinearProgram(c, a, b)
            mine = solve_lp(lp)
            ref = linprog(-c, A_ub=a, b_ub=b, bounds=(0, None), method="highs")
            status_map = {0: "optimal", 2: "infeasible", 3: "unbounded"}
            assert mine.status == status_map[ref.status]
            if mine.status == "optimal":
                assert mine.objective == pytest.approx(-ref.fun, abs=1e-7)


class TestBudgetLp:
    def test_block_value_six(self):
        model = build_budget_lp([[2, 2, 2], [2, 2, 2]], [3, 3])
        assert model.lp.num_vars == 6 and model.lp.num_rows == 5
        sol = solve_lp(model.lp)
        assert sol.objective == pytest.approx(6.0, abs=1e-9)

    def test_block_pooled_items_same_value(self):
        model = build_budget_lp([[2], [2]], [3, 3], item_counts=[3])
        sol = solve_lp(model.lp)
        assert sol.objective == pytest.approx(6.0, abs=1e-9)

    def test_single_agent_single_item(self):
        model = build_budget_lp([[1.0]], [1.0])
        assert solve_lp(model.lp).objective == pytest.approx(1.0, abs=1e-12)

    def test_block_integral_optimum_is_five(self):
        # brute force over the 8 integral assignments; every one is <= LP
        val = BudgetAdditiveValuation([2, 2, 2], 3)
        best = 0.0
        for assign in itertools.product(range(2), repeat=3):
            cnt = [assign.count(0), assign.count(1)]
            w = sum(min(3.0, 2.0 * c) for c in cnt)
            best = max(best, w)
            assert w <= 6.0 + 1e-9
        assert best == 5.0
        assert best / 6.0 == pytest.approx(5 / 6)

    def test_bids_above_budget_clamped(self):
        model = build_budget_lp([[10.0]], [3.0])
        assert solve_lp(model.lp).objective == pytest.approx(3.0, abs=1e-9)

    def test_negative_bids_rejected(self):
        with pytest.raises(ValueError):
            build_budget_lp([[-1.0]], [1.0])

    def test_solution_matrix_layout(self):
        model = build_budget_lp([[2, 0], [0, 2]], [3, 3])
        sol = solve_lp(model.lp)
        x = model.solution_matrix(sol.values)
        assert x.shape == (2, 2)
        assert x[0, 1] == 0.0 and x[1, 0] == 0.0


class TestStagedBudgetLp:
    @pytest.mark.parametrize("t", [1, 2, 3, 5])
    def test_staged_lp_solves_to_six_t(self, t):
        # the standard relaxation saturates both budgets of every pair
        inst = make_budget_staged(t, seed=1)
        deact = materialize_activity(inst, np.random.default_rng(0))
        model = budget_lp_from_instance(inst, deact)
        sol = solve_lp(model.lp)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(6.0 * t, abs=1e-7)

    def test_value_is_schedule_independent(self):
        inst = make_budget_staged(3, seed=1)
        vals = []
        for seed in (0, 1, 2):
            deact = materialize_activity(inst, np.random.default_rng(seed))
            vals.append(solve_lp(budget_lp_from_instance(inst, deact).lp).objective)
        assert max(vals) - min(vals) < 1e-7

    def test_block_instance_lp(self):
        inst = make_budget_block()
        deact = materialize_activity(inst, np.random.default_rng(0))
        model = budget_lp_from_instance(inst, deact)
        assert solve_lp(model.lp).objective == pytest.approx(6.0, abs=1e-9)

    def test_pooling_matches_scipy_on_full_lp(self):
        t = 3
        inst = make_budget_staged(t, seed=1)
        deact = materialize_activity(inst, np.random.default_rng(5))
        pooled = solve_lp(budget_lp_from_instance(inst, deact).lp).objective
        # reference: one variable per (agent, unit item), no pooling
        n, items = inst.num_agents, 3 * t
        stage_of = np.repeat(np.arange(1, t + 1), 3)
        pairs = [(a, i) for a in range(n) for i in range(items) if stage_of[i] <= deact[a]]
        c = np.full(len(pairs), -2.0)
        a_ub = np.zeros((n + items, len(pairs)))
        b_ub = np.concatenate([np.full(n, 3.0), np.ones(items)])
        for col, (a, i) in enumerate(pairs):
            a_ub[a, col] = 2.0
            a_ub[n + i, col] = 1.0
        ref = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs")
        assert pooled == pytest.approx(-ref.fun, abs=1e-7)


class TestStochasticLp:
    def test_duplicate_copies_worthless(self):
        v = CoverageValuation(1, [[0]])
        res = stochastic_lp_bound([v], draws=2, p=[1.0])
        assert res.value == pytest.approx(1.0, abs=1e-9)
        assert res.valid_bound

    def test_block_value_five(self):
        val = BudgetAdditiveValuation([2, 2, 2], 3)
        res = stochastic_lp_bound([val, val], draws=3, p=[1 / 3] * 3)
        assert res.value == pytest.approx(5.0, abs=1e-7)
        assert res.solution.residual <= 1e-7
        # expected copies are feasible for the arrival: at most p_j * draws
        assert np.all(res.y.sum(axis=0) <= 1.0 + 1e-7)

    def test_block_value_against_scipy(self):
        val = BudgetAdditiveValuation([2, 2, 2], 3)
        res = stochastic_lp_bound([val, val], draws=3, p=[1 / 3] * 3)
        ms = res.multisets
        n = 2
        nv = n * len(ms)
        c = np.array([-min(3.0, 2.0 * sum(s)) for _ in range(n) for s in ms])
        a_ub, b_ub = [], []
        for j in range(3):
            row = np.array([s[j] for _ in range(n) for s in ms], dtype=float)
            a_ub.append(row)
            b_ub.append(1.0)
        a_eq = np.zeros((n, nv))
        for i in range(n):
            a_eq[i, i * len(ms):(i + 1) * len(ms)] = 1.0
        ref = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                      A_eq=a_eq, b_eq=np.ones(n), bounds=(0, None), method="highs")
        assert res.value == pytest.approx(-ref.fun, abs=1e-7)

    def test_small_cap_flagged_heuristic(self):
        val = BudgetAdditiveValuation([2, 2, 2], 3)
        res = stochastic_lp_bound([val, val], draws=3, p=[1 / 3] * 3, size_cap=1)
        assert not res.valid_bound

    def test_variable_limit(self):
        val = BudgetAdditiveValuation([1] * 8, 3)
        with pytest.raises(ResourceLimitError):
            stochastic_lp_bound([val], draws=12, p=[1 / 8] * 8, max_variables=1000)

    def test_multiset_enumeration(self):
        ms = enumerate_multisets(3, 3)
        assert len(ms) == 20  # C(6, 3)
        assert ms[0] == (0, 0, 0)
        assert all(sum(s) <= 3 for s in ms)


class TestValueEnvelope:
    def test_pinned_values(self):
        assert value_envelope(0.5) == 1.0
        assert value_envelope(1.0) == 2.0
        assert value_envelope(2.0) == 3.0
        assert value_envelope(5.0) == 3.0
        assert value_envelope(math.inf) == 3.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            value_envelope(-0.1)

    def test_concavity_on_grid(self):
        xs = np.linspace(0, 4, 81)
        for a in xs:
            for b in xs:
                mid = value_envelope((a + b) / 2)
                assert mid >= (value_envelope(a) + value_envelope(b)) / 2 - 1e-12


class TestStagedValueBound:
    def test_integral_closed_form_value(self):
        expected = 3 - 1.5 * (math.exp(-2 / 3) + math.exp(-4 / 3))
        assert staged_integral_closed_form() == pytest.approx(expected, abs=0)
        assert staged_integral_closed_form() == pytest.approx(1.834478614277522, abs=1e-12)

    def test_quadrature_matches_closed_form(self):
        assert abs(staged_integral_quadrature() - staged_integral_closed_form()) <= 1e-9

    def test_ratio(self):
        b = staged_value_bound(10)
        assert b.ratio == pytest.approx(0.6114928714258406, abs=1e-12)
        assert b.ratio < 0.612

    def test_t1_saturated(self):
        b = staged_value_bound(1)
        assert b.discrete_sum == 3.0
        assert b.pair_discrete_sum == 6.0

    def test_discrete_sum_converges_to_integral(self):
        b = staged_value_bound(10_000)
        assert abs(b.discrete_sum / b.t - b.integral_value) <= 0.02
        # the per-stage average approaches the integral from above
        assert b.discrete_sum / b.t >= b.integral_value

    def test_invalid_t(self):
        with pytest.raises(ValueError):
            staged_value_bound(0)


class TestHarmonicBound:
    def test_pinned_value(self):
        assert harmonic_item_bound(9, 10, 5) == pytest.approx(9 * math.log(2), abs=1e-12)

    def test_exact_sum_below_bound(self):
        for t in (3, 7, 10):
            for j in range(1, t):
                assert harmonic_item_sum(9, t, j) <= harmonic_item_bound(9, t, j) + 1e-12

    def test_first_stage_sum(self):
        assert harmonic_item_sum(9, 10, 1) == pytest.approx(0.9, abs=1e-12)

    def test_zero_stages(self):
        assert harmonic_item_sum(5, 10, 0) == 0.0
        assert harmonic_item_bound(5, 10, 0) == 0.0

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            harmonic_item_bound(9, 10, 10)
        with pytest.raises(ValueError):
            harmonic_item_sum(9, 10, 11)


class TestCoverValueBound:
    def test_zero_sets_zero_value(self):
        params = CoverBoundParams(k=5, epsilon=0.0, c0=2.0, universe_size=100)
        assert cover_value_bound(params, 0).raw == 0.0

    def test_k_sets_approach_one_minus_inv_e(self):
        k = 2000
        params = CoverBoundParams(k=k, epsilon=0.01, c0=2.0, universe_size=1)
        raw = cover_value_bound(params, k).raw
        assert raw == pytest.approx(1 - 1 / math.e + 0.01, abs=1e-3)

    def test_tangent_dominates_smooth_curve(self):
        params = CoverBoundParams(k=50, epsilon=0.02, c0=3.0, universe_size=10)
        mu = 30.0
        for ell in np.linspace(0, params.c0 * params.k, 200):
            curves = cover_value_bound(params, float(ell), mu=mu)
            assert curves.tangent >= min(curves.smooth, params.universe_size) - 1e-9

    def test_smooth_dominates_raw_for_large_k(self):
        # doubling the slack absorbs the power-vs-exponential gap once k >> c0/eps
        params = CoverBoundParams(k=500, epsilon=0.05, c0=3.0, universe_size=10)
        for ell in np.linspace(0, params.c0 * params.k, 300):
            curves = cover_value_bound(params, float(ell))
            assert curves.smooth >= curves.raw - 1e-9

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            CoverBoundParams(k=0, epsilon=0.1, c0=2.0, universe_size=5)
        params = CoverBoundParams(k=3, epsilon=0.1, c0=2.0, universe_size=5)
        with pytest.raises(ValueError):
            cover_value_bound(params, -1.0)


class TestLpExport:
    def test_text_format(self):
        lp = LinearProgram([1.0, 2.0], [[1.0, 1.0]], [3.0], names=["u", "v"])
        text = export_lp_text(lp)
        lines = text.splitlines()
        assert lines[0] == "max: +1 u +2 v"
        assert lines[1] == "+1 u +1 v <= 3"
        assert lines[-1] == "x >= 0"

    def test_residual_helper(self):
        lp = LinearProgram([1.0], [[1.0]], [1.0])
        assert lp_residual(lp, np.array([2.0])) == pytest.approx(1.0)
        assert lp_residual(lp, np.array([0.5])) == 0.0
