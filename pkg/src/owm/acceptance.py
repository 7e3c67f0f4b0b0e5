"""End-to-end verification suite.

Each check pins one quantitative claim the instance families and bounds are
built to exhibit, at fixed tolerances, and reports auditable verdicts.  The
CLI's ``verify`` subcommand and the test suite both run these functions; exit
status is green only when every requested verdict passes.

Two checks are expected to stay red at desk scale and say so in their notes:
the staged budget LP target (the standard relaxation provably solves to 6t,
twice the 3t target, for every schedule -- the 3t figure is inconsistent
with the building block's own value of 6 at t=1) and the greedy side of the
0.612 online ceiling at t=100 (0.612 is the asymptotic constant; the exact
finite-horizon ceiling at t=100 is 0.6165 and greedy empirically sits near
0.6146, between the two).  The sound finite-horizon inequalities are checked
alongside and pass.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .algorithms import offline_opt_bruteforce, run_online
from .bounds import (
    budget_lp_from_instance,
    solve_lp,
    staged_value_bound,
    stochastic_lp_bound,
)
from .harness import (
    ExperimentSpec,
    Verdict,
    check_eq,
    check_ge,
    check_le,
    run_experiment,
    verify_greedy_step_all_states,
    verify_harmonic_bound,
    verify_iid_greedy,
)
from .instances import (
    Arrival,
    OnlineInstance,
    make_budget_block,
    make_cyclic_instance,
    make_planted_cover_system,
    make_staged_instance,
    materialize_activity,
    staged_yes_allocation,
)
from .valuations import (
    BudgetAdditiveValuation,
    CoverageValuation,
    TabularValuation,
    cap_extension,
    check_property,
    recheck_witness,
)

SCALES = ("desk", "quick")


@dataclass
class CriterionResult:
    name: str
    passed: bool
    runtime_s: float
    verdicts: List[Verdict]
    notes: List[str] = field(default_factory=list)
    runtime_limit_s: Optional[float] = None

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "runtime_s": self.runtime_s,
            "runtime_limit_s": self.runtime_limit_s,
            "verdicts": [v.to_json() for v in self.verdicts],
            "notes": list(self.notes),
        }

    def summary_line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name} ({self.runtime_s:.2f}s)"


def _finish(name: str, started: float, verdicts: List[Verdict],
            notes: List[str], limit: Optional[float], scale: str) -> CriterionResult:
    runtime = time.perf_counter() - started
    if limit is not None and scale == "desk":
        verdicts = verdicts + [check_le("runtime seconds", runtime, limit, 0.0)]
    passed = all(v.passed for v in verdicts)
    return CriterionResult(name, passed, runtime, verdicts, notes, limit)


def check_block_exact(scale: str = "desk", seed: int = 0) -> CriterionResult:
    """Building block: LP value 6 (tolerance 1e-9) and integral optimum 5, exact."""
    t0 = time.perf_counter()
    inst = make_budget_block()
    deact = materialize_activity(inst, np.random.default_rng(0))
    sol = solve_lp(budget_lp_from_instance(inst, deact).lp)
    _, opt = offline_opt_bruteforce(inst.agents, [0, 1, 2])
    verdicts = [
        check_eq("block LP value equals 6", sol.objective, 6.0, 1e-9),
        check_eq("block brute-force optimum equals 5", opt, 5.0, 0.0),
        check_le("block LP residual", sol.residual, 1e-7, 0.0),
    ]
    return _finish("building-block exactness (LP 6, integral 5)", t0, verdicts, [],
                   1.0, scale)


def check_staged_budget_lp(scale: str = "desk", seed: int = 0) -> CriterionResult:
    """Staged budget LP against the 3t target (expected red: it solves to 6t)."""
    t0 = time.perf_counter()
    ts = (1, 5, 100) if scale == "desk" else (1, 5, 20)
    verdicts: List[Verdict] = []
    notes: List[str] = []
    from .instances import make_budget_staged

    for t in ts:
        inst = make_budget_staged(t, seed)
        deact = materialize_activity(inst, np.random.default_rng([seed, 0]))
        sol = solve_lp(budget_lp_from_instance(inst, deact).lp)
        verdicts.append(check_eq(f"staged LP value at t={t} equals 3t={3 * t}",
                                 sol.objective, 3.0 * t, 1e-9))
        notes.append(f"t={t}: solved LP value = {sol.objective:.9g} (= 6t)")
    notes.append(
        "analysis: the standard relaxation saturates both budget-3 agents of "
        "every pair from its own stage (x=1/2 per item is feasible), so its "
        "optimum is 6t for every deactivation schedule; verified here and "
        "against an external solver. A 3t target cannot hold together with "
        "the t=1 block value of 6. The 0.612 ceiling is a ratio statement "
        "and is unaffected: ceiling/LP -> 0.6115 with both sides doubled.")
    return _finish("staged budget LP equals 3t", t0, verdicts, notes, 10.0, scale)


def check_staged_integral(scale: str = "desk", seed: int = 0) -> CriterionResult:
    """Ceiling constant: closed form vs quadrature, ratio < 0.612, discrete sum."""
    t0 = time.perf_counter()
    t = 10_000 if scale == "desk" else 2_000
    b = staged_value_bound(t)
    verdicts = [
        check_eq("per-stage integral: quadrature agrees with the closed form",
                 b.integral_quadrature, b.integral_value, 1e-9),
        check_eq("closed form equals 3 - 1.5(e^(-2/3) + e^(-4/3))",
                 b.integral_value, 3 - 1.5 * (math.exp(-2 / 3) + math.exp(-4 / 3)), 0.0),
        check_eq("ratio equals 0.611493 (6 decimal places)",
                 b.ratio, 0.611493, 5e-7),
        check_le("ratio is below 0.612", b.ratio, 0.612, 0.0),
        check_eq(f"discrete sum over 3t at t={t} is within 0.02 of the ratio",
                 b.discrete_sum / (3.0 * t), b.ratio, 0.02),
    ]
    return _finish("staged ceiling constant (0.611493 < 0.612)", t0, verdicts, [],
                   1.0, scale)


def check_harmonic(scale: str = "desk", seed: int = 0, threads: int = 1) -> CriterionResult:
    """Deactivated-group item counts under the m ln(t/(t-j)) bound, both policies."""
    t0 = time.perf_counter()
    trials = 10_000 if scale == "desk" else 1_000
    verdicts: List[Verdict] = []
    for policy in ("greedy", "random"):
        vs = verify_harmonic_bound(k=3, n=3, s=2, t=10, policy=policy,
                                   trials=trials, seed=seed, threads=threads)
        for v in vs:
            v.name = f"{policy}: {v.name}"
        verdicts.extend(vs)
    return _finish("harmonic item bound on the staged coverage family", t0,
                   verdicts, [], 60.0, scale)


def check_planted_staged_value(scale: str = "desk", seed: int = 0) -> CriterionResult:
    """Perfect-cover staged instance: stage-wise allocation achieves t*n*|U| = 180."""
    t0 = time.perf_counter()
    k, n, s, t = 4, 5, 3, 3
    base = make_cyclic_instance(make_planted_cover_system(k, n, s, seed))
    inst = make_staged_instance(base, t, seed)
    deact = materialize_activity(inst, np.random.default_rng([seed, 0]))
    alloc = staged_yes_allocation(inst, base, deact)
    u = base.system.universe_size
    verdicts = [
        check_eq("stage-wise perfect allocation achieves t*n*|U| = 180",
                 alloc.welfare, float(t * n * u), 0.0),
        check_eq("allocation is disjoint", float(alloc.is_disjoint()), 1.0, 0.0),
    ]
    notes = [f"t*n*|U| = {t}*{n}*{u} is also an upper bound: each of the {t * n} "
             f"agent copies can cover at most |U| = {u} elements, so this is the "
             f"exact offline optimum"]
    return _finish("planted staged optimum equals 180", t0, verdicts, notes, 1.0, scale)


def _random_monotone_valuations(rng: random.Random, m: int, n: int):
    vals = []
    for _ in range(n):
        if rng.random() < 0.5:
            u = rng.randint(2, 8)
            vals.append(CoverageValuation(
                u, [rng.sample(range(u), rng.randint(0, u)) for _ in range(m)]))
        else:
            budget = rng.uniform(1.0, 5.0)
            vals.append(BudgetAdditiveValuation(
                [rng.uniform(0.0, budget) for _ in range(m)], budget))
    return vals


def check_greedy_half(scale: str = "desk", seed: int = 0) -> CriterionResult:
    """Greedy collects at least half the brute-force optimum on every arrival
    order of >= 100 random monotone instances (m <= 6, n <= 3)."""
    t0 = time.perf_counter()
    instances = 100 if scale == "desk" else 25
    rng = random.Random(seed)
    worst = math.inf
    orders_checked = 0
    failures = 0
    import itertools as it

    for idx in range(instances):
        m = rng.randint(2, 6)
        n = rng.randint(1, 3)
        vals = _random_monotone_valuations(rng, m, n)
        _, opt = offline_opt_bruteforce(vals, list(range(m)))
        for order in it.permutations(range(m)):
            inst = OnlineInstance(vals, Arrival("stages", stages=[list(order)]))
            welfare = run_online(inst, "greedy", seed=0).welfare
            orders_checked += 1
            if opt > 0:
                worst = min(worst, welfare / opt)
            if welfare < 0.5 * opt - 1e-9:
                failures += 1
    verdicts = [
        check_eq(f"orders violating the half guarantee across {instances} instances "
                 f"and {orders_checked} orders", float(failures), 0.0, 0.0),
        check_ge("worst observed welfare-to-optimum ratio", worst, 0.5, 1e-9),
    ]
    return _finish("greedy half-competitiveness over all arrival orders", t0,
                   verdicts, [], 120.0, scale)


def check_iid_greedy(scale: str = "desk", seed: int = 0, threads: int = 1) -> CriterionResult:
    """i.i.d. greedy guarantee on block valuations plus the exact per-state step bound."""
    t0 = time.perf_counter()
    trials = 20_000 if scale == "desk" else 2_000
    val = BudgetAdditiveValuation([2, 2, 2], 3)
    p = [1 / 3] * 3
    verdicts = verify_iid_greedy([val, val], p, draws=3, trials=trials, seed=seed,
                                 threads=threads)
    states = verify_greedy_step_all_states([val, val], p, draws=3, tol=1e-9)
    ok = sum(1 for v in states if v.passed)
    verdicts.append(check_eq(
        f"exact per-state step bound holds at all {len(states)} reachable states",
        float(ok), float(len(states)), 0.0))
    worst = min((v.lhs - v.rhs) for v in states)
    notes = [f"tightest per-state margin: {worst:.6g}"]
    return _finish("i.i.d. greedy achieves (1 - 1/e) of the multiset LP", t0,
                   verdicts, notes, 60.0, scale)


def _dominance_cases(seed: int):
    """Small fixed-plus-seeded instances with <= 4 item types and <= 4 draws."""
    rng = random.Random(seed)
    block = BudgetAdditiveValuation([2, 2, 2], 3)
    cases = [("block, 3 uniform draws", [block, block], [1 / 3] * 3, 3)]
    base = make_cyclic_instance(make_planted_cover_system(2, 2, 2, seed))
    cases.append(("planted coverage, 4 uniform draws",
                  base.valuations(), [0.25] * 4, 4))
    for i in range(4):
        m = rng.randint(2, 4)
        draws = rng.randint(2, 4)
        n = rng.randint(1, 3)
        vals = _random_monotone_valuations(rng, m, n)
        p = [rng.uniform(0.2, 1.0) for _ in range(m)]
        total = sum(p)
        p = [x / total for x in p]
        cases.append((f"random monotone #{i} ({m} types, {draws} draws)",
                      vals, p, draws))
    for i in range(3):
        m = rng.randint(2, 4)
        draws = rng.randint(2, 4)
        skew = [rng.uniform(0.05, 1.0) for _ in range(m)]
        total = sum(skew)
        p = [x / total for x in skew]
        budget = rng.uniform(1.0, 4.0)
        val = BudgetAdditiveValuation([rng.uniform(0, budget) for _ in range(m)], budget)
        cases.append((f"skewed budget-additive #{i} ({m} types, {draws} draws)",
                      [val], p, draws))
    return cases


def check_lp_dominance(scale: str = "desk", seed: int = 0) -> CriterionResult:
    """Multiset LP at full size cap dominates the exhaustively-computed E[optimum]."""
    t0 = time.perf_counter()
    from .algorithms import expected_offline_opt_iid

    verdicts = []
    for name, vals, p, draws in _dominance_cases(seed):
        res = stochastic_lp_bound(vals, draws, p)
        eopt = expected_offline_opt_iid(vals, p, draws)
        verdicts.append(check_ge(f"LP >= E[opt] on {name}", res.value, eopt, 1e-7,
                                 detail=f"gap {res.value - eopt:.6g}"))
    return _finish("i.i.d. LP dominance over exhaustive expected optima", t0,
                   verdicts, [], 30.0, scale)


def check_property_separation(scale: str = "desk", seed: int = 0) -> CriterionResult:
    """Capped coverage passes all three lattice properties; x^2 separates them."""
    t0 = time.perf_counter()
    sets = [[0, 1], [1, 2], [2, 3]]
    cov = CoverageValuation(4, sets)

    def union_fn(support):
        out = set()
        for i in support:
            out |= set(sets[i])
        return float(len(out))

    capped = cap_extension(union_fn, 3, integer_valued=True)
    verdicts = []
    for v, label in ((cov, "coverage"), (capped, "cap-extended coverage")):
        for prop in ("monotone", "diminishing_returns", "lattice_submodular"):
            w = check_property(v, (2, 2, 2), prop)
            verdicts.append(check_eq(f"{label} satisfies {prop}",
                                     float(w.holds), 1.0, 0.0))

    square = TabularValuation.from_function((5,), lambda pt: pt[0] ** 2,
                                            integer_valued=True)
    w_lat = check_property(square, (5,), "lattice_submodular")
    verdicts.append(check_eq("x^2 on one item type is lattice submodular",
                             float(w_lat.holds), 1.0, 0.0))
    w_dr = check_property(square, (5,), "diminishing_returns")
    verdicts.append(check_eq("x^2 fails diminishing returns",
                             float(w_dr.holds), 0.0, 0.0))
    ce = w_dr.counterexample
    witness_ok = (ce is not None and ce.x == (0,) and ce.y == (1,)
                  and ce.item == 0 and ce.lhs == 1.0 and ce.rhs == 3.0
                  and recheck_witness(square, w_dr))
    verdicts.append(check_eq(
        "witness is x=(0), y=(1), gains 1 vs 3, and re-verifies",
        float(witness_ok), 1.0, 0.0))
    return _finish("diminishing-returns separation on multisets", t0, verdicts,
                   [], 1.0, scale)


def check_staged_ceiling(scale: str = "desk", seed: int = 0, threads: int = 1) -> CriterionResult:
    """Online value on the staged budget family against the 0.612 LP ceiling.

    Greedy's ratio sub-check is expected red at t=100: the finite-horizon
    ceiling (0.6165 at t=100) still exceeds the asymptotic 0.612, and greedy
    lands between them.  The per-pair item bound and the finite-horizon
    welfare ceiling are the sound checks and pass for both policies.
    """
    t0 = time.perf_counter()
    t = 100 if scale == "desk" else 25
    trials = 10_000 if scale == "desk" else 800
    verdicts: List[Verdict] = []
    notes: List[str] = []
    bound = staged_value_bound(t)
    for policy in ("greedy", "random"):
        spec = ExperimentSpec("budget_staged", policy=policy, trials=trials,
                              seed=seed, t=t, baseline="budget_lp",
                              threads=threads,
                              claim_checks=["harmonic", "ceiling"])
        report = run_experiment(spec)
        for v in report.verdicts:
            v.name = f"{policy}: {v.name}"
        verdicts.extend(report.verdicts)
        notes.append(
            f"{policy}: mean welfare {report.mean:.3f}, LP {report.baseline_value:.1f}, "
            f"ratio {report.ratio:.6f} (se {report.ratio_stderr:.2g}); "
            f"finite-horizon ceiling ratio at t={t}: "
            f"{bound.pair_discrete_sum / report.baseline_value:.6f}")
    notes.append(
        "analysis: 0.612 is the t->infinity constant (exact limit 0.611493); "
        "at finite t the proven ceiling is sum over stages of the paired "
        "envelope, which the welfare verdicts above check directly.")
    return _finish("staged budget online ceiling (0.612 vs LP)", t0, verdicts,
                   notes, 120.0, scale)


ACCEPTANCE_CHECKS: Dict[str, Callable[..., CriterionResult]] = {
    "block-exact": check_block_exact,
    "staged-lp": check_staged_budget_lp,
    "staged-integral": check_staged_integral,
    "harmonic": check_harmonic,
    "planted-staged": check_planted_staged_value,
    "greedy-half": check_greedy_half,
    "iid-greedy": check_iid_greedy,
    "lp-dominance": check_lp_dominance,
    "dr-separation": check_property_separation,
    "staged-ceiling": check_staged_ceiling,
}

#: checks whose red status is analyzed and expected at desk scale
EXPECTED_RED = ("staged-lp", "staged-ceiling")


def run_acceptance(names: Optional[Sequence[str]] = None, scale: str = "desk",
                   seed: int = 0, threads: int = 1) -> List[CriterionResult]:
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}; expected one of {SCALES}")
    selected = list(ACCEPTANCE_CHECKS) if not names else list(names)
    results = []
    for name in selected:
        if name not in ACCEPTANCE_CHECKS:
            raise ValueError(f"unknown check {name!r}; expected one of "
                             f"{tuple(ACCEPTANCE_CHECKS)}")
        fn = ACCEPTANCE_CHECKS[name]
        kwargs = {"scale": scale, "seed": seed}
        if name in ("harmonic", "iid-greedy", "staged-ceiling"):
            kwargs["threads"] = threads
        results.append(fn(**kwargs))
    return results
