"""Seeded Monte Carlo experiment engine.

Runs policies over instance families, estimates competitive ratios with
recorded confidence intervals, and checks each quantitative bound that the
instance families are built to exhibit.  Every verdict embeds the inequality
it tested, both sides, and the slack applied, so reports are auditable
without re-running.

Reproducibility: trial i of an experiment with master seed s is driven by
the RNG seeded with [s, i] (a counter-based split), so any single trial can
be replayed in isolation and reports are byte-identical across runs.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .algorithms import (
    expected_offline_opt_iid,
    make_policy,
    offline_opt_for_instance,
    run_online,
)
from .bounds import (
    budget_lp_from_instance,
    harmonic_item_bound,
    solve_lp,
    staged_value_bound,
    stochastic_lp_bound,
    value_envelope,
)
from .instances import (
    OnlineInstance,
    Arrival,
    make_budget_block,
    make_budget_staged,
    make_cyclic_instance,
    make_iid_block,
    make_iid_instance,
    make_planted_cover_system,
    make_staged_instance,
    materialize_activity,
)
from .valuations import ItemMultiset, Valuation

Z_SCORE = 3.0

FAMILIES = ("budget_block", "budget_staged", "coverage_staged", "budget_iid", "coverage_iid")
BASELINES = ("budget_lp", "bruteforce_opt", "stochastic_lp", "known_value", "none")


@dataclass
class Verdict:
    """One audited inequality: lhs <relation> rhs within tolerance."""

    name: str
    passed: bool
    lhs: float
    relation: str
    rhs: float
    tolerance: float
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "name": self.name, "passed": self.passed, "lhs": self.lhs,
            "relation": self.relation, "rhs": self.rhs,
            "tolerance": self.tolerance, "detail": self.detail,
        }


def check_le(name: str, lhs: float, rhs: float, tol: float, detail: str = "") -> Verdict:
    return Verdict(name, lhs <= rhs + tol, lhs, "<=", rhs, tol, detail)


def check_ge(name: str, lhs: float, rhs: float, tol: float, detail: str = "") -> Verdict:
    return Verdict(name, lhs >= rhs - tol, lhs, ">=", rhs, tol, detail)


def check_eq(name: str, lhs: float, rhs: float, tol: float, detail: str = "") -> Verdict:
    return Verdict(name, abs(lhs - rhs) <= tol, lhs, "==", rhs, tol, detail)


@dataclass
class ExperimentSpec:
    """Declarative description of one Monte Carlo experiment."""

    family: str
    policy: str = "greedy"
    trials: int = 1
    seed: int = 0
    baseline: str = "none"
    k: int = 3
    n: int = 3
    s: int = 2
    t: int = 1
    draws: int = 3
    known_value: Optional[float] = None
    threads: int = 1
    claim_checks: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.baseline not in BASELINES:
            raise ValueError(f"unknown baseline {self.baseline!r}; expected one of {BASELINES}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.baseline == "known_value" and self.known_value is None:
            raise ValueError("known_value baseline needs a value")

    def to_json(self) -> dict:
        return {
            "family": self.family, "policy": self.policy, "trials": self.trials,
            "seed": self.seed, "baseline": self.baseline, "k": self.k, "n": self.n,
            "s": self.s, "t": self.t, "draws": self.draws,
            "known_value": self.known_value, "threads": self.threads,
            "claim_checks": list(self.claim_checks),
        }


def build_instance(spec: ExperimentSpec) -> Tuple[OnlineInstance, Optional[object]]:
    """Instance for a spec; returns (instance, offline base or None)."""
    if spec.family == "budget_block":
        return make_budget_block(), None
    if spec.family == "budget_staged":
        return make_budget_staged(spec.t, spec.seed), None
    base = make_cyclic_instance(make_planted_cover_system(spec.k, spec.n, spec.s, spec.seed))
    if spec.family == "coverage_staged":
        return make_staged_instance(base, spec.t, spec.seed), base
    if spec.family == "coverage_iid":
        return make_iid_instance(base, spec.t), base
    return make_iid_block(spec.draws), None


def _baseline_value(spec: ExperimentSpec, inst: OnlineInstance) -> Tuple[str, float]:
    if spec.baseline == "none":
        return "none", math.nan
    if spec.baseline == "known_value":
        return "known_value", float(spec.known_value)
    if spec.baseline == "budget_lp":
        deact = materialize_activity(inst, np.random.default_rng([spec.seed, 0]))
        sol = solve_lp(budget_lp_from_instance(inst, deact).lp)
        if sol.status != "optimal":
            raise RuntimeError(f"baseline LP failed: {sol.status}")
        return "budget_lp", sol.objective
    if spec.baseline == "stochastic_lp":
        if inst.arrival.kind != "iid":
            raise ValueError("stochastic_lp baseline needs an i.i.d. arrival")
        res = stochastic_lp_bound(inst.agents, inst.arrival.draws, inst.arrival.p)
        return "stochastic_lp", res.value
    # bruteforce_opt
    if inst.arrival.kind == "iid":
        return "bruteforce_opt", expected_offline_opt_iid(
            inst.agents, inst.arrival.p, inst.arrival.draws)
    _, opt = offline_opt_for_instance(inst, seed=[spec.seed, 0])
    return "bruteforce_opt", opt


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    per_trial_welfare: np.ndarray
    baseline_name: str
    baseline_value: float
    per_stage_items_mean: Optional[np.ndarray] = None
    per_stage_items_se: Optional[np.ndarray] = None
    per_stage_value_mean: Optional[np.ndarray] = None
    verdicts: List[Verdict] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(self.per_trial_welfare.mean())

    @property
    def std(self) -> float:
        w = self.per_trial_welfare
        return float(w.std(ddof=1)) if len(w) > 1 else 0.0

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(len(self.per_trial_welfare))

    @property
    def ratio(self) -> float:
        return self.mean / self.baseline_value if self.baseline_name != "none" else math.nan

    @property
    def ratio_stderr(self) -> float:
        return self.stderr / self.baseline_value if self.baseline_name != "none" else math.nan

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_json(self) -> dict:
        d = {
            "spec": self.spec.to_json(),
            "trials": len(self.per_trial_welfare),
            "welfare": {
                "mean": self.mean, "std": self.std, "stderr": self.stderr,
                "per_trial": [float(w) for w in self.per_trial_welfare],
            },
            "baseline": {"name": self.baseline_name, "value": self.baseline_value},
            "ratio": {
                "value": self.ratio, "stderr": self.ratio_stderr, "z": Z_SCORE,
                "ci_halfwidth": Z_SCORE * self.ratio_stderr,
            } if self.baseline_name != "none" else None,
            "verdicts": [v.to_json() for v in self.verdicts],
            "all_passed": self.all_passed,
        }
        if self.per_stage_items_mean is not None:
            d["per_stage"] = {
                "stage": list(range(1, len(self.per_stage_items_mean) + 1)),
                "items_to_deactivated_mean": [float(v) for v in self.per_stage_items_mean],
                "items_to_deactivated_se": [float(v) for v in self.per_stage_items_se],
                "value_of_deactivated_mean": [float(v) for v in self.per_stage_value_mean],
            }
        return d

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    def trials_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["trial", "welfare"])
        for i, val in enumerate(self.per_trial_welfare):
            w.writerow([i, float(val)])
        return buf.getvalue()

    def stages_csv(self) -> str:
        if self.per_stage_items_mean is None:
            raise ValueError("experiment has no per-stage statistics")
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["stage", "items_to_deactivated_mean", "items_to_deactivated_se",
                    "value_of_deactivated_mean"])
        for j in range(len(self.per_stage_items_mean)):
            w.writerow([j + 1, float(self.per_stage_items_mean[j]),
                        float(self.per_stage_items_se[j]),
                        float(self.per_stage_value_mean[j])])
        return buf.getvalue()


def _run_trials(inst: OnlineInstance, policy_name: str, trials: int, seed: int,
                threads: int = 1):
    """Welfare plus per-deactivation-stage item/value tallies for every trial."""
    t = inst.num_stages
    policy = make_policy(policy_name)

    def one(i: int):
        trace = run_online(inst, policy, seed=[seed, i])
        items = np.zeros(t + 1)
        value = np.zeros(t + 1)
        np.add.at(items, trace.deact_stage, trace.per_agent_items)
        np.add.at(value, trace.deact_stage, trace.per_agent_value)
        return trace.welfare, items, value

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(trials)))
    else:
        results = [one(i) for i in range(trials)]

    welfare = np.array([r[0] for r in results])
    items = np.stack([r[1] for r in results])
    value = np.stack([r[2] for r in results])
    return welfare, items, value


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """N independent seeded trials with the requested baseline and checks."""
    inst, _ = build_instance(spec)
    baseline_name, baseline = _baseline_value(spec, inst)
    welfare, items, value = _run_trials(inst, spec.policy, spec.trials, spec.seed,
                                        spec.threads)
    t = inst.num_stages
    n_tr = spec.trials
    items_mean = items[:, 1:].mean(axis=0)
    items_se = (items[:, 1:].std(axis=0, ddof=1) / math.sqrt(n_tr)) if n_tr > 1 \
        else np.zeros(t)
    value_mean = value[:, 1:].mean(axis=0)

    report = ExperimentReport(spec, welfare, baseline_name, baseline,
                              items_mean, items_se, value_mean)

    for check in spec.claim_checks:
        if check == "harmonic":
            m = len(inst.arrival.stages[0]) if inst.arrival.kind == "stages" else 0
            report.verdicts.extend(
                _harmonic_verdicts(m, t, items_mean, items_se))
        elif check == "ceiling":
            report.verdicts.extend(
                _ceiling_verdicts(t, report))
        elif check == "stage_accounting":
            gap = float(np.abs(value[:, 1:].sum(axis=1) - welfare).max())
            report.verdicts.append(check_eq(
                "sum of per-stage deactivated value equals welfare in every trial",
                gap, 0.0, 1e-9))
        else:
            raise ValueError(f"unknown claim check {check!r}")
    return report


def _harmonic_verdicts(m: int, t: int, items_mean: np.ndarray,
                       items_se: np.ndarray) -> List[Verdict]:
    out = []
    for j in range(1, t):
        bound = harmonic_item_bound(m, t, j)
        se = float(items_se[j - 1])
        out.append(check_le(
            f"mean items collected by the stage-{j} deactivated group <= "
            f"{m}*ln({t}/{t - j})",
            float(items_mean[j - 1]), bound, Z_SCORE * se,
            detail=f"slack is {Z_SCORE:g} standard errors ({se:.4g} each)"))
    return out


def _ceiling_verdicts(t: int, report: ExperimentReport) -> List[Verdict]:
    bound = staged_value_bound(t)
    se = report.stderr
    out = [check_le(
        "mean welfare <= sum over stages of the paired value envelope",
        report.mean, bound.pair_discrete_sum, Z_SCORE * se,
        detail=f"finite-horizon ceiling at t={t}; slack {Z_SCORE:g} standard errors")]
    if report.baseline_name != "none" and math.isfinite(report.baseline_value):
        out.append(check_le(
            "welfare-to-LP ratio <= 0.612",
            report.ratio, 0.612, Z_SCORE * report.ratio_stderr,
            detail=f"asymptotic constant; finite-t ceiling is "
                   f"{bound.pair_discrete_sum / report.baseline_value:.6f}"))
    return out


def verify_harmonic_bound(k: int, n: int, s: int, t: int, policy: str,
                          trials: int, seed: int, threads: int = 1) -> List[Verdict]:
    """Per-stage check that deactivated groups hold at most m ln(t/(t-j))
    items on average, on the staged coverage family (policy-independent)."""
    spec = ExperimentSpec("coverage_staged", policy=policy, trials=trials, seed=seed,
                          k=k, n=n, s=s, t=t, threads=threads,
                          claim_checks=["harmonic"])
    return run_experiment(spec).verdicts


def verify_envelope_bound(t: int, policy: str, trials: int, seed: int,
                          agents: Optional[Sequence[int]] = None,
                          threads: int = 1) -> List[Verdict]:
    """Check E[agent value] <= envelope(E[items]) on the staged budget family.

    The envelope is 2-Lipschitz, so the slack combines the value estimate's
    standard error with twice the item count's.
    """
    inst = make_budget_staged(t, seed)
    if agents is None:
        agents = list(range(min(4, inst.num_agents)))
    policy_obj = make_policy(policy)

    def one(i: int):
        trace = run_online(inst, policy_obj, seed=[seed, i])
        return (trace.per_agent_value[list(agents)].astype(float),
                trace.per_agent_items[list(agents)].astype(float))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(trials)))
    else:
        results = [one(i) for i in range(trials)]
    values = np.stack([r[0] for r in results])
    counts = np.stack([r[1] for r in results])

    out = []
    for idx, agent in enumerate(agents):
        v_mean = float(values[:, idx].mean())
        x_mean = float(counts[:, idx].mean())
        v_se = float(values[:, idx].std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        x_se = float(counts[:, idx].std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        tol = Z_SCORE * (v_se + 2.0 * x_se)
        out.append(check_le(
            f"agent {agent}: mean value <= envelope(mean items)",
            v_mean, value_envelope(x_mean), tol,
            detail=f"E[items]={x_mean:.4f}; slack {Z_SCORE:g}*(se_value + 2*se_items)"))
    return out


def greedy_step_verdict(valuations: Sequence[Valuation], p: Sequence[float],
                        draws: int, state: Sequence[ItemMultiset],
                        lp_value: Optional[float] = None,
                        tol: float = 1e-9) -> Verdict:
    """Exact per-state check: expected greedy gain >= (LP - current welfare)/draws."""
    p = np.asarray(p, dtype=float)
    if lp_value is None:
        lp_value = stochastic_lp_bound(valuations, draws, p).value
    current = sum(v.value(x) for v, x in zip(valuations, state))
    gain = 0.0
    for j in range(len(p)):
        if p[j] == 0:
            continue
        best = max(v.marginal_gain(x, j) for v, x in zip(valuations, state))
        gain += p[j] * best
    bound = (lp_value - current) / draws
    label = ",".join(str(x.dense()) for x in state)
    return check_ge(f"expected greedy gain at state [{label}]", gain, bound, tol,
                    detail=f"LP={lp_value:.9g}, current welfare={current:.9g}")


def reachable_greedy_states(valuations: Sequence[Valuation], p: Sequence[float],
                            draws: int) -> List[Tuple[Tuple[int, ...], ...]]:
    """All partial allocations reachable by greedy under any tie-breaking."""
    num_types = len(p)
    m = valuations[0].num_items
    start = tuple(tuple([0] * m) for _ in valuations)
    frontier = {start}
    seen = {start}
    for _ in range(draws):
        nxt = set()
        for state in frontier:
            multis = [ItemMultiset.from_dense(d) for d in state]
            for j in range(num_types):
                if p[j] == 0:
                    continue
                gains = [v.marginal_gain(x, j) for v, x in zip(valuations, multis)]
                best = max(gains)
                for a, g in enumerate(gains):
                    if g == best:
                        new = list(state)
                        dense = list(new[a])
                        dense[j] += 1
                        new[a] = tuple(dense)
                        nxt.add(tuple(new))
        seen |= nxt
        frontier = nxt
    return sorted(seen)


def verify_greedy_step_all_states(valuations: Sequence[Valuation], p: Sequence[float],
                                  draws: int, tol: float = 1e-9) -> List[Verdict]:
    """Exact per-step inequality at every reachable greedy state."""
    lp_value = stochastic_lp_bound(valuations, draws, p).value
    out = []
    for state in reachable_greedy_states(valuations, p, draws):
        multis = [ItemMultiset.from_dense(d) for d in state]
        out.append(greedy_step_verdict(valuations, p, draws, multis, lp_value, tol))
    return out


def verify_iid_greedy(valuations: Sequence[Valuation], p: Sequence[float], draws: int,
                      trials: int, seed: int, threads: int = 1) -> List[Verdict]:
    """Monte Carlo check of the (1 - 1/e) guarantee plus its per-step recursion.

    The final verdict tests mean welfare >= (1 - 1/e) * LP - 3*SE; the
    recursion verdicts test LP - W(s+1) <= (1 - 1/draws)(LP - W(s)) with the
    estimates' combined standard errors as slack.
    """
    res = stochastic_lp_bound(valuations, draws, p)
    lp_value = res.value
    inst = OnlineInstance(list(valuations), Arrival("iid", p=list(p), draws=draws))
    policy = make_policy("greedy")

    def one(i: int):
        trace = run_online(inst, policy, seed=[seed, i], record_welfare_curve=True)
        return trace.welfare_curve

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            curves = np.stack(list(pool.map(one, range(trials))))
    else:
        curves = np.stack([one(i) for i in range(trials)])

    means = curves.mean(axis=0)
    ses = curves.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 \
        else np.zeros(draws)

    out = [check_ge(
        "mean greedy welfare >= (1 - 1/e) * LP",
        float(means[-1]), (1.0 - 1.0 / math.e) * lp_value, Z_SCORE * float(ses[-1]),
        detail=f"LP={lp_value:.9g}, trials={trials}")]

    w_prev, se_prev = 0.0, 0.0
    for s in range(draws):
        w_next, se_next = float(means[s]), float(ses[s])
        lhs = lp_value - w_next
        rhs = (1.0 - 1.0 / draws) * (lp_value - w_prev)
        out.append(check_le(
            f"LP minus mean welfare after step {s + 1} contracts by (1 - 1/{draws})",
            lhs, rhs, Z_SCORE * (se_prev + se_next),
            detail=f"W({s})={w_prev:.6g}, W({s + 1})={w_next:.6g}"))
        w_prev, se_prev = w_next, se_next
    return out
