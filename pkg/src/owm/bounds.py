"""Linear programs and analytic bound curves.

Contains a self-contained two-phase dense simplex solver (deterministic
pivoting with an anti-cycling fallback), builders for the budgeted-allocation
LP and the multiset-indexed LP that upper-bounds the expected offline optimum
under i.i.d. arrivals, the concave value envelope for bid-2 / budget-3
agents, the staged value ceiling and its integral form, the harmonic bound
on items collected by deactivated groups, and coverage value curves for
random set systems.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .valuations import ItemMultiset, ResourceLimitError, Valuation

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7


@dataclass
class LinearProgram:
    """max c.x subject to a x <= b, x >= 0 (equalities appear as row pairs)."""

    c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    names: Optional[List[str]] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.a.ndim != 2 or self.a.shape != (len(self.b), len(self.c)):
            raise ValueError("inconsistent LP dimensions")
        if not np.isfinite(self.b).all() or not np.isfinite(self.a).all() or not np.isfinite(self.c).all():
            raise ValueError("LP data must be finite")

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.b)


@dataclass
class LPSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float = math.nan
    values: Optional[np.ndarray] = None
    residual: float = math.nan
    iterations: int = 0


def lp_residual(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint violation of x (0 when feasible)."""
    r = float(np.max(lp.a @ x - lp.b, initial=0.0))
    return max(r, float(np.max(-x, initial=0.0)))


class _RevisedSimplex:
    """Revised simplex with an explicit dense basis inverse.

    Entering column: most negative reduced cost, lowest index on ties; after
    a run of degenerate pivots the rule switches to first-index (Bland) until
    progress resumes, which guarantees termination.  The basis inverse is
    refactorized periodically to keep float drift in check.
    """

    BLAND_AFTER = 40
    REFACTOR_EVERY = 150

    def __init__(self, columns: np.ndarray, rhs: np.ndarray, basis: List[int]):
        self.cols = columns          # (m, ncols), all variables incl. slack/artificial
        self.b = rhs
        self.basis = basis
        self.binv = np.linalg.inv(columns[:, basis])
        self.xb = self.binv @ rhs
        self.iterations = 0
        self._degenerate_run = 0
        self._since_refactor = 0

    def objective(self, cost: np.ndarray) -> float:
        return float(cost[self.basis] @ self.xb)

    def _refactor(self):
        self.binv = np.linalg.inv(self.cols[:, self.basis])
        self.xb = self.binv @ self.b
        self._since_refactor = 0

    def pivot(self, row: int, col: int):
        d = self.binv @ self.cols[:, col]
        theta = self.xb[row] / d[row]
        self.xb -= theta * d
        self.xb[row] = theta
        # rank-1 update of the inverse
        pivot_row = self.binv[row] / d[row]
        d[row] = 0.0
        self.binv -= np.outer(d, pivot_row)
        self.binv[row] = pivot_row
        self.basis[row] = col
        self._since_refactor += 1
        if self._since_refactor >= self.REFACTOR_EVERY:
            self._refactor()
        np.maximum(self.xb, 0.0, out=self.xb)  # clamp float dust

    def run(self, cost: np.ndarray, allowed: np.ndarray, max_iter: int) -> str:
        """Optimize ``cost`` over columns flagged in ``allowed``; returns status."""
        while True:
            if self.iterations >= max_iter:
                raise RuntimeError("simplex iteration limit exceeded")
            y = cost[self.basis] @ self.binv
            rc = y @ self.cols - cost
            rc[~allowed] = 0.0
            improving = np.flatnonzero(rc < -PIVOT_TOL)
            if improving.size == 0:
                return "optimal"
            if self._degenerate_run >= self.BLAND_AFTER:
                col = int(improving[0])
            else:
                col = int(improving[np.argmin(rc[improving])])
            d = self.binv @ self.cols[:, col]
            rows = np.flatnonzero(d > PIVOT_TOL)
            if rows.size == 0:
                return "unbounded"
            ratios = self.xb[rows] / d[rows]
            best = np.min(ratios)
            tied = rows[ratios <= best + PIVOT_TOL]
            # Bland-compatible leaving rule: lowest basic-variable index
            row = int(tied[np.argmin(np.asarray(self.basis)[tied])])
            if best <= PIVOT_TOL:
                self._degenerate_run += 1
            else:
                self._degenerate_run = 0
            self.pivot(row, col)
            self.iterations += 1


def solve_lp(lp: LinearProgram, max_iter: Optional[int] = None) -> LPSolution:
    """Two-phase dense simplex for max c.x, a x <= b, x >= 0.

    Rows with negative right-hand sides get artificial variables and a
    feasibility phase; the solution reports the structural variables, the
    objective, and the worst constraint residual.
    """
    n, m = lp.num_vars, lp.num_rows
    if max_iter is None:
        max_iter = 200 * (n + m) + 10_000

    a = lp.a.copy()
    b = lp.b.copy()
    slack = np.eye(m)
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0
    slack[neg] *= -1.0

    art_rows = np.flatnonzero(neg)
    n_art = len(art_rows)
    art = np.zeros((m, n_art))
    for idx, r in enumerate(art_rows):
        art[r, idx] = 1.0

    columns = np.hstack([a, slack, art])
    ncols = n + m + n_art
    basis: List[int] = []
    art_iter = iter(range(n + m, n + m + n_art))
    for r in range(m):
        basis.append(next(art_iter) if neg[r] else n + r)

    sim = _RevisedSimplex(columns, b, basis)
    allowed = np.ones(ncols, dtype=bool)

    if n_art:
        cost1 = np.zeros(ncols)
        cost1[n + m:] = -1.0  # maximize minus the sum of artificials
        sim.run(cost1, allowed, max_iter)
        if sim.objective(cost1) < -FEAS_TOL:
            return LPSolution("infeasible", iterations=sim.iterations)
        # pivot remaining artificials out of the basis where a pivot exists;
        # rows left with a zero-level artificial are redundant and inert
        for r in range(m):
            if sim.basis[r] >= n + m:
                row_r = sim.binv[r] @ sim.cols[:, :n + m]
                pivots = np.flatnonzero(np.abs(row_r) > PIVOT_TOL)
                if pivots.size:
                    sim.pivot(r, int(pivots[0]))
        allowed[n + m:] = False

    cost2 = np.zeros(ncols)
    cost2[:n] = lp.c
    status = sim.run(cost2, allowed, max_iter)
    if status == "unbounded":
        return LPSolution("unbounded", iterations=sim.iterations)

    x = np.zeros(ncols)
    x[np.asarray(sim.basis)] = sim.xb
    values = x[:n]
    objective = float(lp.c @ values)
    return LPSolution("optimal", objective, values, lp_residual(lp, values), sim.iterations)


def export_lp_text(lp: LinearProgram) -> str:
    """Plain-text LP (objective row, constraint rows) for external cross-checks."""
    names = lp.names or [f"x{i}" for i in range(lp.num_vars)]

    def terms(coeffs):
        parts = [f"{coeffs[i]:+.12g} {names[i]}" for i in range(len(coeffs)) if coeffs[i] != 0]
        return " ".join(parts) if parts else "0"

    lines = [f"max: {terms(lp.c)}"]
    for r in range(lp.num_rows):
        lines.append(f"{terms(lp.a[r])} <= {lp.b[r]:.12g}")
    lines.append("x >= 0")
    return "\n".join(lines)


@dataclass
class BudgetLpModel:
    """Budgeted-allocation LP with its variable map (agent, item-type) per column."""

    lp: LinearProgram
    pairs: List[Tuple[int, int]]
    num_agents: int
    num_types: int
    item_counts: List[int]

    def solution_matrix(self, values: np.ndarray) -> np.ndarray:
        x = np.zeros((self.num_agents, self.num_types))
        for col, (a, j) in enumerate(self.pairs):
            x[a, j] = values[col]
        return x


def build_budget_lp(bids: Sequence[Sequence[float]], budgets: Sequence[float],
                    item_counts: Optional[Sequence[int]] = None) -> BudgetLpModel:
    """Standard budgeted-allocation relaxation.

    Variables x[a, j] (one per positive bid) with
      * per-agent budget rows:   sum_j bids[a][j] * x[a, j] <= budgets[a]
      * per-item capacity rows:  sum_a x[a, j] <= item_counts[j]
    ``item_counts`` lets identical items share a column (capacity = count),
    which is value-preserving and keeps staged instances small; it defaults
    to single items.
    """
    bids = np.asarray(bids, dtype=float)
    budgets = np.asarray(budgets, dtype=float)
    if bids.ndim != 2 or bids.shape[0] != len(budgets):
        raise ValueError("bids must be (num_agents, num_types) matching budgets")
    if (bids < 0).any():
        raise ValueError("bids must be nonnegative")
    if (budgets < 0).any():
        raise ValueError("budgets must be nonnegative")
    n_agents, n_types = bids.shape
    counts = [1] * n_types if item_counts is None else [int(c) for c in item_counts]
    if len(counts) != n_types or any(c < 1 for c in counts):
        raise ValueError("item_counts must give a positive count per item type")

    bids = np.minimum(bids, budgets.reshape(-1, 1))
    pairs = [(a, j) for a in range(n_agents) for j in range(n_types) if bids[a, j] > 0]
    nv = len(pairs)
    c = np.array([bids[a, j] for a, j in pairs])
    rows = n_agents + n_types
    a_mat = np.zeros((rows, nv))
    b_vec = np.concatenate([budgets, np.asarray(counts, dtype=float)])
    for col, (a, j) in enumerate(pairs):
        a_mat[a, col] = bids[a, j]
        a_mat[n_agents + j, col] = 1.0
    names = [f"x[{a},{j}]" for a, j in pairs]
    return BudgetLpModel(LinearProgram(c, a_mat, b_vec, names), pairs, n_agents, n_types, counts)


def budget_lp_from_instance(inst, deact_stage: Sequence[int]) -> BudgetLpModel:
    """Eq-style LP of a budget-additive online instance under a known schedule.

    Items arriving after an agent's deactivation stage carry a zero bid for
    it.  Identical items (equal bid column over all agents) are pooled.
    """
    from .instances import OnlineInstance  # local import to avoid a cycle

    if not isinstance(inst, OnlineInstance) or inst.arrival.kind != "stages":
        raise ValueError("expected a staged online instance")
    stages = inst.arrival.stages
    n_agents = inst.num_agents
    total_items = sum(len(s) for s in stages)
    stage_of = np.empty(total_items, dtype=np.int64)
    for s_idx, items in enumerate(stages, start=1):
        for item in items:
            stage_of[item] = s_idx

    budgets = []
    full = np.zeros((n_agents, total_items))
    for a, val in enumerate(inst.agents):
        if not hasattr(val, "bids"):
            raise ValueError("budget LP needs budget-additive valuations")
        budgets.append(val.budget)
        row = np.asarray(val.bids, dtype=float)
        if len(row) != total_items:
            raise ValueError("valuation item space does not match the arrival")
        active = stage_of <= deact_stage[a]
        full[a] = np.where(active, row, 0.0)

    # pool identical columns into types with multiplicity
    type_of: Dict[bytes, int] = {}
    counts: List[int] = []
    cols: List[np.ndarray] = []
    for item in range(total_items):
        key = full[:, item].tobytes()
        idx = type_of.get(key)
        if idx is None:
            type_of[key] = len(cols)
            cols.append(full[:, item])
            counts.append(1)
        else:
            counts[idx] += 1
    type_bids = np.stack(cols, axis=1)
    return build_budget_lp(type_bids, budgets, counts)


def enumerate_multisets(num_types: int, max_size: int) -> List[Tuple[int, ...]]:
    """All count vectors over ``num_types`` with total size <= max_size, lexicographic."""
    out: List[Tuple[int, ...]] = []

    def rec(prefix: Tuple[int, ...], remaining: int, depth: int):
        if depth == num_types:
            out.append(prefix)
            return
        for c in range(remaining + 1):
            rec(prefix + (c,), remaining - c, depth + 1)

    rec((), max_size, 0)
    return out


@dataclass
class StochasticLpResult:
    """Upper bound on the expected offline optimum under i.i.d. arrivals.

    The bound is valid only at full size cap (multisets up to the draw
    count); smaller caps yield a heuristic object and are flagged.
    """

    value: float
    solution: LPSolution
    multisets: List[Tuple[int, ...]]
    x: np.ndarray  # (num_agents, num_multisets) distribution per agent
    y: np.ndarray  # (num_agents, num_types) expected copies of each type
    size_cap: int
    draws: int
    valid_bound: bool


def stochastic_lp_bound(valuations: Sequence[Valuation], draws: int, p: Sequence[float],
                        size_cap: Optional[int] = None,
                        max_variables: int = 500_000) -> StochasticLpResult:
    """LP over per-agent multiset distributions dominating E[offline optimum].

    Variables x[i, S] for every multiset S of at most ``size_cap`` items:
      max  sum x[i, S] w_i(S)
      s.t. per type j:  sum_{i,S} x[i, S] * copies_j(S) <= p_j * draws
           per agent i: sum_S x[i, S] = 1                (as a row pair)
    """
    p = np.asarray(p, dtype=float)
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must be a probability vector")
    num_types = len(p)
    if size_cap is None:
        size_cap = draws
    size_cap = min(size_cap, draws)
    n_agents = len(valuations)
    for v in valuations:
        if v.num_items != num_types:
            raise ValueError("valuation item space must match the type distribution")

    multisets = enumerate_multisets(num_types, size_cap)
    nv = n_agents * len(multisets)
    if nv > max_variables:
        raise ResourceLimitError(
            f"stochastic LP needs {nv} variables (limit {max_variables})")

    w = np.empty((n_agents, len(multisets)))
    for i, v in enumerate(valuations):
        for s_idx, counts in enumerate(multisets):
            w[i, s_idx] = v.value(ItemMultiset.from_dense(counts))

    c = w.reshape(-1)
    rows = num_types + 2 * n_agents
    a_mat = np.zeros((rows, nv))
    b_vec = np.zeros(rows)
    copies = np.asarray(multisets, dtype=float)  # (num_multisets, num_types)
    for j in range(num_types):
        a_mat[j] = np.tile(copies[:, j], n_agents)
        b_vec[j] = p[j] * draws
    for i in range(n_agents):
        sl = slice(i * len(multisets), (i + 1) * len(multisets))
        a_mat[num_types + 2 * i, sl] = 1.0
        b_vec[num_types + 2 * i] = 1.0
        a_mat[num_types + 2 * i + 1, sl] = -1.0
        b_vec[num_types + 2 * i + 1] = -1.0

    sol = solve_lp(LinearProgram(c, a_mat, b_vec))
    if sol.status != "optimal":
        raise RuntimeError(f"stochastic LP did not solve: {sol.status}")
    x = sol.values.reshape(n_agents, len(multisets))
    y = x @ copies
    return StochasticLpResult(sol.objective, sol, multisets, x, y,
                              size_cap, draws, valid_bound=(size_cap == draws))


def value_envelope(x: float) -> float:
    """Best expected value a budget-3 agent with bid-2 items can get from an
    expected item count of x: 2x up to one item, then x+1, capped at 3."""
    if x < 0:
        raise ValueError("expected item count must be nonnegative")
    if x <= 1:
        return 2.0 * x
    if x <= 2:
        return x + 1.0
    return 3.0


def _adaptive_simpson(f, a: float, b: float, tol: float) -> float:
    def simpson(lo, hi):
        mid = 0.5 * (lo + hi)
        return (hi - lo) / 6.0 * (f(lo) + 4.0 * f(mid) + f(hi)), mid

    def rec(lo, hi, whole, depth):
        mid = 0.5 * (lo + hi)
        left, _ = simpson(lo, mid)
        right, _ = simpson(mid, hi)
        if depth > 60 or abs(left + right - whole) < 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return rec(lo, mid, left, depth + 1) + rec(mid, hi, right, depth + 1)

    whole, _ = simpson(a, b)
    return rec(a, b, whole, depth=0)


#: knots where the envelope's pieces change along x -> (3/2) ln(1/(1-x))
ENVELOPE_KNOT_1 = 1.0 - math.exp(-2.0 / 3.0)
ENVELOPE_KNOT_2 = 1.0 - math.exp(-4.0 / 3.0)


def staged_integral_closed_form() -> float:
    """Per-stage integral of the envelope along the deactivation profile."""
    return 3.0 - 1.5 * (math.exp(-2.0 / 3.0) + math.exp(-4.0 / 3.0))


def staged_integral_quadrature(tol: float = 1e-12) -> float:
    """Same integral by adaptive Simpson, split exactly at the envelope knots."""

    def integrand(x: float) -> float:
        if x >= 1.0:
            return 3.0
        return value_envelope(1.5 * math.log(1.0 / (1.0 - x)))

    total = 0.0
    for lo, hi in ((0.0, ENVELOPE_KNOT_1), (ENVELOPE_KNOT_1, ENVELOPE_KNOT_2),
                   (ENVELOPE_KNOT_2, 1.0)):
        total += _adaptive_simpson(integrand, lo, hi, tol)
    return total


@dataclass
class StagedValueBound:
    """Discrete and integral ceilings on online value in the staged budget family.

    ``discrete_sum`` is the per-agent sum of envelope values over stages
    (the deactivated pair's ceiling is twice each term, exposed as
    ``pair_discrete_sum``); ``ratio`` is the per-stage integral divided by 3.
    """

    t: int
    discrete_sum: float
    pair_discrete_sum: float
    integral_value: float
    integral_quadrature: float
    ratio: float


def staged_value_bound(t: int) -> StagedValueBound:
    """Evaluate the staged ceiling at horizon t.

    The stage-j term is the envelope at (3/2)ln(t/(t-j)); the final stage's
    argument diverges, where the envelope saturates at 3, so that term is
    pinned to the saturation value explicitly.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    total = 0.0
    for j in range(1, t):
        total += value_envelope(1.5 * math.log(t / (t - j)))
    total += 3.0  # j = t: envelope saturates
    integral = staged_integral_closed_form()
    quad = staged_integral_quadrature()
    return StagedValueBound(t, total, 2.0 * total, integral, quad, integral / 3.0)


def harmonic_item_bound(m: int, t: int, j: int) -> float:
    """Logarithmic bound m ln(t/(t-j)) on expected items collected by the
    group deactivated after stage j (valid for j < t)."""
    if t < 1 or not (0 <= j < t):
        raise ValueError("need 1 <= j < t (bound degenerates at the last stage)")
    return m * math.log(t / (t - j))


def harmonic_item_sum(m: int, t: int, j: int) -> float:
    """Exact pre-integral form: sum over stages i <= j of m/(t-i+1)."""
    if t < 1 or not (0 <= j <= t):
        raise ValueError("need 0 <= j <= t")
    return m * sum(1.0 / (t - i + 1) for i in range(1, j + 1))


@dataclass
class CoverBoundParams:
    """Parameters of the few-sets coverage ceiling for grouped systems."""

    k: int
    epsilon: float
    c0: float
    universe_size: int

    def __post_init__(self):
        if self.k < 1 or self.universe_size < 1:
            raise ValueError("k and universe_size must be positive")
        if self.epsilon < 0 or self.c0 < 1:
            raise ValueError("need epsilon >= 0 and c0 >= 1")


@dataclass
class CoverBoundCurves:
    raw: float
    smooth: float
    tangent: float


def cover_value_bound(params: CoverBoundParams, ell: float,
                      mu: Optional[float] = None) -> CoverBoundCurves:
    """Value ceilings for an agent holding ell sets of a k-group system.

    ``raw`` is (1 - (1-1/k)^ell + eps)|U|; ``smooth`` replaces the power with
    an exponential at doubled slack; ``tangent`` is the concave piecewise-
    linear ceiling min(|U|, smooth(mu) + smooth'(mu)(ell - mu)) anchored at
    ``mu`` (default: ell itself).
    """
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    k, eps, u = params.k, params.epsilon, float(params.universe_size)
    if mu is None:
        mu = ell
    raw = (1.0 - (1.0 - 1.0 / k) ** ell + eps) * u
    eps2 = 2.0 * eps
    smooth = (1.0 - math.exp(-ell / k) + eps2) * u
    smooth_mu = (1.0 - math.exp(-mu / k) + eps2) * u
    slope_mu = (u / k) * math.exp(-mu / k)
    tangent = min(u, smooth_mu + slope_mu * (ell - mu))
    return CoverBoundCurves(raw, smooth, tangent)
