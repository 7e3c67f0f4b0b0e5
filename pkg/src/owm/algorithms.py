"""Online allocation policies and exact offline optima.

``run_online`` replays an online instance step by step: the deactivation
schedule and any i.i.d. draws are materialized from the run seed first, so a
fixed seed reproduces the whole run bit for bit.  Policies only ever see
already-arrived information.  ``offline_opt_bruteforce`` enumerates every
assignment exactly and is the baseline for competitive ratios at small scale.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .instances import Allocation, OnlineInstance, materialize_activity
from .valuations import (
    BudgetAdditiveValuation,
    ItemMultiset,
    ResourceLimitError,
    Valuation,
)

BRUTEFORCE_LIMIT = 10_000_000


class PolicyState:
    """Mutable run state: per-agent values, activity, and the trial RNG.

    When every agent is budget-additive the marginal gains for an item are
    computed as one vectorized expression over the active agents; otherwise
    per-agent incremental cursors are queried in a loop.  Both paths yield
    identical traces.
    """

    def __init__(self, inst: OnlineInstance, deact_stage: np.ndarray,
                 rng: np.random.Generator, use_fast_path: bool = True):
        self.inst = inst
        self.rng = rng
        self.num_agents = inst.num_agents
        self.deact_stage = deact_stage
        self.stage = 1
        self.active = deact_stage >= 1
        self.active_ids = np.flatnonzero(self.active)
        self.welfare = 0.0
        self.held = np.zeros(self.num_agents, dtype=np.int64)

        self._fast = use_fast_path and all(
            isinstance(v, BudgetAdditiveValuation) for v in inst.agents)
        if self._fast:
            self._bids = np.stack([np.asarray(v.bids) for v in inst.agents])
            self._budget = np.array([v.budget for v in inst.agents])
            self._spent = np.zeros(self.num_agents)
            self._cursors = None
        else:
            self._cursors = [v.cursor() for v in inst.agents]

    def set_stage(self, stage: int):
        self.stage = stage
        self.active = self.deact_stage >= stage
        self.active_ids = np.flatnonzero(self.active)

    def agent_value(self, agent: int) -> float:
        if self._fast:
            return float(np.minimum(self._budget[agent], self._spent[agent]))
        return self._cursors[agent].value

    def values(self) -> np.ndarray:
        if self._fast:
            return np.minimum(self._budget, self._spent)
        return np.array([c.value for c in self._cursors])

    def gain(self, agent: int, item: int) -> float:
        if self._fast:
            s = self._spent[agent]
            b = self._budget[agent]
            return float(min(b, s + self._bids[agent, item]) - min(b, s))
        return self._cursors[agent].gain(item)

    def gains_active(self, item: int) -> np.ndarray:
        """Marginal gains aligned with ``active_ids``."""
        if self._fast:
            s = self._spent[self.active_ids]
            b = self._budget[self.active_ids]
            bid = self._bids[self.active_ids, item]
            return np.minimum(b, s + bid) - np.minimum(b, s)
        return np.array([self._cursors[a].gain(item) for a in self.active_ids])

    def assign(self, agent: Optional[int], item: int) -> float:
        """Apply a policy decision; returns the realized gain (0 on discard)."""
        if agent is None:
            return 0.0
        self.held[agent] += 1
        if not self.active[agent]:
            return 0.0  # zero value for a deactivated agent, item still held
        if self._fast:
            before = min(self._budget[agent], self._spent[agent])
            self._spent[agent] += self._bids[agent, item]
            gain = float(min(self._budget[agent], self._spent[agent]) - before)
        else:
            gain = self._cursors[agent].add(item)
        self.welfare += gain
        return gain


def _select(gains: np.ndarray, active_ids: np.ndarray, tie_break: str,
            rng: np.random.Generator) -> int:
    if tie_break == "lowest":
        return int(active_ids[int(np.argmax(gains))])
    best = gains.max()
    tied = active_ids[gains == best]
    return int(tied[rng.integers(len(tied))])


@dataclass
class GreedyPolicy:
    """Assign each item to an active agent with the largest marginal gain.

    Ties go to the lowest agent id by default; ``tie_break="random"`` picks
    uniformly among the maximizers using the trial RNG.  All-zero gains still
    assign the item (irrevocably) to the tie-break winner.
    """

    tie_break: str = "lowest"

    def __post_init__(self):
        if self.tie_break not in ("lowest", "random"):
            raise ValueError("tie_break must be 'lowest' or 'random'")

    def choose(self, state: PolicyState, item: int) -> Optional[int]:
        ids = state.active_ids
        if ids.size == 0:
            return None
        return _select(state.gains_active(item), ids, self.tie_break, state.rng)


@dataclass
class RandomPolicy:
    """Assign each item to a uniformly-random active agent (baseline)."""

    def choose(self, state: PolicyState, item: int) -> Optional[int]:
        ids = state.active_ids
        if ids.size == 0:
            return None
        return int(ids[state.rng.integers(ids.size)])


class LpGuidedPolicy:
    """Randomized rule driven by a solved multiset LP.

    Item type j goes to agent i with probability y[i, j] / (p_j * draws) and
    is discarded with the leftover probability; for every j these
    probabilities must sum to at most one, which is exactly the LP's per-type
    feasibility row.
    """

    def __init__(self, y: np.ndarray, p: Sequence[float], draws: int, tol: float = 1e-7):
        y = np.asarray(y, dtype=float)
        p = np.asarray(p, dtype=float)
        if y.ndim != 2 or y.shape[1] != len(p):
            raise ValueError("y must be (num_agents, num_types) matching p")
        if (y < -tol).any():
            raise ValueError("y must be nonnegative")
        cap = p * draws
        if np.any(y.sum(axis=0) > cap + tol):
            raise ValueError("y violates the per-type LP rows: sum_i y[i,j] <= p_j * draws")
        self.probs = np.zeros_like(y)
        nz = cap > 0
        self.probs[:, nz] = np.clip(y[:, nz], 0.0, None) / cap[nz]

    def choose(self, state: PolicyState, item: int) -> Optional[int]:
        r = state.rng.random()
        acc = 0.0
        for agent in range(state.num_agents):
            acc += self.probs[agent, item]
            if r < acc:
                return agent
        return None


@dataclass
class StepRecord:
    step: int
    stage: int
    item: int
    agent: Optional[int]
    gain: float
    welfare: float


@dataclass
class RunTrace:
    """Everything observable from one online run."""

    welfare: float
    per_agent_value: np.ndarray
    per_agent_items: np.ndarray
    deact_stage: np.ndarray
    stage_agent_items: np.ndarray  # (num_stages, num_agents) items assigned
    items_arrived: List[int]
    steps: Optional[List[StepRecord]] = None
    welfare_curve: Optional[np.ndarray] = None

    def allocation(self, inst: OnlineInstance) -> Allocation:
        if self.steps is None:
            raise ValueError("allocation reconstruction needs recorded steps")
        m = inst.agents[0].num_items if inst.agents else 0
        bundles = [dict() for _ in range(inst.num_agents)]
        for rec in self.steps:
            if rec.agent is not None:
                bundles[rec.agent][rec.item] = bundles[rec.agent].get(rec.item, 0) + 1
        return Allocation([ItemMultiset(b, m) for b in bundles], self.welfare)


POLICIES = ("greedy", "greedy_random_ties", "random")


def make_policy(name: str):
    if name == "greedy":
        return GreedyPolicy()
    if name == "greedy_random_ties":
        return GreedyPolicy(tie_break="random")
    if name == "random":
        return RandomPolicy()
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICIES}")


def run_online(inst: OnlineInstance, policy, seed: Optional[int] = None,
               record_steps: bool = False, record_welfare_curve: bool = False,
               use_fast_path: bool = True) -> RunTrace:
    """Process the arrival in order under ``policy`` and return the trace.

    The seed drives, in a fixed order, the deactivation schedule, the i.i.d.
    draws (when the arrival is stochastic), and any policy randomness, so
    runs are deterministic end to end.
    """
    if isinstance(policy, str):
        policy = make_policy(policy)
    if seed is None:
        seed = int(inst.meta.get("seed", 0))
    rng = np.random.default_rng(seed)
    deact = materialize_activity(inst, rng)

    if inst.arrival.kind == "stages":
        staged_items = [(s_idx, item)
                        for s_idx, items in enumerate(inst.arrival.stages, start=1)
                        for item in items]
    else:
        p = np.asarray(inst.arrival.p)
        draws = rng.choice(len(p), size=inst.arrival.draws, p=p)
        staged_items = [(1, int(d)) for d in draws]

    state = PolicyState(inst, deact, rng, use_fast_path=use_fast_path)
    num_stages = inst.num_stages
    stage_agent_items = np.zeros((num_stages, inst.num_agents), dtype=np.int64)
    steps: Optional[List[StepRecord]] = [] if record_steps else None
    curve: Optional[List[float]] = [] if record_welfare_curve else None
    items_arrived: List[int] = []

    current_stage = 0
    for step_idx, (stage, item) in enumerate(staged_items):
        if stage != current_stage:
            current_stage = stage
            state.set_stage(stage)
        items_arrived.append(item)
        agent = policy.choose(state, item)
        gain = state.assign(agent, item)
        if agent is not None:
            stage_agent_items[stage - 1, agent] += 1
        if steps is not None:
            steps.append(StepRecord(step_idx, stage, item, agent, gain, state.welfare))
        if curve is not None:
            curve.append(state.welfare)

    return RunTrace(
        welfare=state.welfare,
        per_agent_value=state.values(),
        per_agent_items=state.held.copy(),
        deact_stage=deact,
        stage_agent_items=stage_agent_items,
        items_arrived=items_arrived,
        steps=steps,
        welfare_curve=None if curve is None else np.asarray(curve),
    )


def offline_opt_bruteforce(valuations: Sequence[Valuation], items: Sequence[int],
                           allowed: Optional[Sequence[Sequence[int]]] = None,
                           limit: int = BRUTEFORCE_LIMIT) -> Tuple[Allocation, float]:
    """Exact offline optimum by exhaustive assignment enumeration.

    ``allowed`` optionally restricts, per arriving item, which agents may
    receive it (the activity mask); items with no permitted agent are left
    unassigned.  Raises ResourceLimitError when the assignment space exceeds
    ``limit`` -- use the LP bound at that scale instead.
    """
    n = len(valuations)
    if n == 0:
        raise ValueError("need at least one agent")
    allowed_lists: List[List[int]] = []
    for idx, item in enumerate(items):
        opts = list(range(n)) if allowed is None else [a for a in allowed[idx] if 0 <= a < n]
        allowed_lists.append(opts)

    space = 1
    for opts in allowed_lists:
        space *= max(1, len(opts))
        if space > limit:
            raise ResourceLimitError(
                f"assignment space exceeds {limit}; use an LP bound instead")

    cursors = [v.cursor() for v in valuations]
    best_welfare = -1.0
    best_assign: List[Optional[int]] = [None] * len(items)
    assign: List[Optional[int]] = [None] * len(items)

    def rec(idx: int, welfare: float):
        nonlocal best_welfare, best_assign
        if idx == len(items):
            if welfare > best_welfare:
                best_welfare = welfare
                best_assign = assign.copy()
            return
        item = items[idx]
        opts = allowed_lists[idx]
        if not opts:
            assign[idx] = None
            rec(idx + 1, welfare)
            return
        for agent in opts:
            saved = cursors[agent]
            cursors[agent] = saved.copy()
            gain = cursors[agent].add(item)
            assign[idx] = agent
            rec(idx + 1, welfare + gain)
            cursors[agent] = saved
        assign[idx] = None

    rec(0, 0.0)

    m = valuations[0].num_items
    bundles: List[Dict[int, int]] = [dict() for _ in range(n)]
    for idx, agent in enumerate(best_assign):
        if agent is not None:
            item = items[idx]
            bundles[agent][item] = bundles[agent].get(item, 0) + 1
    alloc = Allocation.from_bundles(valuations, [ItemMultiset(b, m) for b in bundles])
    return alloc, best_welfare


def offline_opt_for_instance(inst: OnlineInstance, seed: Optional[int] = None,
                             limit: int = BRUTEFORCE_LIMIT) -> Tuple[Allocation, float]:
    """Offline optimum of one materialized realization of an online instance.

    The seed fixes the deactivation schedule and any i.i.d. draws exactly as
    in :func:`run_online`; the activity mask restricts each item to the
    agents active at its arrival stage.
    """
    if seed is None:
        seed = int(inst.meta.get("seed", 0))
    rng = np.random.default_rng(seed)
    deact = materialize_activity(inst, rng)
    if inst.arrival.kind == "stages":
        pairs = [(s_idx, item)
                 for s_idx, items in enumerate(inst.arrival.stages, start=1)
                 for item in items]
    else:
        p = np.asarray(inst.arrival.p)
        draws = rng.choice(len(p), size=inst.arrival.draws, p=p)
        pairs = [(1, int(d)) for d in draws]
    items = [item for _, item in pairs]
    allowed = [[a for a in range(inst.num_agents) if deact[a] >= stage]
               for stage, _ in pairs]
    return offline_opt_bruteforce(inst.agents, items, allowed, limit)


def expected_offline_opt_iid(valuations: Sequence[Valuation], p: Sequence[float],
                             draws: int, limit: int = 200_000) -> float:
    """E[offline optimum] under i.i.d. draws, by exhausting all type sequences."""
    p = np.asarray(p, dtype=float)
    num_types = len(p)
    sequences = num_types ** draws
    if sequences > limit:
        raise ResourceLimitError(f"{sequences} arrival sequences exceed the limit {limit}")
    total = 0.0
    for seq in itertools.product(range(num_types), repeat=draws):
        prob = float(np.prod(p[list(seq)])) if draws else 1.0
        if prob == 0.0:
            continue
        _, opt = offline_opt_bruteforce(valuations, list(seq))
        total += prob * opt
    return total


def trace_to_json(trace: RunTrace) -> dict:
    d = {
        "welfare": trace.welfare,
        "per_agent_value": [float(v) for v in trace.per_agent_value],
        "per_agent_items": [int(v) for v in trace.per_agent_items],
        "deact_stage": [int(v) for v in trace.deact_stage],
        "items_arrived": [int(v) for v in trace.items_arrived],
    }
    if trace.steps is not None:
        d["steps"] = [
            {"step": s.step, "stage": s.stage, "item": s.item,
             "agent": s.agent, "gain": s.gain, "welfare": s.welfare}
            for s in trace.steps
        ]
    return d


def trace_to_csv(trace: RunTrace) -> str:
    if trace.steps is None:
        raise ValueError("CSV export needs a trace recorded with record_steps=True")
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["step", "item", "agent", "gain", "welfare"])
    for s in trace.steps:
        writer.writerow([s.step, s.item, "" if s.agent is None else s.agent, s.gain, s.welfare])
    return buf.getvalue()
