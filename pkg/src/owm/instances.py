"""Instance constructors: planted set systems, cyclic-shift coverage markets,
staged deactivation instances, the budget-additive building block, and i.i.d.
replicated instances.

Construction is pure given (parameters, seed); instances are immutable and
shareable across trials.  Randomized deactivation schedules are materialized
per trial from the trial's RNG stream via :func:`materialize_activity`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .valuations import (
    BudgetAdditiveValuation,
    CoverageValuation,
    ItemMultiset,
    Valuation,
    valuation_from_json,
    valuation_to_json,
)


@dataclass
class SetSystemInstance:
    """k groups of n sets over a universe, every set of the same size s.

    ``planted`` gives, per group, the index of a set such that the k chosen
    sets are pairwise disjoint and cover the universe (|U| = k*s).
    """

    universe_size: int
    k: int
    n: int
    s: int
    sets: List[List[Tuple[int, ...]]]
    planted: Optional[List[int]] = None

    def __post_init__(self):
        if len(self.sets) != self.k:
            raise ValueError(f"expected {self.k} groups, got {len(self.sets)}")
        for group in self.sets:
            if len(group) != self.n:
                raise ValueError(f"every group must contain {self.n} sets")
            for st in group:
                if len(st) != self.s:
                    raise ValueError(f"every set must have size {self.s}")
                if any(e < 0 or e >= self.universe_size for e in st):
                    raise ValueError("set element outside the universe")
        if self.planted is not None:
            if len(self.planted) != self.k:
                raise ValueError("planted cover must pick one set per group")
            chosen = [set(self.sets[j][self.planted[j]]) for j in range(self.k)]
            union = set().union(*chosen) if chosen else set()
            if sum(len(c) for c in chosen) != len(union) or len(union) != self.universe_size:
                raise ValueError("planted sets must be disjoint and cover the universe")


def make_planted_cover_system(k: int, n: int, s: int, seed: int) -> SetSystemInstance:
    """Random grouped set system with a planted disjoint cover.

    The universe is [0, k*s); set 0 of group j is the contiguous block
    [j*s, (j+1)*s), so the planted cover is set 0 of every group.  All other
    sets are uniform s-subsets drawn from the seeded generator.
    """
    if min(k, n, s) < 1:
        raise ValueError("k, n, s must all be >= 1")
    rng = np.random.default_rng(seed)
    u = k * s
    sets: List[List[Tuple[int, ...]]] = []
    for j in range(k):
        group: List[Tuple[int, ...]] = [tuple(range(j * s, (j + 1) * s))]
        for _ in range(n - 1):
            group.append(tuple(sorted(rng.choice(u, size=s, replace=False).tolist())))
        sets.append(group)
    return SetSystemInstance(u, k, n, s, sets, planted=[0] * k)


def make_random_system(k: int, n: int, s: int, universe_size: int, seed: int) -> SetSystemInstance:
    """Grouped set system of uniform random s-subsets, no planted structure.

    Stand-in for instances without a perfect cover; cover quality is measured
    rather than assumed.
    """
    if min(k, n, s) < 1 or universe_size < s:
        raise ValueError("need k, n, s >= 1 and universe_size >= s")
    rng = np.random.default_rng(seed)
    sets = [
        [tuple(sorted(rng.choice(universe_size, size=s, replace=False).tolist())) for _ in range(n)]
        for _ in range(k)
    ]
    return SetSystemInstance(universe_size, k, n, s, sets, planted=None)


@dataclass
class OfflineCoverageInstance:
    """n agents, m = k*n items labeled by pairs (j1, j2).

    Agent i values item (j1, j2) through the group-j1 set at index
    (j2 + i) mod n, so every agent sees the same system under a cyclic shift
    of the within-group labels.
    """

    system: SetSystemInstance

    @property
    def num_agents(self) -> int:
        return self.system.n

    @property
    def num_items(self) -> int:
        return self.system.k * self.system.n

    def item_pair(self, index: int) -> Tuple[int, int]:
        return divmod(index, self.system.n)

    def item_index(self, j1: int, j2: int) -> int:
        return j1 * self.system.n + j2

    def agent_valuation(self, agent: int) -> CoverageValuation:
        sys_ = self.system
        sets = []
        for j1 in range(sys_.k):
            for j2 in range(sys_.n):
                sets.append(sys_.sets[j1][(j2 + agent) % sys_.n])
        return CoverageValuation(sys_.universe_size, sets)

    def valuations(self) -> List[CoverageValuation]:
        return [self.agent_valuation(i) for i in range(self.num_agents)]


def make_cyclic_instance(system: SetSystemInstance) -> OfflineCoverageInstance:
    return OfflineCoverageInstance(system)


@dataclass
class Allocation:
    """Disjoint per-agent item multisets with their total welfare."""

    bundles: List[ItemMultiset]
    welfare: float

    @classmethod
    def from_bundles(cls, valuations: Sequence[Valuation], bundles: Sequence[ItemMultiset]) -> "Allocation":
        welfare = sum(v.value(b) for v, b in zip(valuations, bundles))
        return cls(list(bundles), float(welfare))

    def items_assigned(self) -> int:
        return sum(b.size() for b in self.bundles)

    def is_disjoint(self) -> bool:
        seen: Dict[int, int] = {}
        for b in self.bundles:
            for item, c in b.counts.items():
                seen[item] = seen.get(item, 0) + c
        return all(c <= 1 for c in seen.values())


def yes_allocation(inst: OfflineCoverageInstance) -> Allocation:
    """The perfect allocation on a planted instance.

    Agent i receives the k items {(j, (planted[j] - i) mod n)}; the cyclic
    shift makes the bundles disjoint and each agent covers the whole
    universe, so welfare is n * |U|.
    """
    sys_ = inst.system
    if sys_.planted is None:
        raise ValueError("instance has no planted cover")
    m = inst.num_items
    bundles = []
    for i in range(sys_.n):
        items = [inst.item_index(j, (sys_.planted[j] - i) % sys_.n) for j in range(sys_.k)]
        bundles.append(ItemMultiset.from_items(items, m))
    return Allocation.from_bundles(inst.valuations(), bundles)


@dataclass
class Arrival:
    """Item arrival process: explicit stages, or i.i.d. draws over item types."""

    kind: str  # "stages" | "iid"
    stages: Optional[List[List[int]]] = None
    p: Optional[List[float]] = None
    draws: int = 0

    def __post_init__(self):
        if self.kind == "stages":
            if not self.stages:
                raise ValueError("stages arrival needs at least one stage")
        elif self.kind == "iid":
            if self.p is None or self.draws < 0:
                raise ValueError("iid arrival needs probabilities and a draw count")
            p = np.asarray(self.p, dtype=float)
            if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError("iid probabilities must be a probability vector")
        else:
            raise ValueError(f"unknown arrival kind {self.kind!r}")

    @property
    def num_stages(self) -> int:
        return len(self.stages) if self.kind == "stages" else 1


@dataclass
class Activity:
    """Per-agent deactivation schedule or the rule that samples one.

    Kinds:
      * ``none`` - every agent active through the last stage.
      * ``fixed`` - explicit deactivate-after stage per agent.
      * ``one_per_group`` - after every stage, each group independently
        deactivates one member chosen uniformly among its remaining ones.
      * ``whole_group`` - after every stage, one uniformly-chosen remaining
        group is deactivated entirely.
    """

    kind: str = "none"
    deactivate_after: Optional[List[int]] = None
    groups: Optional[List[List[int]]] = None

    def __post_init__(self):
        if self.kind not in ("none", "fixed", "one_per_group", "whole_group"):
            raise ValueError(f"unknown activity kind {self.kind!r}")
        if self.kind == "fixed" and self.deactivate_after is None:
            raise ValueError("fixed activity needs deactivate_after stages")
        if self.kind in ("one_per_group", "whole_group") and not self.groups:
            raise ValueError(f"{self.kind} activity needs groups")


@dataclass
class OnlineInstance:
    """Agents with valuation oracles, an arrival process, and an activity rule."""

    agents: List[Valuation]
    arrival: Arrival
    activity: Activity = field(default_factory=Activity)
    meta: Dict = field(default_factory=dict)

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def num_stages(self) -> int:
        return self.arrival.num_stages


def materialize_activity(inst: OnlineInstance, rng: np.random.Generator) -> np.ndarray:
    """Resolve the activity rule into deactivate-after stages, one per agent.

    Agent a is active during stages 1..out[a]; items arriving later are
    worth exactly zero to it.  Sampling one uniform member per stage is
    realized as a uniform random deactivation order.
    """
    n = inst.num_agents
    t = inst.num_stages
    act = inst.activity
    if act.kind == "none":
        return np.full(n, t, dtype=np.int64)
    if act.kind == "fixed":
        out = np.asarray(act.deactivate_after, dtype=np.int64)
        if out.shape != (n,):
            raise ValueError("deactivate_after must list one stage per agent")
        return out.copy()
    out = np.zeros(n, dtype=np.int64)
    if act.kind == "one_per_group":
        for group in act.groups:
            if len(group) != t:
                raise ValueError("one_per_group needs exactly one member per stage")
            order = rng.permutation(len(group))
            for stage_idx, member_idx in enumerate(order):
                out[group[member_idx]] = stage_idx + 1
        return out
    # whole_group
    if len(act.groups) != t:
        raise ValueError("whole_group needs exactly one group per stage")
    order = rng.permutation(len(act.groups))
    for stage_idx, group_idx in enumerate(order):
        for agent in act.groups[group_idx]:
            out[agent] = stage_idx + 1
    return out


def make_staged_instance(base: OfflineCoverageInstance, t: int, seed: int,
                         within_stage_order: Optional[Sequence[int]] = None) -> OnlineInstance:
    """t stages of the base instance's items with t copies of each agent.

    Stage r's copy of base item b is the distinct item id r*m + b, valued
    through the base set system by every copy of an agent.  After each stage
    one copy of each base agent deactivates, chosen uniformly among its
    remaining copies when the schedule is materialized.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    m = base.num_items
    n = base.num_agents
    order = list(range(m)) if within_stage_order is None else list(within_stage_order)
    if sorted(order) != list(range(m)):
        raise ValueError("within_stage_order must be a permutation of the base items")

    agents: List[Valuation] = []
    groups: List[List[int]] = []
    for i in range(n):
        base_val = base.agent_valuation(i)
        copies_val = CoverageValuation(base_val.universe_size, list(base_val.sets) * t)
        group = []
        for c in range(t):
            group.append(i * t + c)
            agents.append(copies_val)
        groups.append(group)

    stages = [[r * m + b for b in order] for r in range(t)]
    sys_ = base.system
    meta = {
        "family": "coverage_staged",
        "k": sys_.k, "n": sys_.n, "s": sys_.s, "t": t, "seed": seed,
        "universe_size": sys_.universe_size, "base_items": m,
        "planted": sys_.planted is not None,
    }
    return OnlineInstance(agents, Arrival("stages", stages=stages),
                          Activity("one_per_group", groups=groups), meta)


def staged_yes_allocation(inst: OnlineInstance, base: OfflineCoverageInstance,
                          deact_stage: Sequence[int]) -> Allocation:
    """Offline allocation for a planted staged instance under a known schedule.

    Stage j's items go, in the perfect per-stage pattern, to the copies that
    deactivate right after stage j; every receiving copy covers the universe,
    so the welfare is t * n * |U|.
    """
    sys_ = base.system
    if sys_.planted is None:
        raise ValueError("base instance has no planted cover")
    t = inst.num_stages
    n = base.num_agents
    m = base.num_items
    total_items = t * m
    # copy of base agent i deactivated after stage j
    copy_at_stage = {}
    for i in range(n):
        for c in range(t):
            agent = i * t + c
            copy_at_stage[(i, deact_stage[agent])] = agent
    bundles = [ItemMultiset({}, total_items) for _ in range(inst.num_agents)]
    for stage in range(1, t + 1):
        offset = (stage - 1) * m
        for i in range(n):
            agent = copy_at_stage[(i, stage)]
            items = [offset + base.item_index(j, (sys_.planted[j] - i) % sys_.n)
                     for j in range(sys_.k)]
            bundles[agent] = ItemMultiset.from_items(items, total_items)
    return Allocation.from_bundles(inst.agents, bundles)


def make_budget_block() -> OnlineInstance:
    """Two agents with budget 3, three items each bid at 2, one stage."""
    val = BudgetAdditiveValuation([2.0, 2.0, 2.0], 3.0)
    meta = {"family": "budget_block", "t": 1}
    return OnlineInstance([val, val], Arrival("stages", stages=[[0, 1, 2]]),
                          Activity("none"), meta)


def make_budget_staged(t: int, seed: int) -> OnlineInstance:
    """t stages of three bid-2 items with 2t budget-3 agents in pairs.

    After each stage one uniformly-random remaining pair deactivates; items
    arriving later are worthless to it.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    val = BudgetAdditiveValuation([2.0] * (3 * t), 3.0)
    agents: List[Valuation] = [val] * (2 * t)
    stages = [[3 * r, 3 * r + 1, 3 * r + 2] for r in range(t)]
    groups = [[2 * s_, 2 * s_ + 1] for s_ in range(t)]
    meta = {"family": "budget_staged", "t": t, "seed": seed}
    return OnlineInstance(agents, Arrival("stages", stages=stages),
                          Activity("whole_group", groups=groups), meta)


def make_iid_instance(base: OfflineCoverageInstance, t: int) -> OnlineInstance:
    """t copies of each agent; t*m uniform i.i.d. draws over the m base items."""
    if t < 1:
        raise ValueError("t must be >= 1")
    m = base.num_items
    n = base.num_agents
    agents: List[Valuation] = []
    for i in range(n):
        val = base.agent_valuation(i)
        agents.extend([val] * t)
    sys_ = base.system
    meta = {
        "family": "coverage_iid",
        "k": sys_.k, "n": sys_.n, "s": sys_.s, "t": t,
        "universe_size": sys_.universe_size, "base_items": m,
        "planted": sys_.planted is not None,
    }
    return OnlineInstance(agents, Arrival("iid", p=[1.0 / m] * m, draws=t * m),
                          Activity("none"), meta)


def make_iid_block(draws: int = 3) -> OnlineInstance:
    """Budget-block valuations receiving uniform i.i.d. draws over the 3 item types."""
    val = BudgetAdditiveValuation([2.0, 2.0, 2.0], 3.0)
    meta = {"family": "budget_iid", "draws": draws}
    return OnlineInstance([val, val], Arrival("iid", p=[1 / 3] * 3, draws=draws),
                          Activity("none"), meta)


def instance_to_json(inst: OnlineInstance) -> dict:
    arrival: Dict = {"type": inst.arrival.kind}
    if inst.arrival.kind == "stages":
        arrival["stages"] = [list(s) for s in inst.arrival.stages]
    else:
        arrival["p"] = list(inst.arrival.p)
        arrival["draws"] = inst.arrival.draws
    activity: Dict = {"type": inst.activity.kind}
    if inst.activity.deactivate_after is not None:
        activity["deactivate_after"] = list(inst.activity.deactivate_after)
    if inst.activity.groups is not None:
        activity["groups"] = [list(g) for g in inst.activity.groups]
    return {
        "agents": [valuation_to_json(v) for v in inst.agents],
        "arrival": arrival,
        "activity": activity,
        "meta": dict(inst.meta),
    }


def instance_from_json(d: dict) -> OnlineInstance:
    agents = [valuation_from_json(a) for a in d["agents"]]
    arr = d["arrival"]
    if arr["type"] == "stages":
        arrival = Arrival("stages", stages=[list(s) for s in arr["stages"]])
    elif arr["type"] == "iid":
        arrival = Arrival("iid", p=list(arr["p"]), draws=int(arr["draws"]))
    else:
        raise ValueError(f"unknown arrival type {arr['type']!r}")
    act = d.get("activity", {"type": "none"})
    activity = Activity(act.get("type", "none"),
                        deactivate_after=act.get("deactivate_after"),
                        groups=act.get("groups"))
    return OnlineInstance(agents, arrival, activity, dict(d.get("meta", {})))
