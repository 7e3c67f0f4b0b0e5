"""Valuation oracles on item multisets and exhaustive property checkers.

Valuations map multisets of items (nonnegative integer count vectors) to
nonnegative reals.  Three concrete oracles are provided: coverage (size of
the union of per-item sets), budget-additive (capped sum of per-item bids),
and tabular (explicit value table over a bounded box, the escape hatch for
arbitrary oracles).  ``check_property`` is an exhaustive decision procedure
for monotonicity, diminishing returns, and lattice submodularity on a box;
a violation always ships a concrete, re-checkable counterexample.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

PROPERTIES = ("monotone", "diminishing_returns", "lattice_submodular")

DEFAULT_CHECK_BUDGET = 2_000_000


class ResourceLimitError(RuntimeError):
    """Raised when an exhaustive enumeration would exceed its configured budget."""


@dataclass
class ItemMultiset:
    """Nonnegative multiplicity vector over items 0..m-1, stored sparsely."""

    counts: Dict[int, int] = field(default_factory=dict)
    m: int = 0

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("universe size m must be positive")
        for item, c in self.counts.items():
            if not (0 <= item < self.m):
                raise ValueError(f"item id {item} out of range [0, {self.m})")
            if c < 0:
                raise ValueError(f"negative multiplicity for item {item}")
        # drop explicit zeros so equality and support are canonical
        self.counts = {i: c for i, c in self.counts.items() if c > 0}

    @classmethod
    def from_items(cls, items: Iterable[int], m: int) -> "ItemMultiset":
        counts: Dict[int, int] = {}
        for i in items:
            counts[i] = counts.get(i, 0) + 1
        return cls(counts, m)

    @classmethod
    def from_dense(cls, dense: Sequence[int]) -> "ItemMultiset":
        return cls({i: c for i, c in enumerate(dense) if c}, len(dense))

    def dense(self) -> Tuple[int, ...]:
        return tuple(self.counts.get(i, 0) for i in range(self.m))

    def size(self) -> int:
        return sum(self.counts.values())

    def get(self, item: int) -> int:
        return self.counts.get(item, 0)

    def support(self) -> frozenset:
        return frozenset(self.counts)

    def added(self, item: int) -> "ItemMultiset":
        if not (0 <= item < self.m):
            raise ValueError(f"item id {item} out of range [0, {self.m})")
        counts = dict(self.counts)
        counts[item] = counts.get(item, 0) + 1
        return ItemMultiset(counts, self.m)

    def le(self, other: "ItemMultiset") -> bool:
        return all(c <= other.get(i) for i, c in self.counts.items())

    def join(self, other: "ItemMultiset") -> "ItemMultiset":
        items = set(self.counts) | set(other.counts)
        return ItemMultiset({i: max(self.get(i), other.get(i)) for i in items}, self.m)

    def meet(self, other: "ItemMultiset") -> "ItemMultiset":
        items = set(self.counts) & set(other.counts)
        return ItemMultiset({i: min(self.get(i), other.get(i)) for i in items}, self.m)


class Valuation:
    """Base valuation oracle; immutable after construction."""

    num_items: int
    integer_valued: bool = False

    def value(self, x: ItemMultiset) -> float:
        raise NotImplementedError

    def marginal_gain(self, x: ItemMultiset, item: int) -> float:
        self._check_item(item)
        return self.value(x.added(item)) - self.value(x)

    def cursor(self) -> "ValuationCursor":
        return GenericCursor(self)

    def _check_item(self, item: int):
        if not (0 <= item < self.num_items):
            raise ValueError(f"item id {item} out of range [0, {self.num_items})")

    def _check_multiset(self, x: ItemMultiset):
        if x.m != self.num_items:
            raise ValueError(f"multiset universe {x.m} != valuation universe {self.num_items}")

    def to_json(self) -> dict:
        raise ValueError(f"{type(self).__name__} has no JSON form")


class ValuationCursor:
    """Incremental evaluation state for one agent: value so far, O(1)-ish gains."""

    value: float

    def gain(self, item: int) -> float:
        raise NotImplementedError

    def add(self, item: int) -> float:
        """Apply the item; returns the realized gain."""
        raise NotImplementedError

    def copy(self) -> "ValuationCursor":
        raise NotImplementedError


class GenericCursor(ValuationCursor):
    def __init__(self, valuation: Valuation, counts: Optional[Dict[int, int]] = None):
        self._v = valuation
        self._counts: Dict[int, int] = dict(counts) if counts else {}
        self.value = valuation.value(ItemMultiset(dict(self._counts), valuation.num_items))

    def gain(self, item: int) -> float:
        x = ItemMultiset(dict(self._counts), self._v.num_items)
        return self._v.value(x.added(item)) - self.value

    def add(self, item: int) -> float:
        g = self.gain(item)
        self._counts[item] = self._counts.get(item, 0) + 1
        self.value += g
        return g

    def copy(self) -> "GenericCursor":
        c = GenericCursor.__new__(GenericCursor)
        c._v = self._v
        c._counts = dict(self._counts)
        c.value = self.value
        return c


class CoverageValuation(Valuation):
    """w(x) = size of the union of the sets attached to the support of x.

    Unions are computed on integer bitmasks, so evaluation is O(|U|/w) per
    item regardless of multiplicities; extra copies of an item never cover
    new elements.
    """

    integer_valued = True

    def __init__(self, universe_size: int, sets: Sequence[Iterable[int]]):
        if universe_size <= 0:
            raise ValueError("universe_size must be positive")
        self.universe_size = universe_size
        self.sets: List[Tuple[int, ...]] = []
        self.masks: List[int] = []
        for s in sets:
            elems = sorted(set(s))
            if elems and (elems[0] < 0 or elems[-1] >= universe_size):
                raise ValueError("set element outside the universe")
            self.sets.append(tuple(elems))
            mask = 0
            for e in elems:
                mask |= 1 << e
            self.masks.append(mask)
        self.num_items = len(self.sets)

    def value(self, x: ItemMultiset) -> float:
        self._check_multiset(x)
        mask = 0
        for item in x.counts:
            mask |= self.masks[item]
        return float(mask.bit_count())

    def cursor(self) -> "CoverageCursor":
        return CoverageCursor(self.masks)

    def to_json(self) -> dict:
        return {
            "kind": "coverage",
            "universe_size": self.universe_size,
            "sets": [list(s) for s in self.sets],
        }


class CoverageCursor(ValuationCursor):
    def __init__(self, masks: List[int], covered: int = 0):
        self._masks = masks
        self._covered = covered
        self.value = float(covered.bit_count())

    def gain(self, item: int) -> float:
        return float((self._masks[item] | self._covered).bit_count()) - self.value

    def add(self, item: int) -> float:
        self._covered |= self._masks[item]
        new = float(self._covered.bit_count())
        g = new - self.value
        self.value = new
        return g

    def copy(self) -> "CoverageCursor":
        return CoverageCursor(self._masks, self._covered)


class BudgetAdditiveValuation(Valuation):
    """w(x) = min(budget, sum of per-copy bids); bids are clamped to the budget."""

    def __init__(self, bids: Sequence[float], budget: float):
        if budget < 0:
            raise ValueError("budget must be nonnegative")
        if any(b < 0 for b in bids):
            raise ValueError("bids must be nonnegative")
        self.budget = float(budget)
        # bids above the budget never change any allocation's value
        self.bids: Tuple[float, ...] = tuple(min(float(b), self.budget) for b in bids)
        self.num_items = len(self.bids)

    def value(self, x: ItemMultiset) -> float:
        self._check_multiset(x)
        total = sum(self.bids[i] * c for i, c in x.counts.items())
        return min(self.budget, total)

    def cursor(self) -> "BudgetCursor":
        return BudgetCursor(self.bids, self.budget)

    def to_json(self) -> dict:
        return {"kind": "budget_additive", "bids": list(self.bids), "budget": self.budget}


class BudgetCursor(ValuationCursor):
    def __init__(self, bids: Sequence[float], budget: float, spent: float = 0.0):
        self._bids = bids
        self._budget = budget
        self._spent = spent
        self.value = min(budget, spent)

    def gain(self, item: int) -> float:
        return min(self._budget, self._spent + self._bids[item]) - self.value

    def add(self, item: int) -> float:
        self._spent += self._bids[item]
        new = min(self._budget, self._spent)
        g = new - self.value
        self.value = new
        return g

    def copy(self) -> "BudgetCursor":
        return BudgetCursor(self._bids, self._budget, self._spent)


class TabularValuation(Valuation):
    """Explicit value table over every lattice point of a box (per-item caps).

    The table is stored flat in row-major (lexicographic) order over the box;
    the origin's value is values[0].
    """

    def __init__(self, box: Sequence[int], values: Sequence[float], integer_valued: bool = False):
        self.box: Tuple[int, ...] = tuple(int(c) for c in box)
        if any(c < 0 for c in self.box):
            raise ValueError("box caps must be nonnegative")
        expected = 1
        for c in self.box:
            expected *= c + 1
        if len(values) != expected:
            raise ValueError(f"table needs {expected} entries for box {self.box}, got {len(values)}")
        self.values: Tuple[float, ...] = tuple(float(v) for v in values)
        self.num_items = len(self.box)
        self.integer_valued = integer_valued
        # row-major strides
        self._strides = [0] * self.num_items
        acc = 1
        for i in range(self.num_items - 1, -1, -1):
            self._strides[i] = acc
            acc *= self.box[i] + 1

    @classmethod
    def from_function(cls, box: Sequence[int], fn: Callable[[Tuple[int, ...]], float],
                      integer_valued: bool = False) -> "TabularValuation":
        pts = itertools.product(*(range(c + 1) for c in box))
        return cls(box, [float(fn(p)) for p in pts], integer_valued)

    def value_at(self, point: Sequence[int]) -> float:
        idx = 0
        for i, c in enumerate(point):
            if not (0 <= c <= self.box[i]):
                raise ValueError(f"point {tuple(point)} outside box {self.box}")
            idx += c * self._strides[i]
        return self.values[idx]

    def value(self, x: ItemMultiset) -> float:
        self._check_multiset(x)
        return self.value_at(x.dense())

    def to_json(self) -> dict:
        d = {"kind": "tabular", "box": list(self.box), "values": list(self.values)}
        if self.integer_valued:
            d["integer_valued"] = True
        return d


class CapExtension(Valuation):
    """Extension of a set function to multisets: extra copies add zero value.

    Wraps an oracle f on subsets of [0, m); the multiset value is f applied
    to the support, i.e. counts are clamped to one.
    """

    def __init__(self, set_fn: Callable[[frozenset], float], num_items: int,
                 integer_valued: bool = False):
        self._fn = set_fn
        self.num_items = num_items
        self.integer_valued = integer_valued

    def value(self, x: ItemMultiset) -> float:
        self._check_multiset(x)
        return float(self._fn(x.support()))

    def cursor(self) -> "CapExtensionCursor":
        return CapExtensionCursor(self._fn, frozenset())


class CapExtensionCursor(ValuationCursor):
    def __init__(self, set_fn, support: frozenset):
        self._fn = set_fn
        self._support = support
        self.value = float(set_fn(support))

    def gain(self, item: int) -> float:
        if item in self._support:
            return 0.0
        return float(self._fn(self._support | {item})) - self.value

    def add(self, item: int) -> float:
        g = self.gain(item)
        self._support = self._support | {item}
        self.value += g
        return g

    def copy(self) -> "CapExtensionCursor":
        return CapExtensionCursor(self._fn, self._support)


def cap_extension(set_fn: Callable[[frozenset], float], num_items: int,
                  integer_valued: bool = False) -> CapExtension:
    """Lift a set-function oracle on {0,1}^m to multisets by capping counts at one."""
    return CapExtension(set_fn, num_items, integer_valued)


@dataclass
class Counterexample:
    x: Tuple[int, ...]
    y: Tuple[int, ...]
    item: Optional[int]
    lhs: float
    rhs: float


@dataclass
class PropertyWitness:
    """Outcome of a property check; a failed check carries a re-checkable violation."""

    property: str
    holds: bool
    counterexample: Optional[Counterexample] = None
    probabilistic: bool = False
    checked_pairs: int = 0


def _box_points(box: Sequence[int]) -> List[Tuple[int, ...]]:
    return list(itertools.product(*(range(c + 1) for c in box)))


def _comparable_pair_count(box: Sequence[int]) -> int:
    total = 1
    for c in box:
        total *= (c + 1) * (c + 2) // 2
    return total


def _value_at(v: Valuation, point: Tuple[int, ...]) -> float:
    return v.value(ItemMultiset.from_dense(point))


def check_property(v: Valuation, box: Sequence[int], property: str,
                   tol: Optional[float] = None,
                   budget: int = DEFAULT_CHECK_BUDGET) -> PropertyWitness:
    """Exhaustively decide a property of ``v`` on the lattice box.

    Enumeration is lexicographic over box points and the first violation is
    returned, so witnesses are deterministic.  Properties:

    * ``monotone``: value(x) <= value(y) for all x <= y.
    * ``diminishing_returns``: value(x+e_i) - value(x) >= value(y+e_i) - value(y)
      for all x <= y and items i with y+e_i inside the box.
    * ``lattice_submodular``: value(x v y) + value(x ^ y) <= value(x) + value(y)
      for all pairs (coordinate-wise max / min).

    Comparisons for integer-valued oracles are exact; otherwise a 1e-9
    tolerance absorbs float noise.  Raises ResourceLimitError instead of
    silently sampling when the box needs more than ``budget`` comparisons;
    use :func:`check_property_sampled` for an explicitly probabilistic check.
    """
    if property not in PROPERTIES:
        raise ValueError(f"unknown property {property!r}; expected one of {PROPERTIES}")
    if len(box) != v.num_items:
        raise ValueError(f"box has {len(box)} coordinates, valuation has {v.num_items} items")
    if tol is None:
        tol = 0.0 if v.integer_valued else 1e-9

    points = _box_points(box)
    if property == "lattice_submodular":
        pair_count = len(points) * (len(points) + 1) // 2
    else:
        pair_count = _comparable_pair_count(box)
        if property == "diminishing_returns":
            pair_count *= max(1, len(box))
    if pair_count > budget:
        raise ResourceLimitError(
            f"{property} check on box {tuple(box)} needs {pair_count} comparisons "
            f"(budget {budget}); raise the budget or use check_property_sampled")

    val = {p: _value_at(v, p) for p in points}
    checked = 0

    if property == "monotone":
        for x in points:
            for y in points:
                if any(a > b for a, b in zip(x, y)):
                    continue
                checked += 1
                if val[x] > val[y] + tol:
                    return PropertyWitness(property, False,
                                           Counterexample(x, y, None, val[x], val[y]),
                                           checked_pairs=checked)
        return PropertyWitness(property, True, checked_pairs=checked)

    if property == "diminishing_returns":
        for x in points:
            for y in points:
                if any(a > b for a, b in zip(x, y)):
                    continue
                for i in range(len(box)):
                    if y[i] + 1 > box[i]:
                        continue
                    checked += 1
                    xe = x[:i] + (x[i] + 1,) + x[i + 1:]
                    ye = y[:i] + (y[i] + 1,) + y[i + 1:]
                    lhs = val[xe] - val[x]
                    rhs = val[ye] - val[y]
                    if lhs < rhs - tol:
                        return PropertyWitness(property, False,
                                               Counterexample(x, y, i, lhs, rhs),
                                               checked_pairs=checked)
        return PropertyWitness(property, True, checked_pairs=checked)

    # lattice_submodular
    for ai, x in enumerate(points):
        for y in points[ai:]:
            checked += 1
            j = tuple(max(a, b) for a, b in zip(x, y))
            m_ = tuple(min(a, b) for a, b in zip(x, y))
            lhs = val[j] + val[m_]
            rhs = val[x] + val[y]
            if lhs > rhs + tol:
                return PropertyWitness(property, False,
                                       Counterexample(x, y, None, lhs, rhs),
                                       checked_pairs=checked)
    return PropertyWitness(property, True, checked_pairs=checked)


def check_property_sampled(v: Valuation, box: Sequence[int], property: str,
                           samples: int, seed: int,
                           tol: Optional[float] = None) -> PropertyWitness:
    """Randomized property check: samples pairs instead of enumerating.

    A passing result is explicitly probabilistic (no violation *found*);
    a failing result still carries an exact, re-checkable counterexample.
    """
    if property not in PROPERTIES:
        raise ValueError(f"unknown property {property!r}; expected one of {PROPERTIES}")
    if tol is None:
        tol = 0.0 if v.integer_valued else 1e-9
    rng = random.Random(seed)
    n = len(box)

    def rand_point():
        return tuple(rng.randint(0, c) for c in box)

    for k in range(samples):
        if property == "lattice_submodular":
            x, y = rand_point(), rand_point()
            j = tuple(max(a, b) for a, b in zip(x, y))
            m_ = tuple(min(a, b) for a, b in zip(x, y))
            lhs = _value_at(v, j) + _value_at(v, m_)
            rhs = _value_at(v, x) + _value_at(v, y)
            if lhs > rhs + tol:
                return PropertyWitness(property, False, Counterexample(x, y, None, lhs, rhs),
                                       probabilistic=True, checked_pairs=k + 1)
            continue
        x = rand_point()
        y = tuple(rng.randint(a, c) for a, c in zip(x, box))
        if property == "monotone":
            vx, vy = _value_at(v, x), _value_at(v, y)
            if vx > vy + tol:
                return PropertyWitness(property, False, Counterexample(x, y, None, vx, vy),
                                       probabilistic=True, checked_pairs=k + 1)
            continue
        i = rng.randrange(n)
        if y[i] + 1 > box[i]:
            continue
        xe = x[:i] + (x[i] + 1,) + x[i + 1:]
        ye = y[:i] + (y[i] + 1,) + y[i + 1:]
        lhs = _value_at(v, xe) - _value_at(v, x)
        rhs = _value_at(v, ye) - _value_at(v, y)
        if lhs < rhs - tol:
            return PropertyWitness(property, False, Counterexample(x, y, i, lhs, rhs),
                                   probabilistic=True, checked_pairs=k + 1)
    return PropertyWitness(property, True, probabilistic=True, checked_pairs=samples)


def recheck_witness(v: Valuation, witness: PropertyWitness, tol: Optional[float] = None) -> bool:
    """Re-evaluate a failed witness's inequality; True iff the violation reproduces."""
    if witness.holds or witness.counterexample is None:
        return False
    if tol is None:
        tol = 0.0 if v.integer_valued else 1e-9
    ce = witness.counterexample
    if witness.property == "monotone":
        return _value_at(v, ce.x) > _value_at(v, ce.y) + tol
    if witness.property == "diminishing_returns":
        i = ce.item
        xe = ce.x[:i] + (ce.x[i] + 1,) + ce.x[i + 1:]
        ye = ce.y[:i] + (ce.y[i] + 1,) + ce.y[i + 1:]
        lhs = _value_at(v, xe) - _value_at(v, ce.x)
        rhs = _value_at(v, ye) - _value_at(v, ce.y)
        return lhs < rhs - tol
    j = tuple(max(a, b) for a, b in zip(ce.x, ce.y))
    m_ = tuple(min(a, b) for a, b in zip(ce.x, ce.y))
    return _value_at(v, j) + _value_at(v, m_) > _value_at(v, ce.x) + _value_at(v, ce.y) + tol


def valuation_to_json(v: Valuation) -> dict:
    return v.to_json()


def valuation_from_json(d: dict) -> Valuation:
    kind = d.get("kind")
    if kind == "coverage":
        return CoverageValuation(d["universe_size"], d["sets"])
    if kind == "budget_additive":
        return BudgetAdditiveValuation(d["bids"], d["budget"])
    if kind == "tabular":
        return TabularValuation(d["box"], d["values"], d.get("integer_valued", False))
    raise ValueError(f"unknown valuation kind {kind!r}")
