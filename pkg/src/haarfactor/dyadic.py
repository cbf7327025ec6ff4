"""Dyadic intervals, leaf sets and nested families of leaf sets.

Intervals are stored as ``(level, position)`` with ``position`` counted from 1,
so ``I = [(position-1) 2^-level, position 2^-level)``.  Sorting intervals by
``(level, position)`` is the same as sorting by the linear order
``2^level - 1 + position``; Haar coefficient arrays use ``order - 1`` as index,
which is the usual binary-heap layout (children of index ``i`` sit at
``2i+1`` and ``2i+2``).

Point sets are ``LeafSet`` objects: a bitmask over the ``2^M`` leaves of
level ``M``.  Python integers make union, intersection and subset tests cheap,
and every measure is an exact dyadic rational.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np


@dataclass(frozen=True, order=True)
class DyadicInterval:
    level: int
    position: int

    def __post_init__(self):
        if self.level < 0 or not 1 <= self.position <= (1 << self.level):
            raise ValueError(f"no dyadic interval at level {self.level}, position {self.position}")

    @classmethod
    def from_order(cls, order: int) -> "DyadicInterval":
        if order < 1:
            raise ValueError("order starts at 1")
        level = order.bit_length() - 1
        return cls(level, order - (1 << level) + 1)

    @classmethod
    def from_index(cls, index: int) -> "DyadicInterval":
        return cls.from_order(index + 1)

    @classmethod
    def root(cls) -> "DyadicInterval":
        return cls(0, 1)

    @property
    def order(self) -> int:
        return (1 << self.level) - 1 + self.position

    @property
    def index(self) -> int:
        return self.order - 1

    @property
    def measure(self) -> Fraction:
        return Fraction(1, 1 << self.level)

    @property
    def endpoints(self) -> tuple[Fraction, Fraction]:
        return self.measure * (self.position - 1), self.measure * self.position

    @property
    def left(self) -> "DyadicInterval":
        return DyadicInterval(self.level + 1, 2 * self.position - 1)

    @property
    def right(self) -> "DyadicInterval":
        return DyadicInterval(self.level + 1, 2 * self.position)

    @property
    def parent(self) -> "DyadicInterval":
        if self.level == 0:
            raise ValueError("[0,1) has no parent")
        return DyadicInterval(self.level - 1, (self.position + 1) // 2)

    @property
    def is_left_child(self) -> bool:
        return self.level > 0 and self.position % 2 == 1

    def child(self, side: str) -> "DyadicInterval":
        return self.left if side == "left" else self.right

    def contains(self, other: "DyadicInterval") -> bool:
        """``other`` is a (not necessarily proper) subset of ``self``."""
        d = other.level - self.level
        return d >= 0 and ((other.position - 1) >> d) + 1 == self.position

    def intersects(self, other: "DyadicInterval") -> bool:
        return self.contains(other) or other.contains(self)

    def ancestors(self) -> Iterator["DyadicInterval"]:
        """Strict ancestors, nearest first."""
        level, pos = self.level, self.position
        while level > 0:
            level, pos = level - 1, (pos + 1) // 2
            yield DyadicInterval(level, pos)

    def descendants(self, level: int) -> list["DyadicInterval"]:
        """All subintervals at ``level``."""
        d = level - self.level
        if d < 0:
            return []
        first = (self.position - 1) << d
        return [DyadicInterval(level, first + j + 1) for j in range(1 << d)]

    def leaf_range(self, resolution: int) -> range:
        """Zero-based leaf positions covered at ``resolution``."""
        d = resolution - self.level
        if d < 0:
            raise ValueError("resolution coarser than the interval")
        return range((self.position - 1) << d, self.position << d)

    def point_set(self, resolution: int) -> "LeafSet":
        r = self.leaf_range(resolution)
        return LeafSet(resolution, ((1 << len(r)) - 1) << r.start)

    def __str__(self):
        a, b = self.endpoints
        return f"[{a},{b})"

    def to_json(self) -> dict:
        return {"n": self.level, "k": self.position}

    @classmethod
    def from_json(cls, obj) -> "DyadicInterval":
        return cls(int(obj["n"]), int(obj["k"]))


def order_of(interval: DyadicInterval) -> int:
    return interval.order


def intervals(depth: int) -> list[DyadicInterval]:
    """All of D^depth in linear order."""
    return [DyadicInterval.from_order(o) for o in range(1, 1 << (depth + 1))]


def level_slice(level: int) -> slice:
    """Index range of level ``level`` in a coefficient array."""
    return slice((1 << level) - 1, (1 << (level + 1)) - 1)


def n_coeffs(depth: int) -> int:
    return (1 << (depth + 1)) - 1


def depth_of(length: int) -> int:
    depth = (length + 1).bit_length() - 2
    if depth < 0 or n_coeffs(depth) != length:
        raise ValueError(f"length {length} is not 2^(N+1)-1")
    return depth


def index_levels(depth: int) -> np.ndarray:
    """Level of every index of a depth-``depth`` coefficient array."""
    return np.repeat(np.arange(depth + 1), 1 << np.arange(depth + 1))


@dataclass(frozen=True)
class LeafSet:
    """Subset of the leaves of level ``resolution``; bit ``p`` is leaf ``p+1``."""

    resolution: int
    mask: int = 0

    def __post_init__(self):
        if self.resolution < 0 or self.mask < 0 or self.mask >> (1 << self.resolution):
            raise ValueError("mask does not fit the resolution")

    @classmethod
    def from_positions(cls, resolution: int, positions: Iterable[int]) -> "LeafSet":
        mask = 0
        for p in positions:
            if not 1 <= p <= (1 << resolution):
                raise ValueError(f"leaf {p} outside resolution {resolution}")
            mask |= 1 << (p - 1)
        return cls(resolution, mask)

    @classmethod
    def from_intervals(cls, items: Iterable[DyadicInterval], resolution: int | None = None) -> "LeafSet":
        items = list(items)
        if resolution is None:
            resolution = max((I.level for I in items), default=0)
        mask = 0
        for I in items:
            mask |= I.point_set(resolution).mask
        return cls(resolution, mask)

    @classmethod
    def full(cls, resolution: int) -> "LeafSet":
        return cls(resolution, (1 << (1 << resolution)) - 1)

    @classmethod
    def from_array(cls, bits: np.ndarray) -> "LeafSet":
        bits = np.asarray(bits, dtype=bool)
        resolution = depth_of(2 * len(bits) - 1)
        packed = np.packbits(bits, bitorder="little")
        return cls(resolution, int.from_bytes(packed.tobytes(), "little"))

    def to_array(self) -> np.ndarray:
        size = 1 << self.resolution
        raw = self.mask.to_bytes((size + 7) // 8, "little")
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[:size].astype(bool)

    def positions(self) -> list[int]:
        return [int(p) + 1 for p in np.flatnonzero(self.to_array())]

    @property
    def count(self) -> int:
        return self.mask.bit_count()

    @property
    def measure(self) -> Fraction:
        return Fraction(self.count, 1 << self.resolution)

    def __bool__(self):
        return self.mask != 0

    def refine(self, resolution: int) -> "LeafSet":
        d = resolution - self.resolution
        if d < 0:
            raise ValueError("cannot refine to a coarser resolution")
        if d == 0:
            return self
        return LeafSet.from_array(np.repeat(self.to_array(), 1 << d))

    def _align(self, other: "LeafSet") -> tuple[int, int, int]:
        res = max(self.resolution, other.resolution)
        return res, self.refine(res).mask, other.refine(res).mask

    def __or__(self, other):
        res, a, b = self._align(other)
        return LeafSet(res, a | b)

    def __and__(self, other):
        res, a, b = self._align(other)
        return LeafSet(res, a & b)

    def __sub__(self, other):
        res, a, b = self._align(other)
        return LeafSet(res, a & ~b)

    def complement(self) -> "LeafSet":
        return LeafSet(self.resolution, LeafSet.full(self.resolution).mask & ~self.mask)

    def issubset(self, other: "LeafSet") -> bool:
        _, a, b = self._align(other)
        return a & ~b == 0

    def isdisjoint(self, other: "LeafSet") -> bool:
        _, a, b = self._align(other)
        return a & b == 0

    def same_points(self, other: "LeafSet") -> bool:
        _, a, b = self._align(other)
        return a == b

    def to_json(self) -> dict:
        return {"resolution": self.resolution, "leaves": self.positions()}

    @classmethod
    def from_json(cls, obj) -> "LeafSet":
        return cls.from_positions(int(obj["resolution"]), obj["leaves"])


def point_set(items: Iterable[DyadicInterval], resolution: int | None = None) -> LeafSet:
    return LeafSet.from_intervals(items, resolution)


def half_union(items: Iterable[DyadicInterval], side: str, resolution: int) -> LeafSet:
    """Point set of the left (``side='left'``) or right halves of ``items``."""
    return LeafSet.from_intervals((I.child(side) for I in items), resolution)


class NestedFamily:
    """Finite family of leaf sets, any two of which are nested or disjoint.

    Duplicates are dropped (a family is a set) while insertion order is kept;
    that order is what tie-breaking rules elsewhere refer to.  Empty sets are
    rejected since they would be nested in everything.
    """

    def __init__(self, sets: Iterable[LeafSet], resolution: int | None = None, check: bool = True):
        sets = list(sets)
        if resolution is None:
            resolution = max((s.resolution for s in sets), default=0)
        seen, unique = set(), []
        for s in sets:
            s = s.refine(resolution)
            if not s:
                raise ValueError("nested families may not contain the empty set")
            if s.mask not in seen:
                seen.add(s.mask)
                unique.append(s)
        self.resolution = resolution
        self.sets: tuple[LeafSet, ...] = tuple(unique)
        self._depth = None
        if check:
            bad = self.violation()
            if bad is not None:
                raise ValueError(f"sets {bad[0]} and {bad[1]} overlap without nesting")

    @classmethod
    def from_intervals(cls, items: Iterable[DyadicInterval], resolution: int | None = None) -> "NestedFamily":
        items = sorted(items)
        if resolution is None:
            resolution = max((I.level for I in items), default=0)
        return cls((I.point_set(resolution) for I in items), resolution, check=False)

    def violation(self) -> tuple[int, int] | None:
        masks = [s.mask for s in self.sets]
        for i, a in enumerate(masks):
            for j in range(i + 1, len(masks)):
                b = masks[j]
                c = a & b
                if c and c != a and c != b:
                    return i, j
        return None

    def __len__(self):
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def __getitem__(self, i):
        return self.sets[i]

    def index(self, s: LeafSet) -> int:
        s = s.refine(self.resolution)
        for i, t in enumerate(self.sets):
            if t.mask == s.mask:
                return i
        raise KeyError("set not in family")

    def __contains__(self, s: LeafSet) -> bool:
        try:
            self.index(s)
        except KeyError:
            return False
        return True

    def depths(self) -> list[int]:
        """Number of strict supersets of each member inside the family.

        In a nested family the strict supersets of a set form a chain, so a
        set lies in generation k exactly when it has k strict supersets.
        """
        if self._depth is None:
            masks = [s.mask for s in self.sets]
            depth = [0] * len(masks)
            for i, a in enumerate(masks):
                for j, b in enumerate(masks):
                    if i != j and a & b == a and a != b:
                        depth[i] += 1
            self._depth = depth
        return self._depth

    def subfamily(self, keep: Iterable[int]) -> "NestedFamily":
        return NestedFamily((self.sets[i] for i in keep), self.resolution, check=False)

    def below(self, top: LeafSet) -> "NestedFamily":
        """Members contained in ``top``."""
        top = top.refine(self.resolution)
        return NestedFamily((s for s in self.sets if s.mask & ~top.mask == 0), self.resolution, check=False)

    def union(self) -> LeafSet:
        mask = 0
        for s in self.sets:
            mask |= s.mask
        return LeafSet(self.resolution, mask)


def generations(X: NestedFamily) -> list[NestedFamily]:
    """``[G_0, G_1, ...]``: G_0 are the maximal sets, G_k the maximal sets left
    after removing G_0, ..., G_{k-1}."""
    if not len(X):
        return []
    depth = X.depths()
    out = []
    for k in range(max(depth) + 1):
        out.append(X.subfamily(i for i, d in enumerate(depth) if d == k))
    return out


def generation_set(X: NestedFamily, k: int) -> LeafSet:
    """Point set G_k(X) (empty if the family has fewer generations)."""
    depth = X.depths()
    mask = 0
    for s, d in zip(X.sets, depth):
        if d == k:
            mask |= s.mask
    return LeafSet(X.resolution, mask)


def carleson_constant(X: NestedFamily) -> Fraction:
    """``max_N |N|^{-1} sum_{M in X, M subset N} |M|``; 0 for the empty family."""
    best = Fraction(0)
    masks = [s.mask for s in X.sets]
    counts = [s.count for s in X.sets]
    for a, ca in zip(masks, counts):
        total = sum(cb for b, cb in zip(masks, counts) if b & ~a == 0)
        best = max(best, Fraction(total, ca))
    return best


def sort_key(s: LeafSet) -> tuple:
    """Order used for tie-breaking between leaf sets: by the linear order of
    the smallest dyadic interval containing the set, then by the mask."""
    pos = s.positions()
    lo, hi = pos[0] - 1, pos[-1] - 1
    d = (lo ^ hi).bit_length()
    hull = DyadicInterval(s.resolution - d, (lo >> d) + 1)
    return hull.order, s.mask


def is_nested(sets: Sequence[LeafSet]) -> bool:
    try:
        NestedFamily(sets)
    except ValueError:
        return False
    return True
