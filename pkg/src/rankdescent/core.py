"""Domain types for comparator-driven nearest-neighbor graphs.

A *ranking system* assigns to every item x a strict total order over all
other items: the triplet query "is y more similar to x than z is?" is the
only similarity primitive the rest of the library relies on.  Items are
addressed by dense integer ids; payloads of any type live in a Dataset and
are never touched by the graph machinery.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from bisect import insort
from typing import Callable, Generic, Iterable, Iterator, Mapping, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

ItemId = int


class ConfigError(ValueError):
    """Raised when run parameters violate a structural precondition."""


class Dataset(Generic[T]):
    """An indexed, immutable collection of n >= 2 items of arbitrary type.

    Ids are the positions 0..n-1; they are stable for the lifetime of a
    run.  A numpy array works directly as the item sequence (rows are the
    items).
    """

    def __init__(self, items: Sequence[T]):
        n = len(items)
        if n < 2:
            raise ConfigError(f"a dataset needs at least 2 items, got {n}")
        self._items = items

    @property
    def items(self) -> Sequence[T]:
        return self._items

    @property
    def n(self) -> int:
        return len(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, item_id: int) -> T:
        return self._items[item_id]

    def __iter__(self) -> Iterator[T]:
        return iter(self._items)

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, item_type={type(self._items[0]).__name__})"


class RankingSystem(ABC):
    """Maps each anchor x to a strict total order on all other items.

    ``compare(x, y, z) < 0`` means y ranks closer to x than z does.  The
    induced relation must be a strict total order on the ids other than x:
    deterministic, anti-symmetric, transitive, and never "equal" (ties in
    any underlying score must be broken, conventionally by ascending id).
    Implementations must be safe for unrestricted concurrent reads.
    """

    @abstractmethod
    def compare(self, x: ItemId, y: ItemId, z: ItemId) -> int:
        """Return a negative value if y ranks before z from x's viewpoint,
        positive otherwise.  Raises ValueError unless x, y, z are pairwise
        distinct."""

    def comparator_for(self, x: ItemId) -> Callable[[ItemId, ItemId], int]:
        """The two-argument comparator induced by anchor x."""
        return lambda y, z: self.compare(x, y, z)


class ScoredRankingSystem(RankingSystem):
    """Ranking system induced by a per-anchor numeric score, low is close.

    Ordering is by ``(score(x, y), y)`` ascending, so exact score ties fall
    back to ascending id and the order is always total.  Subclasses provide
    ``batch_scores``; everything else, including ``compare``, derives from
    it so that every code path sees bit-identical orderings.
    """

    @property
    @abstractmethod
    def size(self) -> int:
        """Number of items the system ranks."""

    @abstractmethod
    def batch_scores(self, x: ItemId, ids: np.ndarray | None = None) -> np.ndarray:
        """Scores of ``ids`` (all items when None) relative to anchor x.

        Must be a pure function of (x, ids): repeated calls, sub-slices and
        whole-dataset calls agree bitwise on common ids.
        """

    def score(self, x: ItemId, y: ItemId) -> float:
        return float(self.batch_scores(x, np.array([y], dtype=np.int64))[0])

    def compare(self, x: ItemId, y: ItemId, z: ItemId) -> int:
        if x == y or x == z or y == z:
            raise ValueError(f"compare needs pairwise distinct ids, got ({x}, {y}, {z})")
        if (self.score(x, y), y) < (self.score(x, z), z):
            return -1
        return 1


class BoundedNeighborSet:
    """Capacity-K set of ids kept sorted ascending under one anchor's order.

    Single-owner mutable: used by one worker at a time.  Inserts follow
    replace-if-better semantics: a candidate enters only while the set is
    underfull or when it beats the current last (worst) member, which is
    then evicted.  The anchor itself is always rejected.  ``comparisons``
    counts the comparator invocations made by this set.
    """

    def __init__(self, anchor: ItemId, capacity: int, compare: Callable[[ItemId, ItemId], int]):
        if capacity < 1:
            raise ConfigError(f"capacity must be >= 1, got {capacity}")
        self.anchor = anchor
        self.capacity = capacity
        self._compare = compare
        self._ids: list[ItemId] = []
        self._present: set[ItemId] = set()
        self.comparisons = 0

    @classmethod
    def from_sorted(
        cls,
        anchor: ItemId,
        capacity: int,
        compare: Callable[[ItemId, ItemId], int],
        ids: Iterable[ItemId],
    ) -> "BoundedNeighborSet":
        """Seed from ids already sorted under the anchor's order (no comparisons)."""
        out = cls(anchor, capacity, compare)
        out._ids = list(ids)
        out._present = set(out._ids)
        if anchor in out._present:
            raise ValueError(f"seed ids contain the anchor {anchor}")
        if len(out._ids) > capacity or len(out._present) != len(out._ids):
            raise ValueError("seed ids exceed capacity or contain duplicates")
        return out

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, item_id: ItemId) -> bool:
        return item_id in self._present

    def ids(self) -> list[ItemId]:
        """Members, best first."""
        return list(self._ids)

    def _cmp(self, a: ItemId, b: ItemId) -> int:
        self.comparisons += 1
        return self._compare(a, b)

    def _insert_sorted(self, candidate: ItemId) -> None:
        lo, hi = 0, len(self._ids)
        while lo < hi:
            mid = (lo + hi) // 2
            if self._cmp(candidate, self._ids[mid]) < 0:
                hi = mid
            else:
                lo = mid + 1
        self._ids.insert(lo, candidate)
        self._present.add(candidate)

    def insert(self, candidate: ItemId) -> bool:
        """Insert-if-better.  Returns True iff the membership changed."""
        if candidate == self.anchor:
            raise ValueError(f"candidate equals the anchor {self.anchor}")
        if candidate in self._present:
            return False
        if len(self._ids) < self.capacity:
            self._insert_sorted(candidate)
            return True
        if self._cmp(candidate, self._ids[-1]) < 0:
            evicted = self._ids.pop()
            self._present.discard(evicted)
            self._insert_sorted(candidate)
            return True
        return False


def build_cofriends(friends: Mapping[ItemId, Iterable[ItemId]]) -> dict[ItemId, set[ItemId]]:
    """Transpose a friends digraph: y in friends[x] iff x in cofriends[y].

    Every key of the input appears in the output, with an empty set when
    nothing points at it.
    """
    cofriends: dict[ItemId, set[ItemId]] = {x: set() for x in friends}
    for x, targets in friends.items():
        for y in targets:
            cofriends.setdefault(y, set()).add(x)
    return cofriends


def verify_total_order(rs: RankingSystem, anchor: ItemId, ids: Sequence[ItemId]) -> bool:
    """Exhaustively check anti-symmetry and transitivity of the anchor's order.

    O(m^3) in len(ids); intended as a desk-scale diagnostic for
    user-supplied comparators, whose behavior is otherwise trusted.
    """
    others = [i for i in ids if i != anchor]
    for y in others:
        for z in others:
            if y >= z:
                continue
            if (rs.compare(anchor, y, z) < 0) == (rs.compare(anchor, z, y) < 0):
                return False
    for y in others:
        for z in others:
            for w in others:
                if len({y, z, w}) < 3:
                    continue
                if (
                    rs.compare(anchor, y, z) < 0
                    and rs.compare(anchor, z, w) < 0
                    and not rs.compare(anchor, y, w) < 0
                ):
                    return False
    return True
