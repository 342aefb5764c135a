"""Small shared helpers: union-find partitions, color multisets, fresh names."""

from __future__ import annotations

from itertools import combinations
from typing import Hashable, Iterable, Iterator


class Partition:
    """Equivalence relation over a finite domain, built from generating pairs.

    The domain is fixed at construction; elements outside it are rejected.
    """

    def __init__(self, domain: Iterable[Hashable] = (), pairs: Iterable[tuple] = ()):
        self._parent: dict = {x: x for x in domain}
        for a, b in pairs:
            self.union(a, b)

    def add(self, x) -> None:
        if x not in self._parent:
            self._parent[x] = x

    def _find(self, x):
        parent = self._parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a, b) -> None:
        self.add(a)
        self.add(b)
        ra, rb = self._find(a), self._find(b)
        if ra != rb:
            self._parent[rb] = ra

    def same(self, a, b) -> bool:
        if a not in self._parent or b not in self._parent:
            return a == b
        return self._find(a) == self._find(b)

    def rep(self, x):
        if x not in self._parent:
            return x
        return self._find(x)

    @property
    def domain(self) -> set:
        return set(self._parent)

    def classes(self) -> list[frozenset]:
        by_root: dict = {}
        for x in self._parent:
            by_root.setdefault(self._find(x), set()).add(x)
        return sorted((frozenset(c) for c in by_root.values()),
                      key=lambda c: sorted(map(str, c)))

    def class_of(self, x) -> frozenset:
        if x not in self._parent:
            return frozenset([x])
        root = self._find(x)
        return frozenset(y for y in self._parent if self._find(y) == root)

    def restricted_pairs(self, keep: Iterable) -> set[tuple]:
        """All related pairs (a, b) with both sides in `keep`, a != b."""
        keep = [x for x in keep if x in self._parent]
        return {(a, b) for a, b in combinations(keep, 2) if self.same(a, b)}

    def is_identity(self) -> bool:
        roots = {self._find(x) for x in self._parent}
        return len(roots) == len(self._parent)


# ---------------------------------------------------------------------------
# Colors and multisets of colors.
#
# A color is a frozenset of relation names; a multiset of colors is kept as a
# tuple sorted by a canonical key, so equal multisets compare equal.

Color = frozenset
Multiset = tuple


def color_key(color: Color) -> tuple:
    return (len(color), tuple(sorted(color)))


def mset(colors: Iterable[Color]) -> Multiset:
    return tuple(sorted(colors, key=color_key))


def mset_union(*parts: Multiset) -> Multiset:
    out = []
    for p in parts:
        out.extend(p)
    return mset(out)


def mset_remove_one(m: Multiset, color: Color) -> Multiset:
    out = list(m)
    out.remove(color)
    return tuple(out)


def mset_is_subset(small: Multiset, big: Multiset) -> bool:
    remaining = list(big)
    for c in small:
        if c in remaining:
            remaining.remove(c)
        else:
            return False
    return True


def sub_multisets_upto(m: Multiset, k: int) -> set[Multiset]:
    """All sub-multisets of m of cardinality at most k."""
    out = {(): None}
    for size in range(1, min(k, len(m)) + 1):
        for combo in combinations(range(len(m)), size):
            out[tuple(m[i] for i in combo)] = None
    return {mset(candidate) for candidate in out}


def format_color(color: Color) -> str:
    return "{" + ",".join(sorted(color)) + "}"


def format_multiset(m: Multiset) -> str:
    return "{" + ",".join(format_color(c) for c in m) + "}"


# ---------------------------------------------------------------------------


def fresh_name(base: str, used: set[str]) -> str:
    """Deterministic fresh variable: base, then base%1, base%2, ..."""
    if base not in used:
        return base
    n = 1
    while f"{base}%{n}" in used:
        n += 1
    return f"{base}%{n}"


def iter_set_partitions(items: list) -> Iterator[list[list]]:
    """All partitions of `items` into nonempty blocks (deterministic order)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partial in iter_set_partitions(rest):
        for i in range(len(partial)):
            yield partial[:i] + [[first] + partial[i]] + partial[i + 1:]
        yield [[first]] + partial
