"""Finite relational structures and their fusion algebra.

Only the support of a structure is materialized: elements are plain integers
and the interpretation maps relation names to finite sets of tuples.  All
operations are pure; fusion enumerations deduplicate results up to
isomorphism via a canonical labeling.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, permutations, product
from typing import Iterable, Iterator

from .errors import (CapExceeded, ElementNotInSupport, NotLocallyDisjoint,
                     TooLarge)
from .syntax import Atom, Emp, Eq, Neq, PredAtom, RelAtom
from .util import (Color, Multiset, Partition, mset, sub_multisets_upto)

Interp = dict[str, frozenset[tuple[int, ...]]]


class Structure:
    """Interpretation of relation symbols over integer elements."""

    __slots__ = ("interp", "_canon")

    def __init__(self, interp: dict[str, Iterable[tuple[int, ...]]] | None = None):
        norm: Interp = {}
        for rel, tuples in (interp or {}).items():
            tuples = frozenset(tuple(t) for t in tuples)
            if tuples:
                norm[rel] = tuples
        self.interp: Interp = norm
        self._canon = None

    def support(self) -> frozenset[int]:
        return frozenset(u for tuples in self.interp.values() for t in tuples for u in t)

    def tuples(self) -> Iterator[tuple[str, tuple[int, ...]]]:
        for rel in sorted(self.interp):
            for t in sorted(self.interp[rel]):
                yield rel, t

    def size(self) -> int:
        return len(self.support())

    def tuple_count(self) -> int:
        return sum(len(ts) for ts in self.interp.values())

    def is_empty(self) -> bool:
        return not self.interp

    def __eq__(self, other):
        return isinstance(other, Structure) and self.interp == other.interp

    def __hash__(self):
        return hash(frozenset(self.interp.items()))

    def __repr__(self):
        return f"Structure({dump(self)!r})"


def dump(s: Structure) -> str:
    """Stable debug serialization: sorted ``r(e1,...,ek)`` lines."""
    lines = [f"{rel}({','.join(map(str, t))})" for rel, t in s.tuples()]
    return "\n".join(lines)


EMPTY = Structure()


# ---------------------------------------------------------------------------
# Composition, quotient, compatibility.


def compose(s1: Structure, s2: Structure) -> Structure:
    """Pointwise disjoint union; undefined on shared tuples."""
    interp: dict[str, set] = {r: set(ts) for r, ts in s1.interp.items()}
    for rel, tuples in s2.interp.items():
        clash = interp.get(rel, set()) & tuples
        if clash:
            raise NotLocallyDisjoint(rel, min(clash))
        interp.setdefault(rel, set()).update(tuples)
    return Structure(interp)


def can_compose(s1: Structure, s2: Structure) -> bool:
    return all(not (s1.interp.get(r, frozenset()) & ts) for r, ts in s2.interp.items())


def quotient(s: Structure, eq: Partition) -> Structure:
    """Map every tuple componentwise to class representatives (set semantics)."""
    interp = {
        rel: {tuple(eq.rep(u) for u in t) for t in tuples}
        for rel, tuples in s.interp.items()
    }
    return Structure(interp)


def is_compatible(eq: Partition, s: Structure) -> bool:
    """True iff no two distinct tuples of a relation collapse modulo eq."""
    for tuples in s.interp.values():
        seen = set()
        for t in tuples:
            key = tuple(eq.rep(u) for u in t)
            if key in seen:
                return False
            seen.add(key)
    return True


def is_compatible_pair(eq: Partition, s1: Structure, s2: Structure) -> bool:
    return can_compose(s1, s2) and is_compatible(eq, compose(s1, s2))


# ---------------------------------------------------------------------------
# Colors.


def coloring(s: Structure, u: int) -> Color:
    if u not in s.support():
        raise ElementNotInSupport(f"element {u} not in support")
    return color_of(s, u)


def color_of(s: Structure, u: int) -> Color:
    return frozenset(
        rel for rel, tuples in s.interp.items()
        if any(all(v == u for v in t) for t in tuples)
    )


def mcolabs(s: Structure) -> Multiset:
    """Multiset of element colors over the support."""
    return mset(color_of(s, u) for u in s.support())


def kmcolabs(k: int, s: Structure) -> set[Multiset]:
    """All sub-multisets of the color multiset, of cardinality at most k."""
    return sub_multisets_upto(mcolabs(s), k)


# ---------------------------------------------------------------------------
# Substructures and connectivity.


def is_included(s1: Structure, s2: Structure) -> bool:
    return all(ts <= s2.interp.get(r, frozenset()) for r, ts in s1.interp.items())


def is_substructure(s1: Structure, s2: Structure) -> bool:
    """s1 included in s2 and equal to s2 restricted to s1's support."""
    if not is_included(s1, s2):
        return False
    supp = s1.support()
    for rel, tuples in s2.interp.items():
        restricted = {t for t in tuples if all(u in supp for u in t)}
        if restricted != s1.interp.get(rel, frozenset()):
            return False
    return True


def connected_components(s: Structure) -> list[frozenset[int]]:
    part = Partition(s.support())
    for _, t in s.tuples():
        for u in t[1:]:
            part.union(t[0], u)
    return part.classes()


def is_connected(s: Structure) -> bool:
    return len(connected_components(s)) <= 1


def maximal_connected_substructures(s: Structure) -> list[Structure]:
    """Partition of s into connected parts whose composition is s."""
    comp_of: dict[int, int] = {}
    for i, comp in enumerate(connected_components(s)):
        for u in comp:
            comp_of[u] = i
    parts: dict[int, dict[str, set]] = {}
    for rel, t in s.tuples():
        i = comp_of[t[0]]
        parts.setdefault(i, {}).setdefault(rel, set()).add(t)
    return [Structure(parts[i]) for i in sorted(parts)]


# ---------------------------------------------------------------------------
# Canonical labeling (isomorphism).


def _rank(values: dict[int, object]) -> dict[int, int]:
    ranks = {val: i for i, val in enumerate(sorted(set(values.values()), key=repr))}
    return {u: ranks[v] for u, v in values.items()}


def _refine(s: Structure, inv: dict[int, object], rounds: int = 3) -> dict[int, int]:
    inv = _rank(inv)
    for _ in range(rounds):
        nxt = {}
        for u in inv:
            signature = []
            for rel, tuples in sorted(s.interp.items()):
                for t in tuples:
                    if u in t:
                        positions = tuple(i for i, v in enumerate(t) if v == u)
                        signature.append((rel, positions, tuple(inv[v] for v in t)))
            nxt[u] = (inv[u], tuple(sorted(signature)))
        new_inv = _rank(nxt)
        if new_inv == inv:
            break
        inv = new_inv
    return inv


def _serialize(s: Structure, order: dict[int, int]) -> tuple:
    return tuple(sorted(
        (rel, tuple(sorted(tuple(order[u] for u in t) for t in tuples)))
        for rel, tuples in s.interp.items()
    ))


def _canon_connected(s: Structure) -> tuple:
    supp = sorted(s.support())
    if not supp:
        return ()
    inv = _refine(s, {u: 0 for u in supp})
    best: list[tuple | None] = [None]

    def search(assigned: dict[int, int], inv: dict[int, object]):
        if len(assigned) == len(supp):
            ser = _serialize(s, assigned)
            if best[0] is None or ser < best[0]:
                best[0] = ser
            return
        remaining = [u for u in supp if u not in assigned]
        groups: dict[object, list[int]] = {}
        for u in remaining:
            groups.setdefault(inv[u], []).append(u)
        key = min(groups, key=lambda g: (len(groups[g]), repr(g)))
        for u in groups[key]:
            new_inv = dict(inv)
            new_inv[u] = ("pick", len(assigned))
            new_inv = _refine(s, new_inv)
            assigned[u] = len(assigned)
            search(assigned, new_inv)
            del assigned[u]

    search({}, inv)
    return best[0] or ()


def canonical_form(s: Structure) -> tuple:
    """Canonical serialization: equal iff the structures are isomorphic."""
    if s._canon is None:
        parts = maximal_connected_substructures(s)
        s._canon = tuple(sorted(_canon_connected(p) for p in parts))
    return s._canon


def isomorphic(s1: Structure, s2: Structure) -> bool:
    return canonical_form(s1) == canonical_form(s2)


def dedup_isomorphic(structures: Iterable[Structure]) -> list[Structure]:
    seen = set()
    out = []
    for s in structures:
        key = canonical_form(s)
        if key not in seen:
            seen.add(key)
            out.append(s)
    return out


def relabel(s: Structure, offset: int) -> Structure:
    mapping = {u: offset + i for i, u in enumerate(sorted(s.support()))}
    return Structure({
        rel: {tuple(mapping[u] for u in t) for t in tuples}
        for rel, tuples in s.interp.items()
    })


# ---------------------------------------------------------------------------
# Fusions.


def _partitions_of(elems: list[int]) -> Iterator[Partition]:
    from .util import iter_set_partitions
    for blocks in iter_set_partitions(elems):
        part = Partition(elems)
        for block in blocks:
            for other in block[1:]:
                part.union(block[0], other)
        yield part


def internal_fusions(s: Structure, element_cap: int = 10) -> list[Structure]:
    """All quotients by compatible equivalences, deduplicated up to iso."""
    supp = sorted(s.support())
    if len(supp) > element_cap:
        raise CapExceeded(f"support {len(supp)} exceeds cap {element_cap}")
    out = []
    for part in _partitions_of(supp):
        if is_compatible(part, s):
            out.append(quotient(s, part))
    return dedup_isomorphic(out)


def external_fusions(s1: Structure, s2: Structure, pair_bound: int = 2,
                     element_cap: int = 24) -> list[Structure]:
    """Fusions of disjoint copies via matchings of size <= pair_bound."""
    a = relabel(s1, 0)
    b = relabel(s2, len(a.support()))
    if len(a.support()) + len(b.support()) > element_cap:
        raise CapExceeded("combined support exceeds cap")
    both = compose(a, b)
    sa, sb = sorted(a.support()), sorted(b.support())
    out = []
    for size in range(1, pair_bound + 1):
        for left in combinations(sa, size):
            for right in permutations(sb, size):
                part = Partition(both.support(), zip(left, right))
                if is_compatible(part, both):
                    out.append(quotient(both, part))
    return dedup_isomorphic(out)


def single_pair_fusions(s1: Structure, s2: Structure) -> list[Structure]:
    """External fusions generated by one pair of elements with disjoint colors."""
    a = relabel(s1, 0)
    b = relabel(s2, len(a.support()))
    if not can_compose(a, b):
        return []
    both = compose(a, b)
    out = []
    for u in sorted(a.support()):
        cu = color_of(a, u)
        for v in sorted(b.support()):
            if cu & color_of(b, v):
                continue
            part = Partition(both.support(), [(u, v)])
            if is_compatible(part, both):
                out.append(quotient(both, part))
    return dedup_isomorphic(out)


# ---------------------------------------------------------------------------
# Exact treewidth.


def primal_graph(s: Structure) -> dict[int, set[int]]:
    """Each relation tuple induces a clique among its elements."""
    graph: dict[int, set[int]] = {u: set() for u in s.support()}
    for _, t in s.tuples():
        elems = set(t)
        for u in elems:
            graph[u] |= elems - {u}
    return graph


def _neighbors_through(graph: dict[int, set[int]], v: int, eliminated: frozenset[int]) -> frozenset[int]:
    """Vertices adjacent to v in the graph where `eliminated` was contracted."""
    seen = {v}
    stack = [v]
    out = set()
    while stack:
        x = stack.pop()
        for y in graph[x]:
            if y in seen:
                continue
            seen.add(y)
            if y in eliminated:
                stack.append(y)
            else:
                out.add(y)
    return frozenset(out)


def treewidth_exact(s: Structure, max_support: int = 16) -> int:
    """Exact treewidth by dynamic programming over elimination orders."""
    graph = primal_graph(s)
    n = len(graph)
    if n > max_support:
        raise TooLarge(f"support {n} exceeds limit {max_support}")
    if n <= 1:
        return 0
    vertices = tuple(sorted(graph))

    @lru_cache(maxsize=None)
    def best(eliminated: frozenset[int]) -> int:
        if len(eliminated) == n:
            return -1
        result = n
        for v in vertices:
            if v in eliminated:
                continue
            rest = eliminated | {v}
            degree = len(_neighbors_through(graph, v, eliminated))
            if degree >= result:
                continue
            result = min(result, max(degree, best(rest)))
        return result

    try:
        return max(best(frozenset()), 0)
    finally:
        best.cache_clear()


def treewidth_bruteforce(s: Structure) -> int:
    """Reference implementation: try every elimination order (tiny inputs)."""
    graph = primal_graph(s)
    n = len(graph)
    if n <= 1:
        return 0
    best = n
    for order in permutations(sorted(graph)):
        width = -1
        g = {u: set(vs) for u, vs in graph.items()}
        for v in order:
            nb = g[v]
            width = max(width, len(nb))
            if width >= best:
                break
            for a in nb:
                g[a] |= nb - {a}
                g[a].discard(v)
            del g[v]
        else:
            best = min(best, width)
    return max(best, 0)


# ---------------------------------------------------------------------------
# Precise satisfaction of quantifier- and predicate-free bodies.


def satisfies(s: Structure, store: dict[str, int], body: Iterable[Atom]) -> bool:
    """Exact semantics: the body must decompose the structure completely.

    Equalities and disequalities hold of empty sub-structures; every relation
    atom consumes exactly one tuple and no tuple may be consumed twice.
    """
    demanded: dict[str, list[tuple[int, ...]]] = {}
    for atom in body:
        if isinstance(atom, PredAtom):
            raise ValueError("satisfies expects a predicate-free body")
        if isinstance(atom, Emp):
            continue
        if isinstance(atom, Eq):
            if store[atom.left] != store[atom.right]:
                return False
        elif isinstance(atom, Neq):
            if store[atom.left] == store[atom.right]:
                return False
        else:
            demanded.setdefault(atom.rel, []).append(tuple(store[x] for x in atom.args))
    for rel, tuples in demanded.items():
        if len(set(tuples)) != len(tuples):
            return False  # duplicate tuple: separating conjunction fails
        if set(tuples) != s.interp.get(rel, frozenset()):
            return False
    for rel in s.interp:
        if rel not in demanded:
            return False
    return True


def qpf_satisfiable(body: Iterable[Atom]) -> bool:
    """Satisfiability of a quantifier- and predicate-free formula."""
    body = tuple(body)
    from .syntax import eq_closure
    eq = eq_closure(body)
    tuples_seen: dict[str, set[tuple]] = {}
    for atom in body:
        if isinstance(atom, Neq) and eq.same(atom.left, atom.right):
            return False
        if isinstance(atom, RelAtom):
            key = tuple(eq.rep(x) for x in atom.args)
            if key in tuples_seen.setdefault(atom.rel, set()):
                return False
            tuples_seen[atom.rel].add(key)
    return True


def model_of_qpf(body: Iterable[Atom]) -> tuple[Structure, dict[str, int]] | None:
    """Canonical model of a satisfiable qpf formula, with its store."""
    body = tuple(body)
    if not qpf_satisfiable(body):
        return None
    from .syntax import atoms_vars, eq_closure
    eq = eq_closure(body)
    ids: dict[str, int] = {}
    for var in sorted(atoms_vars(body)):
        rep = eq.rep(var)
        if rep not in ids:
            ids[rep] = len(ids)
    store = {var: ids[eq.rep(var)] for var in atoms_vars(body)}
    interp: dict[str, set] = {}
    for atom in body:
        if isinstance(atom, RelAtom):
            interp.setdefault(atom.rel, set()).add(tuple(store[x] for x in atom.args))
    return Structure(interp), store
