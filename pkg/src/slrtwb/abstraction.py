"""Finite abstract domains: bounded color triples and multiset fusion closure.

A triple records, for a tuple of variables, the color each variable's value
has in some model plus a bounded multiset of colors of elements not referred
to by any variable.  The per-predicate least fixpoint computes exactly the
bounded color abstractions of the canonical models.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import product
from typing import Iterable

from .errors import ColorClash
from .syntax import Eq, PredAtom, RelAtom, Rule, Sid
from .util import (Color, Multiset, color_key, format_multiset, mset,
                   mset_remove_one, mset_union, sub_multisets_upto)


@dataclass(frozen=True)
class ColorTriple:
    variables: tuple[str, ...]
    colors: tuple[Color, ...]    # aligned with variables
    m: Multiset

    def color_of(self, var: str) -> Color:
        return self.colors[self.variables.index(var)]

    def as_dict(self) -> dict[str, Color]:
        return dict(zip(self.variables, self.colors))

    def __str__(self):
        assign = ",".join(f"{v}:{{{','.join(sorted(c))}}}"
                          for v, c in zip(self.variables, self.colors))
        return f"<{{{assign}}},{format_multiset(self.m)}>"


def make_triple(assign: dict[str, Color], m: Iterable[Color]) -> ColorTriple:
    variables = tuple(sorted(assign))
    return ColorTriple(variables, tuple(assign[v] for v in variables), mset(m))


def triple_compose(t1: ColorTriple, t2: ColorTriple, k: int) -> set[ColorTriple]:
    """All compositions; undefined when colors clash on a shared variable."""
    d1, d2 = t1.as_dict(), t2.as_dict()
    merged = dict(d1)
    for var, color in d2.items():
        if var in merged:
            if merged[var] & color:
                raise ColorClash(var)
            merged[var] = merged[var] | color
        else:
            merged[var] = color
    total = mset_union(t1.m, t2.m)
    return {make_triple(merged, sub) for sub in sub_multisets_upto(total, k)}


def triple_project(t: ColorTriple, keep: Iterable[str], k: int) -> set[ColorTriple]:
    keep = set(keep)
    assign = {v: c for v, c in zip(t.variables, t.colors) if v in keep}
    dropped = [c for v, c in zip(t.variables, t.colors) if v not in keep]
    total = mset_union(t.m, mset(dropped))
    return {make_triple(assign, sub) for sub in sub_multisets_upto(total, k)}


def color_of_qpf(atoms: Iterable[RelAtom | Eq]) -> ColorTriple:
    """Variables of the formula with their diagonal-atom colors, empty rest."""
    assign: dict[str, set[str]] = {}
    for atom in atoms:
        if isinstance(atom, RelAtom):
            for v in atom.args:
                assign.setdefault(v, set())
            if len(set(atom.args)) == 1:
                assign[atom.args[0]].add(atom.rel)
        elif isinstance(atom, Eq):
            for v in (atom.left, atom.right):
                assign.setdefault(v, set())
    return make_triple({v: frozenset(c) for v, c in assign.items()}, ())


# ---------------------------------------------------------------------------
# Per-predicate least fixpoint.

PosTriple = tuple[tuple[Color, ...], Multiset]  # colors by parameter position


def _eval_rule(rule: Rule, pools: dict[str, set[PosTriple]],
               k: int) -> set[PosTriple]:
    base: dict[str, Color] = {}
    for atom in rule.body:
        if isinstance(atom, RelAtom):
            for v in atom.args:
                base.setdefault(v, frozenset())
            if len(set(atom.args)) == 1:
                v = atom.args[0]
                base[v] = base[v] | {atom.rel}
    combos: list[tuple[dict[str, Color], Multiset]] = [(base, ())]
    for callee in rule.pred_atoms():
        nxt = []
        for assign, m in combos:
            for colors, m2 in pools[callee.pred]:
                merged = dict(assign)
                ok = True
                for arg, color in zip(callee.args, colors):
                    if arg in merged:
                        if merged[arg] & color:
                            ok = False
                            break
                        merged[arg] = merged[arg] | color
                    else:
                        merged[arg] = color
                if ok:
                    nxt.append((merged, mset_union(m, m2)))
        combos = nxt
        if not combos:
            return set()
    out: set[PosTriple] = set()
    for assign, m in combos:
        head_colors = tuple(assign.get(x, frozenset()) for x in rule.params)
        dropped = [c for v, c in assign.items() if v not in rule.params]
        total = mset_union(m, mset(dropped))
        for sub in sub_multisets_upto(total, k):
            out.add((head_colors, sub))
    return out


def fixpoint_triples(sid: Sid, k: int) -> dict[str, set[PosTriple]]:
    """Least solution of the per-rule constraints (ascending iteration).

    Intermediate compositions carry the full multiset and the bound is
    applied on the projected result, which reaches the same final sets.
    """
    pools: dict[str, set[PosTriple]] = {p: set() for p in sid.pred_arities()}
    by_callee: dict[str, list[Rule]] = {}
    for rule in sid.rules:
        for atom in rule.pred_atoms():
            by_callee.setdefault(atom.pred, []).append(rule)
    work = deque(sorted(sid.rules, key=str))
    queued = set(work)
    while work:
        rule = work.popleft()
        queued.discard(rule)
        new = _eval_rule(rule, pools, k)
        if not new <= pools[rule.head]:
            pools[rule.head] |= new
            for dependent in by_callee.get(rule.head, ()):
                if dependent not in queued:
                    work.append(dependent)
                    queued.add(dependent)
    return pools


def third_components(pool: set[PosTriple]) -> set[Multiset]:
    return {m for _, m in pool}


# ---------------------------------------------------------------------------
# Single-pair multiset fusion closure and the boundedness condition.


def _fusions(m1: Multiset, m2: Multiset, k: int) -> set[Multiset]:
    out: set[Multiset] = set()
    for c1 in set(m1):
        for c2 in set(m2):
            if c1 & c2:
                continue
            fused = mset_union(mset_remove_one(m1, c1), mset_remove_one(m2, c2),
                               (c1 | c2,))
            out |= sub_multisets_upto(fused, k)
    return out


def single_pair_fusion_closure(k: int, base: Iterable[Multiset]) -> set[Multiset]:
    """Closure under fusing two multisets along a pair of disjoint colors."""
    closed: set[Multiset] = set(base)
    items = sorted(closed, key=repr)
    frontier = list(items)
    while frontier:
        m1 = frontier.pop(0)
        produced: set[Multiset] = set()
        for m2 in list(items):
            produced |= _fusions(m1, m2, k)
            produced |= _fusions(m2, m1, k)
        fresh = sorted(produced - closed, key=repr)
        closed |= produced
        items.extend(fresh)
        frontier.extend(fresh)
    return closed


def rgb_condition_check(closure: set[Multiset]) -> tuple[bool, tuple[Color, Color] | None]:
    """True iff every two colors that can each appear three times in one
    connected structure intersect; otherwise a disjoint witness pair."""
    blues = sorted({m[0] for m in closure
                    if len(m) == 3 and m[0] == m[1] == m[2]}, key=color_key)
    for i, c1 in enumerate(blues):
        for c2 in blues[i:]:
            if not (c1 & c2):
                return False, (c1, c2)
    return True, None
