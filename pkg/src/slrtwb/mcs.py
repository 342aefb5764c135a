"""Definitions whose canonical models are the maximally connected parts.

Given a normalized system and nullary root, builds a system over "narrowed"
predicates: a variant of B carries an index set J of parameter positions
that reference the traced components and an equivalence xi on J grouping
positions by component.  Begin rules define the fresh nullary predicate P,
one per way a component can be completed inside a rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

from .errors import CapExceeded, EmptySemantics
from .normalize import trim
from .syntax import (Atom, PredAtom, PredicateSymbol, RelAtom, Rule, Sid,
                     atoms_vars, conn_closure, normalize_body, validate_sid)
from .util import Partition, iter_set_partitions

ROOT_NAME = "P"


@dataclass(frozen=True)
class XiPredicate:
    base: str
    J: tuple[int, ...]
    xi: tuple[tuple[int, ...], ...]  # classes, each sorted, sorted by minimum

    @property
    def arity(self) -> int:
        return len(self.J)

    def name(self) -> str:
        j = ",".join(map(str, self.J))
        classes = "-".join(".".join(map(str, c)) for c in self.xi)
        return f"{self.base}|J={j}|xi={classes}"


def _subset_partitions(arity: int) -> list[tuple[tuple[int, ...], tuple[tuple[int, ...], ...]]]:
    """All (J, xi) choices for one predicate atom: J may be empty."""
    out = []
    positions = list(range(1, arity + 1))
    for size in range(arity + 1):
        for J in combinations(positions, size):
            for blocks in iter_set_partitions(list(J)):
                xi = tuple(sorted((tuple(sorted(b)) for b in blocks),
                                  key=lambda b: b[0]))
                out.append((J, xi))
    return sorted(set(out))


@dataclass(frozen=True)
class McsAnnotation:
    """One admissible way to split a rule around the traced components."""
    choice: tuple[tuple[tuple[int, ...], tuple[tuple[int, ...], ...]], ...]
    side: tuple[bool, ...]        # per qpf component: True = traced side
    psi1: tuple[Atom, ...]        # traced side
    psi2: tuple[Atom, ...]
    mentioned: frozenset[str]
    xi_pairs: tuple[tuple[str, str], ...]


def _components(atoms: tuple[RelAtom, ...]) -> list[list[RelAtom]]:
    part = Partition(range(len(atoms)))
    var_home: dict[str, int] = {}
    for i, atom in enumerate(atoms):
        for v in atom.args:
            if v in var_home:
                part.union(var_home[v], i)
            else:
                var_home[v] = i
    groups: dict[object, list[RelAtom]] = {}
    for i, atom in enumerate(atoms):
        groups.setdefault(part.rep(i), []).append(atom)
    return [groups[k] for k in sorted(groups, key=repr)]


def enumerate_annotations(rule: Rule, arities: dict[str, int],
                          cap: int = 50000):
    """All annotations satisfying the free-variable separation conditions."""
    callees = rule.pred_atoms()
    qpf = tuple(a for a in rule.qpf_atoms() if isinstance(a, RelAtom))
    comps = _components(qpf)
    comp_vars = [set().union(*(set(a.args) for a in comp)) for comp in comps]
    per_callee = [_subset_partitions(arities[c.pred]) for c in callees]
    produced = 0
    for choice in product(*per_callee):
        j_vars: set[str] = set()
        jbar_vars: set[str] = set()
        for callee, (J, _) in zip(callees, choice):
            for pos, arg in enumerate(callee.args, start=1):
                (j_vars if pos in J else jbar_vars).add(arg)
        forced = []
        consistent = True
        for vars_ in comp_vars:
            to_first = bool(vars_ & j_vars)
            to_second = bool(vars_ & jbar_vars)
            if to_first and to_second:
                consistent = False
                break
            forced.append(True if to_first else (False if to_second else None))
        if not consistent:
            continue
        free = [i for i, f in enumerate(forced) if f is None]
        for bits in product((True, False), repeat=len(free)):
            side = list(forced)
            for i, b in zip(free, bits):
                side[i] = b
            psi1 = tuple(a for i, comp in enumerate(comps) if side[i] for a in comp)
            psi2 = tuple(a for i, comp in enumerate(comps) if not side[i] for a in comp)
            conn = conn_closure(psi1)
            pairs = list(conn.restricted_pairs(atoms_vars(psi1)))
            mentioned = set(atoms_vars(psi1))
            for callee, (J, xi) in zip(callees, choice):
                for block in xi:
                    block_vars = [callee.args[p - 1] for p in block]
                    mentioned.update(block_vars)
                    for other in block_vars[1:]:
                        pairs.append((block_vars[0], other))
            produced += 1
            if produced > cap:
                raise CapExceeded(
                    f"annotation cap exceeded on a rule of {rule.head}")
            yield McsAnnotation(tuple(choice), tuple(side), psi1, psi2,
                                frozenset(mentioned), tuple(pairs))


def _xi_classes(partition: Partition, by_param: dict[str, int],
                members: frozenset[str]) -> tuple[tuple[int, ...], ...]:
    classes: dict[str, set[int]] = {}
    for var in members:
        classes.setdefault(partition.rep(var), set()).add(by_param[var])
    return tuple(sorted((tuple(sorted(c)) for c in classes.values()),
                        key=lambda c: c[0]))


def build_mcs_sid(sid: Sid, root: str, cap: int = 50000) -> tuple[Sid, str]:
    """The system whose canonical models of P are the maximally connected
    substructures of the root's canonical models."""
    arities = sid.pred_arities()
    rules: list[Rule] = []
    predicates: dict[str, int] = {ROOT_NAME: 0}
    for rule in sid.rules:
        callees = rule.pred_atoms()
        params = rule.params
        by_param = {x: i + 1 for i, x in enumerate(params)}
        for ann in enumerate_annotations(rule, arities, cap):
            part = Partition(ann.mentioned, ann.xi_pairs)
            body: list[Atom] = list(ann.psi1)
            ok_callees = True
            for callee, (J, xi) in zip(callees, ann.choice):
                if not J:
                    continue
                variant = XiPredicate(callee.pred, J, xi)
                predicates.setdefault(variant.name(), variant.arity)
                body.append(PredAtom(variant.name(),
                                     tuple(callee.args[p - 1] for p in J)))
            # ---- begin rule: one complete component, untouched by the head
            classes = {part.rep(v) for v in ann.mentioned}
            if ann.mentioned and len(classes) == 1 \
                    and not (ann.mentioned & set(params)):
                body_t = normalize_body(body)
                exist = tuple(sorted(atoms_vars(body_t)))
                rules.append(Rule(ROOT_NAME, (), exist, body_t))
            # ---- middle rules: components referenced by head parameters
            mentioned_params = [x for x in params if x in ann.mentioned]
            psi2_vars = atoms_vars(ann.psi2)
            if any(x in psi2_vars for x in mentioned_params):
                continue  # condition: traced parameters avoid the other side
            jbar_args = set()
            for callee, (J, _) in zip(callees, ann.choice):
                for pos, arg in enumerate(callee.args, start=1):
                    if pos not in J:
                        jbar_args.add(arg)
            if any(x in jbar_args for x in mentioned_params):
                continue  # traced parameter passed outside the trace
            exist_mentioned = ann.mentioned - set(params)
            anchored = all(
                any(part.same(y, x) for x in mentioned_params)
                for y in exist_mentioned
            )
            if not anchored:
                continue  # a complete component would be lost here
            # parameters invisible here may still sit inside a component of
            # the caller; each admissible superset yields its own variant
            free_params = [x for x in params
                           if x not in ann.mentioned
                           and x not in psi2_vars and x not in jbar_args]
            for bits in product((False, True), repeat=len(free_params)):
                extra = [x for x, b in zip(free_params, bits) if b]
                chosen = mentioned_params + extra
                if not chosen:
                    continue
                J0 = tuple(sorted(by_param[x] for x in chosen))
                xi0 = _xi_classes(part, by_param, frozenset(mentioned_params))
                xi0 = tuple(sorted(xi0 + tuple((by_param[x],) for x in extra),
                                   key=lambda c: c[0]))
                head = XiPredicate(rule.head, J0, xi0)
                predicates.setdefault(head.name(), head.arity)
                body_t = normalize_body(body)
                head_params = tuple(params[j - 1] for j in J0)
                exist = tuple(sorted(atoms_vars(body_t) - set(head_params)))
                rules.append(Rule(head.name(), head_params, exist, body_t))
    rules = list(dict.fromkeys(rules))
    gamma = Sid(sid.relations,
                tuple(PredicateSymbol(n, a) for n, a in sorted(predicates.items())),
                tuple(rules))
    validate_sid(gamma)
    try:
        gamma = trim(gamma, ROOT_NAME)
    except EmptySemantics:
        gamma = Sid(sid.relations, (PredicateSymbol(ROOT_NAME, 0),), ())
    return gamma, ROOT_NAME
