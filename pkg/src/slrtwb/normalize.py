"""Preprocessing that establishes the standing assumptions of the pipeline.

The decision procedure expects a nullary root whose definitions are
equality-free, all-satisfiable, trimmed and free of disequalities.  Each
transformation here preserves the model set of the root and is the identity
whenever the input already has the target property.
"""

from __future__ import annotations

import hashlib
from itertools import product

from .errors import EmptySemantics, InternalError
from .syntax import (Atom, Emp, Eq, Formula, Neq, PredAtom, PredicateSymbol,
                     RelAtom, Rule, Sid, atoms_vars, eq_closure,
                     normalize_body, validate_sid)
from .util import Partition, iter_set_partitions

Base = frozenset  # of (relation name, tuple of parameter positions)


# ---------------------------------------------------------------------------
# Sentence wrapping.


def wrap_sentence(sid: Sid, sentence: Formula) -> tuple[Sid, str]:
    """Represent a closed formula by a nullary predicate atom."""
    if sentence.free_vars():
        raise InternalError("wrap_sentence expects a closed formula")
    if (len(sentence.atoms) == 1 and isinstance(sentence.atoms[0], PredAtom)
            and not sentence.atoms[0].args and not sentence.existentials):
        return sid, sentence.atoms[0].pred
    used = set(sid.pred_arities()) | set(sid.rel_arities())
    name = "A"
    n = 0
    while name in used:
        n += 1
        name = f"A_{n}"
    rule = Rule(name, (), sentence.existentials, normalize_body(sentence.atoms))
    return Sid(sid.relations,
               sid.predicates + (PredicateSymbol(name, 0),),
               sid.rules + (rule,)), name


# ---------------------------------------------------------------------------
# Equality elimination.


def is_equality_free(sid: Sid) -> bool:
    for rule in sid.rules:
        for atom in rule.body:
            if isinstance(atom, Eq):
                return False
            if isinstance(atom, PredAtom) and len(set(atom.args)) != len(atom.args):
                return False
    return True


def _partition_name(pred: str, blocks: tuple[tuple[int, ...], ...]) -> str:
    if all(len(b) == 1 for b in blocks):
        return pred
    return pred + "@" + "|".join(",".join(str(i) for i in b) for b in blocks)


def _partitions(arity: int) -> list[tuple[tuple[int, ...], ...]]:
    out = []
    for blocks in iter_set_partitions(list(range(1, arity + 1))):
        out.append(tuple(sorted((tuple(sorted(b)) for b in blocks), key=lambda b: b[0])))
    return sorted(set(out))


def eliminate_equalities(sid: Sid) -> Sid:
    """Rewrite into an equality-free system preserving nullary semantics.

    For every predicate and every partition of its parameter positions there
    is a variant whose unfoldings force exactly that equality pattern on the
    original parameters.  Rule bodies are rewritten by unifying the classes
    of their equalities (plus the patterns chosen for callees); combinations
    whose induced head pattern differs from the declared one are emitted for
    the matching variant instead.
    """
    if is_equality_free(sid):
        return sid
    arities = sid.pred_arities()
    parts_of = {p: _partitions(a) for p, a in arities.items()}
    new_rules: list[Rule] = []
    for rule in sid.rules:
        n = len(rule.params)
        callees = [a for a in rule.body if isinstance(a, PredAtom)]
        others = [a for a in rule.body if not isinstance(a, PredAtom)]
        for head_blocks in parts_of[rule.head]:
            reps = {b: rule.params[b[0] - 1] for b in head_blocks}
            merge = {}
            for block in head_blocks:
                for i in block:
                    merge[rule.params[i - 1]] = reps[block]
            head_params = tuple(reps[b] for b in head_blocks)
            for choice in product(*(parts_of[c.pred] for c in callees)):
                pairs = []
                for atom in others:
                    if isinstance(atom, Eq):
                        pairs.append((merge.get(atom.left, atom.left),
                                      merge.get(atom.right, atom.right)))
                for callee, blocks in zip(callees, choice):
                    args = [merge.get(x, x) for x in callee.args]
                    for block in blocks:
                        for j in block[1:]:
                            pairs.append((args[block[0] - 1], args[j - 1]))
                all_vars = ({merge.get(v, v) for v in rule.params}
                            | set(rule.existentials))
                classes = Partition(all_vars, pairs)
                # the head pattern induced one step deep must match exactly
                if any(classes.same(reps[b1], reps[b2])
                       for i, b1 in enumerate(head_blocks)
                       for b2 in head_blocks[i + 1:]):
                    continue
                rep_of: dict[str, str] = {}
                for cls in classes.classes():
                    in_params = sorted(v for v in cls if v in head_params)
                    rep = in_params[0] if in_params else sorted(cls)[0]
                    for v in cls:
                        rep_of[v] = rep

                def resolve(v: str) -> str:
                    return rep_of.get(merge.get(v, v), merge.get(v, v))

                body: list[Atom] = []
                unsat = False
                for atom in others:
                    if isinstance(atom, Eq):
                        continue
                    if isinstance(atom, Neq):
                        left, right = resolve(atom.left), resolve(atom.right)
                        if left == right:
                            unsat = True
                            break
                        body.append(Neq(left, right))
                    elif isinstance(atom, RelAtom):
                        body.append(RelAtom(atom.rel, tuple(resolve(x) for x in atom.args)))
                if unsat:
                    continue
                ok = True
                for callee, blocks in zip(callees, choice):
                    args = tuple(resolve(callee.args[b[0] - 1]) for b in blocks)
                    if len(set(args)) != len(args):
                        ok = False  # covered by a coarser callee pattern
                        break
                    body.append(PredAtom(_partition_name(callee.pred, blocks), args))
                if not ok:
                    continue
                body_t = normalize_body(body)
                existentials = tuple(sorted(atoms_vars(body_t) - set(head_params)))
                new_rules.append(Rule(_partition_name(rule.head, head_blocks),
                                      head_params, existentials, body_t))
    new_rules = list(dict.fromkeys(new_rules))
    preds = {}
    for p in sid.predicates:
        for blocks in parts_of[p.name]:
            preds[_partition_name(p.name, blocks)] = len(blocks)
    used = {r.head for r in new_rules} | {a.pred for r in new_rules for a in r.pred_atoms()}
    used |= {p.name for p in sid.predicates if arities[p.name] == 0}
    out = Sid(sid.relations,
              tuple(PredicateSymbol(nm, ar) for nm, ar in sorted(preds.items())
                    if nm in used),
              tuple(new_rules))
    validate_sid(out)
    return out


# ---------------------------------------------------------------------------
# All-satisfiability (base annotation).


def _rule_instance(rule: Rule, arities: dict[str, int],
                   callee_bases: tuple[Base, ...]) -> tuple[Base, bool]:
    """Head base of one rule application; flag is False on a duplicate tuple."""
    seen: set[tuple[str, tuple[str, ...]]] = set()
    for atom in rule.body:
        if isinstance(atom, RelAtom):
            key = (atom.rel, atom.args)
            if key in seen:
                return frozenset(), False
            seen.add(key)
    callees = rule.pred_atoms()
    for callee, base in zip(callees, callee_bases):
        for rel, positions in base:
            key = (rel, tuple(callee.args[p - 1] for p in positions))
            if key in seen:
                return frozenset(), False
            seen.add(key)
    positions = {x: i + 1 for i, x in enumerate(rule.params)}
    head = frozenset(
        (rel, tuple(positions[x] for x in args))
        for rel, args in seen if all(x in positions for x in args)
    )
    return head, True


def _base_name(pred: str, base: Base) -> str:
    if not base:
        return pred
    text = ";".join(sorted(f"{rel}({','.join(map(str, pos))})" for rel, pos in base))
    return f"{pred}#{hashlib.sha1(text.encode()).hexdigest()[:8]}"


def make_all_satisfiable(sid: Sid, root: str) -> Sid:
    """Annotate predicates with satisfiable bases (identity when unneeded).

    A base records which relation tuples over the parameters are produced by
    some unfolding.  Rules are kept only for base combinations that compose
    without duplicating a tuple, so every complete unfolding of the output
    is satisfiable.
    """
    arities = sid.pred_arities()
    rules = [r for r in sid.rules
             if not any(isinstance(a, Neq) and a.left == a.right for a in r.body)]
    derivable: dict[str, set[Base]] = {p: set() for p in arities}
    annotated: dict[tuple[str, Base], list[tuple[Rule, tuple[Base, ...]]]] = {}
    changed = True
    while changed:
        changed = False
        for rule in rules:
            callees = rule.pred_atoms()
            pools = [sorted(derivable[c.pred], key=repr) for c in callees]
            for combo in product(*pools):
                head, ok = _rule_instance(rule, arities, combo)
                if not ok:
                    continue
                key = (rule.head, head)
                entry = annotated.setdefault(key, [])
                if (rule, combo) not in entry:
                    entry.append((rule, combo))
                if head not in derivable[rule.head]:
                    derivable[rule.head].add(head)
                    changed = True
    if not derivable.get(root):
        raise EmptySemantics(f"{root} has no models")

    # Violation scan: a reachable rule with derivable callee bases that do
    # not compose means some complete unfolding is unsatisfiable.
    reachable = {root}
    frontier = [root]
    while frontier:
        p = frontier.pop()
        for rule in sid.rules_of(p):
            for atom in rule.pred_atoms():
                if atom.pred not in reachable:
                    reachable.add(atom.pred)
                    frontier.append(atom.pred)
    violating = len(rules) != len(sid.rules)
    if not violating:
        for rule in rules:
            if rule.head not in reachable:
                continue
            callees = rule.pred_atoms()
            pools = [sorted(derivable[c.pred], key=repr) for c in callees]
            for combo in product(*pools):
                _, ok = _rule_instance(rule, arities, combo)
                if not ok:
                    violating = True
                    break
            if violating:
                break
    if not violating:
        return sid

    new_rules: list[Rule] = []
    preds: dict[str, int] = {}
    for (pred, head), entries in sorted(annotated.items(), key=repr):
        head_name = _base_name(pred, head)
        preds[head_name] = arities[pred]
        for rule, combo in entries:
            body: list[Atom] = []
            it = iter(combo)
            for atom in rule.body:
                if isinstance(atom, PredAtom):
                    base = next(it)
                    name = _base_name(atom.pred, base)
                    preds.setdefault(name, arities[atom.pred])
                    body.append(PredAtom(name, atom.args))
                else:
                    body.append(atom)
            new_rules.append(Rule(head_name, rule.params, rule.existentials,
                                  normalize_body(body)))
    new_rules = list(dict.fromkeys(new_rules))
    out = Sid(sid.relations,
              tuple(PredicateSymbol(nm, ar) for nm, ar in sorted(preds.items())),
              tuple(new_rules))
    validate_sid(out)
    return out


# ---------------------------------------------------------------------------
# Disequality stripping and trimming.


def strip_disequalities(sid: Sid) -> Sid:
    new_rules = []
    for rule in sid.rules:
        body = normalize_body(a for a in rule.body if not isinstance(a, Neq))
        existentials = tuple(v for v in rule.existentials if v in atoms_vars(body))
        new_rules.append(Rule(rule.head, rule.params, existentials, body))
    if list(sid.rules) == new_rules:
        return sid
    return Sid(sid.relations, sid.predicates, tuple(new_rules))


def trim(sid: Sid, root: str) -> Sid:
    """Keep rules of predicates reachable from the root and productive."""
    productive: set[str] = set()
    changed = True
    while changed:
        changed = False
        for rule in sid.rules:
            if rule.head in productive:
                continue
            if all(a.pred in productive for a in rule.pred_atoms()):
                productive.add(rule.head)
                changed = True
    if root not in productive:
        raise EmptySemantics(f"{root} is unproductive")
    reachable = {root}
    frontier = [root]
    while frontier:
        p = frontier.pop()
        for rule in sid.rules_of(p):
            if not all(a.pred in productive for a in rule.pred_atoms()):
                continue
            for atom in rule.pred_atoms():
                if atom.pred not in reachable:
                    reachable.add(atom.pred)
                    frontier.append(atom.pred)
    keep = [r for r in sid.rules
            if r.head in reachable and r.head in productive
            and all(a.pred in productive for a in r.pred_atoms())]
    if keep == list(sid.rules):
        return sid
    used = {r.head for r in keep} | {a.pred for r in keep for a in r.pred_atoms()}
    preds = tuple(p for p in sid.predicates if p.name in used or p.name == root)
    return Sid(sid.relations, preds, tuple(keep))


def normalize_sid(sid: Sid, root: str) -> Sid:
    """The full chain: equalities out, all-satisfiable, trimmed, no disequalities."""
    sid = eliminate_equalities(sid)
    sid = make_all_satisfiable(sid, root)
    sid = trim(sid, root)
    sid = strip_disequalities(sid)
    return sid
