"""Core syntax of the logic: atoms, rules, systems of inductive definitions.

A system declares relation symbols (interpreted, arity >= 1) and predicate
symbols (defined by rules, arity >= 0).  Rule bodies are separating
conjunctions of atoms, stored as ordered tuples but treated as multisets by
every semantic operation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

from .errors import ArityMismatch, InternalError
from .util import Partition, fresh_name


@dataclass(frozen=True)
class RelationSymbol:
    name: str
    arity: int


@dataclass(frozen=True)
class PredicateSymbol:
    name: str
    arity: int


@dataclass(frozen=True)
class Emp:
    def __str__(self):
        return "emp"


@dataclass(frozen=True)
class Eq:
    left: str
    right: str

    def __str__(self):
        return f"{self.left} = {self.right}"


@dataclass(frozen=True)
class Neq:
    left: str
    right: str

    def __str__(self):
        return f"{self.left} != {self.right}"


@dataclass(frozen=True)
class RelAtom:
    rel: str
    args: tuple[str, ...]

    def __str__(self):
        return f"{self.rel}({','.join(self.args)})"


@dataclass(frozen=True)
class PredAtom:
    pred: str
    args: tuple[str, ...]

    def __str__(self):
        if not self.args:
            return self.pred
        return f"{self.pred}({','.join(self.args)})"


Atom = Emp | Eq | Neq | RelAtom | PredAtom


def atom_vars(atom: Atom) -> tuple[str, ...]:
    if isinstance(atom, (Eq, Neq)):
        return (atom.left, atom.right)
    if isinstance(atom, (RelAtom, PredAtom)):
        return atom.args
    return ()


def atoms_vars(atoms: Iterable[Atom]) -> set[str]:
    out: set[str] = set()
    for a in atoms:
        out.update(atom_vars(a))
    return out


def substitute_atom(atom: Atom, sub: dict[str, str]) -> Atom:
    if isinstance(atom, Eq):
        return Eq(sub.get(atom.left, atom.left), sub.get(atom.right, atom.right))
    if isinstance(atom, Neq):
        return Neq(sub.get(atom.left, atom.left), sub.get(atom.right, atom.right))
    if isinstance(atom, RelAtom):
        return RelAtom(atom.rel, tuple(sub.get(x, x) for x in atom.args))
    if isinstance(atom, PredAtom):
        return PredAtom(atom.pred, tuple(sub.get(x, x) for x in atom.args))
    return atom


def substitute(atoms: Iterable[Atom], sub: dict[str, str]) -> tuple[Atom, ...]:
    return tuple(substitute_atom(a, sub) for a in atoms)


def normalize_body(atoms: Iterable[Atom]) -> tuple[Atom, ...]:
    """Drop emp inside a nonempty body; emp is the unit of the conjunction."""
    atoms = tuple(atoms)
    rest = tuple(a for a in atoms if not isinstance(a, Emp))
    return rest if rest else (Emp(),)


@dataclass(frozen=True)
class Rule:
    head: str
    params: tuple[str, ...]
    existentials: tuple[str, ...]
    body: tuple[Atom, ...]

    def pred_atoms(self) -> tuple[PredAtom, ...]:
        return tuple(a for a in self.body if isinstance(a, PredAtom))

    def rel_atoms(self) -> tuple[RelAtom, ...]:
        return tuple(a for a in self.body if isinstance(a, RelAtom))

    def qpf_atoms(self) -> tuple[Atom, ...]:
        return tuple(a for a in self.body if not isinstance(a, PredAtom))

    def all_vars(self) -> set[str]:
        return set(self.params) | set(self.existentials)

    def __str__(self):
        head = self.head if not self.params else f"{self.head}({','.join(self.params)})"
        body = " * ".join(str(a) for a in self.body)
        if self.existentials:
            body = f"exists {' '.join(self.existentials)} . {body}"
        return f"{head} <- {body}"


@dataclass(frozen=True)
class Sid:
    relations: tuple[RelationSymbol, ...]
    predicates: tuple[PredicateSymbol, ...]
    rules: tuple[Rule, ...]

    def rel_arities(self) -> dict[str, int]:
        return {r.name: r.arity for r in self.relations}

    def pred_arities(self) -> dict[str, int]:
        return {p.name: p.arity for p in self.predicates}

    def rules_of(self, pred: str) -> tuple[Rule, ...]:
        return tuple(r for r in self.rules if r.head == pred)

    def has_pred(self, name: str) -> bool:
        return any(p.name == name for p in self.predicates)

    def __str__(self):
        return print_sid(self)


def print_sid(sid: Sid) -> str:
    lines = []
    if sid.relations:
        lines.append("rel " + " ".join(f"{r.name}/{r.arity}" for r in sid.relations))
    if sid.predicates:
        lines.append("pred " + " ".join(f"{p.name}/{p.arity}" for p in sid.predicates))
    lines.extend(str(rule) for rule in sid.rules)
    return "\n".join(lines) + "\n"


def validate_sid(sid: Sid) -> None:
    """Check the structural invariants of a system of definitions."""
    rels = sid.rel_arities()
    preds = sid.pred_arities()
    if set(rels) & set(preds):
        raise InternalError(f"relation/predicate name clash: {set(rels) & set(preds)}")
    for rule in sid.rules:
        if rule.head not in preds:
            raise InternalError(f"rule head {rule.head} undeclared")
        if len(rule.params) != preds[rule.head]:
            raise ArityMismatch(f"rule head {rule.head} arity mismatch")
        if len(set(rule.params)) != len(rule.params):
            raise InternalError(f"rule {rule.head}: duplicate parameters")
        if set(rule.params) & set(rule.existentials):
            raise InternalError(f"rule {rule.head}: existential shadows parameter")
        free = atoms_vars(rule.body) - set(rule.existentials)
        if not free <= set(rule.params):
            raise InternalError(
                f"rule {rule.head}: free variables {free - set(rule.params)} not parameters")
        for atom in rule.body:
            if isinstance(atom, RelAtom):
                if atom.rel not in rels:
                    raise InternalError(f"undeclared relation {atom.rel}")
                if len(atom.args) != rels[atom.rel]:
                    raise ArityMismatch(f"atom {atom} arity mismatch")
            elif isinstance(atom, PredAtom):
                if atom.pred not in preds:
                    raise InternalError(f"undeclared predicate {atom.pred}")
                if len(atom.args) != preds[atom.pred]:
                    raise ArityMismatch(f"atom {atom} arity mismatch")


# ---------------------------------------------------------------------------
# Quantitative measures.


@dataclass(frozen=True)
class Measures:
    max_var_in_rule: int
    max_rel_atom_in_rule: int
    max_rule_arity: int
    max_rel_arity: int
    preds_no: int
    relations_no: int

    def as_dict(self) -> dict[str, int]:
        return {
            "maxVarInRule": self.max_var_in_rule,
            "maxRelAtomInRule": self.max_rel_atom_in_rule,
            "maxRuleArity": self.max_rule_arity,
            "maxRelArity": self.max_rel_arity,
            "predsNo": self.preds_no,
            "relationsNo": self.relations_no,
        }


def measures(sid: Sid) -> Measures:
    """The six quantities; variables counted per rule include parameters."""
    max_var = max((len(r.params) + len(r.existentials) for r in sid.rules), default=0)
    max_rel_atoms = max((len(r.rel_atoms()) for r in sid.rules), default=0)
    max_rule_arity = max((len(r.pred_atoms()) for r in sid.rules), default=0)
    used_rels = {a.rel for r in sid.rules for a in r.rel_atoms()}
    rel_arities = sid.rel_arities()
    max_rel_arity = max((rel_arities[n] for n in used_rels), default=0)
    used_preds = {r.head for r in sid.rules} | {a.pred for r in sid.rules for a in r.pred_atoms()}
    return Measures(
        max_var_in_rule=max_var,
        max_rel_atom_in_rule=max_rel_atoms,
        max_rule_arity=max_rule_arity,
        max_rel_arity=max_rel_arity,
        preds_no=len(used_preds),
        relations_no=len(used_rels),
    )


def max_pred_arity(sid: Sid) -> int:
    used = {r.head for r in sid.rules} | {a.pred for r in sid.rules for a in r.pred_atoms()}
    arities = sid.pred_arities()
    return max((arities[p] for p in used), default=0)


# ---------------------------------------------------------------------------
# Closures over quantifier- and predicate-free bodies.


def eq_closure(body: Iterable[Atom]) -> Partition:
    """Smallest equivalence over the body's variables containing its equalities."""
    body = tuple(body)
    part = Partition(atoms_vars(body))
    for atom in body:
        if isinstance(atom, PredAtom):
            raise InternalError("eq_closure expects a predicate-free body")
        if isinstance(atom, Eq):
            part.union(atom.left, atom.right)
    return part


def conn_closure(body: Iterable[Atom]) -> Partition:
    """Variables co-occurring in some relation atom, closed transitively."""
    body = tuple(body)
    part = Partition(atoms_vars(body))
    for atom in body:
        if isinstance(atom, PredAtom):
            raise InternalError("conn_closure expects a predicate-free body")
        if isinstance(atom, RelAtom) and atom.args:
            first = atom.args[0]
            for other in atom.args[1:]:
                part.union(first, other)
    return part


# ---------------------------------------------------------------------------
# Unfolding.


@dataclass(frozen=True)
class Formula:
    """An existentially quantified separating conjunction (goal formula)."""
    existentials: tuple[str, ...]
    atoms: tuple[Atom, ...]

    def free_vars(self) -> set[str]:
        return atoms_vars(self.atoms) - set(self.existentials)

    def pred_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.atoms) if isinstance(a, PredAtom)]

    def is_predicate_free(self) -> bool:
        return not any(isinstance(a, PredAtom) for a in self.atoms)

    def __str__(self):
        body = " * ".join(str(a) for a in self.atoms) if self.atoms else "emp"
        if self.existentials:
            return f"exists {' '.join(self.existentials)} . {body}"
        return body


def unfold_step(goal: Formula, sid: Sid, which: int, rule: Rule) -> Formula:
    """Replace the predicate atom at index `which` by the rule body.

    Parameters are substituted by the atom's arguments; rule existentials are
    renamed apart from every variable already in the goal.
    """
    atom = goal.atoms[which]
    if not isinstance(atom, PredAtom) or atom.pred != rule.head:
        raise ArityMismatch(f"atom {atom} does not match rule head {rule.head}")
    if len(atom.args) != len(rule.params):
        raise ArityMismatch(f"atom {atom} arity mismatch with rule {rule.head}")
    used = atoms_vars(goal.atoms) | set(goal.existentials) | set(atom.args)
    sub = dict(zip(rule.params, atom.args))
    new_exists = []
    for y in rule.existentials:
        y2 = fresh_name(y, used)
        used.add(y2)
        sub[y] = y2
        new_exists.append(y2)
    new_atoms = substitute(rule.body, sub)
    atoms = goal.atoms[:which] + new_atoms + goal.atoms[which + 1:]
    atoms = normalize_body(atoms) if len(atoms) > 1 else atoms
    return Formula(goal.existentials + tuple(new_exists), atoms)


def formula_of_pred(sid: Sid, pred: str) -> Formula:
    arity = sid.pred_arities()[pred]
    args = tuple(f"x{i}" for i in range(1, arity + 1))
    return Formula((), (PredAtom(pred, args),))


def make_sid(relations, predicates, rules) -> Sid:
    sid = Sid(tuple(relations), tuple(predicates), tuple(rules))
    validate_sid(sid)
    return sid


def with_rules(sid: Sid, rules: Iterable[Rule]) -> Sid:
    return replace(sid, rules=tuple(rules))
