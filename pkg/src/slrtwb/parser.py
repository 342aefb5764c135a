"""Parser for the line-oriented input format.

Grammar (whitespace-insensitive within a statement, `#` starts a comment):

    rel  name/arity ...
    pred name/arity ...
    P(x1,...,xn) <- [exists v1 ... vm .] atom * atom * ...

Atoms: ``emp``, ``x = y``, ``x != y``, ``r(a,b,...)``, ``Q(a,...)`` and bare
``Q`` for nullary predicates.  Identifiers match ``[A-Za-z_][A-Za-z0-9_]*``;
``rel``, ``pred``, ``exists`` and ``emp`` are reserved.  A rule may span
several lines, up to the next declaration, rule head or end of input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ArityError, DuplicateParameter, ParseError, UndeclaredSymbol
from .syntax import (Atom, Emp, Eq, Formula, Neq, PredAtom, PredicateSymbol,
                     RelAtom, RelationSymbol, Rule, Sid, atoms_vars,
                     normalize_body)

KEYWORDS = {"rel", "pred", "exists", "emp"}
IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

_TOKEN_RE = re.compile(r"""
    (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<number>[0-9]+)
  | (?P<arrow><-)
  | (?P<neq>!=)
  | (?P<punct>[()/,.*=])
  | (?P<junk>\S)
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(lines: list[tuple[int, str]]) -> list[Token]:
    toks = []
    for lineno, text in lines:
        for m in _TOKEN_RE.finditer(text):
            kind = m.lastgroup
            if kind == "junk":
                raise ParseError(lineno, m.start() + 1, f"unexpected character {m.group()!r}")
            toks.append(Token(kind, m.group(), lineno, m.start() + 1))
    return toks


class _Cursor:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else Token("", "", 1, 1)
            raise ParseError(last.line, last.col, "unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text:
            raise ParseError(tok.line, tok.col, f"expected {text!r}, found {tok.text!r}")
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text

    def done(self) -> bool:
        return self.pos >= len(self.tokens)


def _ident(cur: _Cursor, what: str, allow_keyword: bool = False) -> Token:
    tok = cur.next()
    if tok.kind != "ident":
        raise ParseError(tok.line, tok.col, f"expected {what}, found {tok.text!r}")
    if not allow_keyword and tok.text in KEYWORDS:
        raise ParseError(tok.line, tok.col, f"{tok.text!r} is reserved and cannot name {what}")
    return tok


def _split_statements(text: str) -> list[list[tuple[int, str]]]:
    """Group physical lines into statements.

    A statement starts on a line beginning with ``rel``/``pred`` or on a line
    containing ``<-``; other nonempty lines continue the previous statement.
    """
    statements: list[list[tuple[int, str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        starts = (re.match(r"(rel|pred)\b", stripped) is not None) or ("<-" in line)
        if starts or not statements:
            if not starts:
                col = len(raw) - len(raw.lstrip()) + 1
                raise ParseError(lineno, col, "statement must start with rel, pred or a rule head")
            statements.append([(lineno, line)])
        else:
            statements[-1].append((lineno, line))
    return statements


def _parse_decls(cur: _Cursor, kind: str) -> list[tuple[str, int, Token]]:
    decls = []
    while not cur.done():
        name = _ident(cur, f"{kind} name")
        cur.expect("/")
        arity_tok = cur.next()
        if not arity_tok.text.isdigit():
            raise ParseError(arity_tok.line, arity_tok.col,
                             f"expected arity after {name.text}/")
        decls.append((name.text, int(arity_tok.text), name))
    return decls


def _parse_atom(cur: _Cursor, rels: dict[str, int], preds: dict[str, int]) -> Atom:
    tok = cur.next()
    if tok.kind != "ident":
        raise ParseError(tok.line, tok.col, f"expected an atom, found {tok.text!r}")
    if tok.text == "emp":
        return Emp()
    if tok.text in KEYWORDS:
        raise ParseError(tok.line, tok.col, f"{tok.text!r} is reserved")
    name = tok.text
    if cur.at("("):
        cur.next()
        args = []
        if not cur.at(")"):
            while True:
                args.append(_ident(cur, "a variable").text)
                if cur.at(")"):
                    break
                cur.expect(",")
        cur.expect(")")
        if name in rels:
            if len(args) != rels[name]:
                raise ArityError(tok.line, tok.col,
                                 f"relation {name} expects {rels[name]} arguments, got {len(args)}")
            return RelAtom(name, tuple(args))
        if name in preds:
            if len(args) != preds[name]:
                raise ArityError(tok.line, tok.col,
                                 f"predicate {name} expects {preds[name]} arguments, got {len(args)}")
            return PredAtom(name, tuple(args))
        raise UndeclaredSymbol(tok.line, tok.col, f"undeclared symbol {name}")
    if cur.at("=") or cur.at("!="):
        op = cur.next()
        right = _ident(cur, "a variable").text
        return Eq(name, right) if op.text == "=" else Neq(name, right)
    # Bare identifier: a nullary predicate atom.
    if name in preds:
        if preds[name] != 0:
            raise ArityError(tok.line, tok.col, f"predicate {name} is not nullary")
        return PredAtom(name, ())
    if name in rels:
        raise ArityError(tok.line, tok.col, f"relation {name} needs arguments")
    raise UndeclaredSymbol(tok.line, tok.col, f"undeclared symbol {name}")


def _parse_body(cur: _Cursor, rels: dict[str, int],
                preds: dict[str, int]) -> tuple[tuple[str, ...], tuple[Atom, ...]]:
    existentials: list[str] = []
    if cur.at("exists"):
        start = cur.next()
        while not cur.at("."):
            existentials.append(_ident(cur, "a quantified variable").text)
        cur.expect(".")
        if not existentials:
            raise ParseError(start.line, start.col, "empty quantifier prefix")
        if len(set(existentials)) != len(existentials):
            raise ParseError(start.line, start.col, "repeated quantified variable")
    atoms = [_parse_atom(cur, rels, preds)]
    while cur.at("*"):
        cur.next()
        atoms.append(_parse_atom(cur, rels, preds))
    if not cur.done():
        tok = cur.peek()
        raise ParseError(tok.line, tok.col, f"unexpected {tok.text!r} after rule body")
    return tuple(existentials), normalize_body(atoms)


def _parse_rule(cur: _Cursor, rels: dict[str, int], preds: dict[str, int]) -> Rule:
    head = _ident(cur, "a predicate")
    params: list[str] = []
    if cur.at("("):
        cur.next()
        if not cur.at(")"):
            while True:
                params.append(_ident(cur, "a parameter").text)
                if cur.at(")"):
                    break
                cur.expect(",")
        cur.expect(")")
    if head.text not in preds:
        raise UndeclaredSymbol(head.line, head.col, f"undeclared predicate {head.text}")
    if len(params) != preds[head.text]:
        raise ArityError(head.line, head.col,
                         f"predicate {head.text} expects {preds[head.text]} parameters, "
                         f"got {len(params)}")
    if len(set(params)) != len(params):
        raise DuplicateParameter(head.line, head.col,
                                 f"duplicate parameter in head of {head.text}")
    cur.expect("<-")
    existentials, atoms = _parse_body(cur, rels, preds)
    existentials = tuple(v for v in existentials if v not in params)
    free = atoms_vars(atoms) - set(existentials)
    if not free <= set(params):
        bad = sorted(free - set(params))
        raise ParseError(head.line, head.col,
                         f"free variables {', '.join(bad)} of the body are not parameters")
    return Rule(head.text, tuple(params), existentials, atoms)


def parse_sid(text: str) -> Sid:
    """Parse a full input file into a system of inductive definitions."""
    relations: list[RelationSymbol] = []
    predicates: list[PredicateSymbol] = []
    rules: list[Rule] = []
    rels: dict[str, int] = {}
    preds: dict[str, int] = {}
    for stmt in _split_statements(text):
        toks = _tokenize(stmt)
        cur = _Cursor(toks)
        first = toks[0]
        if first.text == "rel":
            cur.next()
            for name, arity, tok in _parse_decls(cur, "relation"):
                if arity < 1:
                    raise ArityError(tok.line, tok.col, f"relation {name} must have arity >= 1")
                if name in rels or name in preds:
                    raise ParseError(tok.line, tok.col, f"duplicate declaration of {name}")
                rels[name] = arity
                relations.append(RelationSymbol(name, arity))
        elif first.text == "pred":
            cur.next()
            for name, arity, tok in _parse_decls(cur, "predicate"):
                if name in rels or name in preds:
                    raise ParseError(tok.line, tok.col, f"duplicate declaration of {name}")
                preds[name] = arity
                predicates.append(PredicateSymbol(name, arity))
        else:
            rules.append(_parse_rule(cur, rels, preds))
    return Sid(tuple(relations), tuple(predicates), tuple(rules))


def parse_sentence(text: str, sid: Sid) -> Formula:
    """Parse a closed formula, e.g. ``exists x y . A0(x,y)``."""
    toks = _tokenize([(1, text.split("#", 1)[0])])
    cur = _Cursor(toks)
    existentials, atoms = _parse_body(cur, sid.rel_arities(), sid.pred_arities())
    free = atoms_vars(atoms) - set(existentials)
    if free:
        raise ParseError(1, 1, f"sentence has free variables: {', '.join(sorted(free))}")
    return Formula(existentials, atoms)
