"""Tree automata over alphabets of quantifier- and predicate-free formulas.

Transition labels talk about positioned variables: ``x_j`` are the source
state's parameters, ``y_j`` are label-local existentials and ``x<i>_j`` are
the parameters of the i-th target state.  The pipeline below turns a system
of definitions into finitely many choice-free automata without persistent
variables, whose definitions are expandable.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field, replace
from itertools import count, product

from .errors import (AllPersistentAtom, InternalError, NoReset)
from .syntax import (Atom, Emp, Eq, Formula, Neq, PredAtom, PredicateSymbol,
                     RelAtom, RelationSymbol, Rule, Sid, atoms_vars,
                     eq_closure, normalize_body, substitute, validate_sid)
from .util import Partition

ONE = "1"
INF = "oo"

_VAR_RE = re.compile(r"^([xy])(\d*)_(\d+)$")


def lx(i: int, j: int) -> str:
    """Parameter j of the source (i = 0) or of target i >= 1."""
    return f"x{i if i else ''}_{j}"


def ly(j: int) -> str:
    return f"y_{j}"


def var_info(name: str) -> tuple[str, int, int]:
    """(kind, position, index); position 0 is the source."""
    m = _VAR_RE.match(name)
    if not m:
        raise InternalError(f"not a label variable: {name}")
    kind, pos, idx = m.groups()
    return kind, int(pos) if pos else 0, int(idx)


@dataclass(frozen=True)
class State:
    name: str
    arity: int
    ann: tuple[tuple[int, int], ...] | None = None

    def render(self) -> str:
        if self.ann is None:
            return self.name
        inner = ",".join(f"{p}>{y}" for p, y in self.ann)
        return f"({self.name},{{{inner}}})"


@dataclass(frozen=True)
class Transition:
    source: State
    label: tuple[Atom, ...]
    targets: tuple[State, ...]
    lam: str | None = None
    tag: int | None = None

    def label_str(self) -> str:
        return " * ".join(str(a) for a in self.label)

    def render(self) -> str:
        tgt = ",".join(t.render() for t in self.targets)
        suffix = f" ({'∞' if self.lam == INF else self.lam})" if self.lam else ""
        return f"{self.source.render()} --[{self.label_str()}]--> ({tgt}){suffix}"


@dataclass(frozen=True)
class SigmaAutomaton:
    initial: State
    transitions: tuple[Transition, ...]

    def states(self) -> list[State]:
        seen = {self.initial}
        out = [self.initial]
        for t in self.transitions:
            for s in (t.source, *t.targets):
                if s not in seen:
                    seen.add(s)
                    out.append(s)
        return out

    def from_state(self, state: State) -> list[Transition]:
        return [t for t in self.transitions if t.source == state]

    def one_transitions(self) -> list[Transition]:
        return [t for t in self.transitions if t.lam == ONE]

    def inf_transitions(self) -> list[Transition]:
        return [t for t in self.transitions if t.lam == INF]

    def render(self) -> str:
        return "\n".join(t.render() for t in self.transitions)


def _label_classes(label: tuple[Atom, ...]) -> Partition:
    return eq_closure(tuple(a for a in label if not isinstance(a, PredAtom)))


# ---------------------------------------------------------------------------
# Translation between definitions and automata.


def sid_to_automaton(sid: Sid, root: str) -> SigmaAutomaton:
    """One state per predicate, one transition per rule.

    The rule body's own atoms keep their shape; the binding of callee
    arguments becomes explicit equalities with the target states' parameters.
    """
    arities = sid.pred_arities()
    states = {p: State(f"q_{p}", a) for p, a in arities.items()}
    transitions = []
    for rule in sid.rules:
        sub = {x: lx(0, j + 1) for j, x in enumerate(rule.params)}
        sub.update({y: ly(j + 1) for j, y in enumerate(rule.existentials)})
        label = list(substitute(rule.qpf_atoms(), sub))
        targets = []
        for i, atom in enumerate(rule.pred_atoms(), start=1):
            targets.append(states[atom.pred])
            for j, arg in enumerate(atom.args, start=1):
                label.append(Eq(sub.get(arg, arg), lx(i, j)))
        transitions.append(Transition(states[rule.head], normalize_body(label),
                                      tuple(targets)))
    return SigmaAutomaton(states[root], tuple(transitions))


def _safe_pred_names(states: list[State]) -> dict[State, str]:
    names = {}
    used: set[str] = set()
    for s in states:
        base = re.sub(r"[^A-Za-z0-9_]", "_", s.render()).strip("_") or "Q"
        if base[0].isdigit():
            base = "Q" + base
        name = base
        n = 1
        while name in used:
            n += 1
            name = f"{base}_{n}"
        used.add(name)
        names[s] = name
    return names


def automaton_to_sid(auto: SigmaAutomaton) -> tuple[Sid, str]:
    """One predicate per state, one rule per transition."""
    states = auto.states()
    names = _safe_pred_names(states)
    preds = tuple(PredicateSymbol(names[s], s.arity) for s in states)
    relations: dict[str, int] = {}
    rules = []
    for t in auto.transitions:
        sub = {}
        for v in sorted(atoms_vars(t.label)):
            kind, pos, idx = var_info(v)
            if kind == "y":
                sub[v] = f"w{idx}"
            elif pos == 0:
                sub[v] = f"x{idx}"
            else:
                sub[v] = f"v{pos}_{idx}"
        params = tuple(f"x{j}" for j in range(1, t.source.arity + 1))
        body = list(substitute(t.label, sub))
        for a in body:
            if isinstance(a, RelAtom):
                relations.setdefault(a.rel, len(a.args))
        callee_vars: list[str] = []
        for i, target in enumerate(t.targets, start=1):
            args = tuple(sub.get(lx(i, j), f"v{i}_{j}")
                         for j in range(1, target.arity + 1))
            callee_vars.extend(args)
            body.append(PredAtom(names[target], args))
        body_t = normalize_body(body)
        existentials = tuple(sorted(atoms_vars(body_t) - set(params)))
        rules.append(Rule(names[t.source], params, existentials, body_t))
    rules = list(dict.fromkeys(rules))
    sid = Sid(tuple(RelationSymbol(n, a) for n, a in sorted(relations.items())),
              preds, tuple(rules))
    validate_sid(sid)
    return sid, names[auto.initial]


# ---------------------------------------------------------------------------
# SCC analysis.


@dataclass
class SccGraph:
    sccs: list[frozenset[State]]          # topological order, root first
    index_of: dict[State, int]
    edges: set[tuple[int, int]]
    nonlinear: set[int]

    def is_linear(self, i: int) -> bool:
        return i not in self.nonlinear

    def is_trivial(self, i: int, auto: SigmaAutomaton) -> bool:
        scc = self.sccs[i]
        if len(scc) > 1:
            return False
        q = next(iter(scc))
        return not any(t.source == q and q in t.targets for t in auto.transitions)


def scc_graph(auto: SigmaAutomaton) -> SccGraph:
    states = auto.states()
    succ: dict[State, list[State]] = {s: [] for s in states}
    for t in auto.transitions:
        for target in t.targets:
            succ[t.source].append(target)
    index: dict[State, int] = {}
    low: dict[State, int] = {}
    on_stack: set[State] = set()
    stack: list[State] = []
    sccs: list[frozenset[State]] = []
    counter = count()

    def strongconnect(v0: State):
        work = [(v0, iter(succ[v0]))]
        index[v0] = low[v0] = next(counter)
        stack.append(v0)
        on_stack.add(v0)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = next(counter)
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                sccs.append(frozenset(comp))

    for s in states:
        if s not in index:
            strongconnect(s)
    sccs.reverse()  # Tarjan emits reverse topological order
    index_of = {s: i for i, comp in enumerate(sccs) for s in comp}
    edges = set()
    nonlinear = set()
    for t in auto.transitions:
        i = index_of[t.source]
        inside = sum(1 for target in t.targets if index_of[target] == i)
        if inside >= 2:
            nonlinear.add(i)
        for target in t.targets:
            j = index_of[target]
            if i != j:
                edges.add((i, j))
    return SccGraph(sccs, index_of, edges, nonlinear)


def _pre_of(auto: SigmaAutomaton, scc: frozenset[State]) -> list[Transition]:
    return [t for t in auto.transitions
            if t.source not in scc and any(s in scc for s in t.targets)]


def _post_of(auto: SigmaAutomaton, scc: frozenset[State]) -> list[Transition]:
    return [t for t in auto.transitions
            if t.source in scc and not any(s in scc for s in t.targets)]


def _prepost_of(auto: SigmaAutomaton, scc: frozenset[State]) -> list[Transition]:
    return [t for t in auto.transitions
            if t.source in scc and any(s in scc for s in t.targets)]


def trim_automaton(auto: SigmaAutomaton) -> SigmaAutomaton | None:
    """Keep reachable, productive states; None when the language is empty."""
    productive: set[State] = set()
    changed = True
    while changed:
        changed = False
        for t in auto.transitions:
            if t.source in productive:
                continue
            if all(s in productive for s in t.targets):
                productive.add(t.source)
                changed = True
    if auto.initial not in productive:
        return None
    reachable = {auto.initial}
    frontier = [auto.initial]
    while frontier:
        q = frontier.pop()
        for t in auto.from_state(q):
            if all(s in productive for s in t.targets):
                for s in t.targets:
                    if s not in reachable:
                        reachable.add(s)
                        frontier.append(s)
    keep = tuple(t for t in auto.transitions
                 if t.source in reachable and t.source in productive
                 and all(s in reachable and s in productive for s in t.targets))
    if keep == auto.transitions:
        return auto
    return SigmaAutomaton(auto.initial, keep)


# ---------------------------------------------------------------------------
# Trivial SCC elimination (labels of incoming/outgoing transitions fused).


def _fresh_y_allocator(transitions) -> count:
    top = 0
    for t in transitions:
        for v in atoms_vars(t.label):
            kind, _, idx = var_info(v)
            if kind == "y":
                top = max(top, idx)
    return count(top + 1)


def _inline_once(auto: SigmaAutomaton, q: State, fresh: count) -> SigmaAutomaton:
    t_in = next(t for t in auto.transitions if q in t.targets)
    k = t_in.targets.index(q) + 1
    outs = auto.from_state(q)
    new_batch = []
    for t_out in outs:
        m = len(t_out.targets)
        shared = {j: ly(next(fresh)) for j in range(1, q.arity + 1)}
        sub_in: dict[str, str] = {}
        for v in atoms_vars(t_in.label):
            kind, pos, idx = var_info(v)
            if kind == "x" and pos == k:
                sub_in[v] = shared[idx]
            elif kind == "x" and pos > k:
                sub_in[v] = lx(pos + m - 1, idx)
        sub_out: dict[str, str] = {}
        for v in atoms_vars(t_out.label):
            kind, pos, idx = var_info(v)
            if kind == "y":
                sub_out[v] = ly(next(fresh))
            elif pos == 0:
                sub_out[v] = shared[idx]
            else:
                sub_out[v] = lx(k + pos - 1, idx)
        # parameters of q passed but unused in the outgoing label still glue
        label = (substitute(t_in.label, sub_in) + substitute(t_out.label, sub_out))
        targets = t_in.targets[:k - 1] + t_out.targets + t_in.targets[k:]
        new_batch.append(Transition(t_in.source, normalize_body(label), targets,
                                    t_in.lam, t_in.tag))
    new_transitions = []
    for t in auto.transitions:
        if t is t_in:
            new_transitions.extend(new_batch)
        else:
            new_transitions.append(t)
    still_target = any(q in t.targets for t in new_transitions)
    if not still_target:
        new_transitions = [t for t in new_transitions if t.source != q]
    return SigmaAutomaton(auto.initial, tuple(new_transitions))


def eliminate_trivial_sccs(auto: SigmaAutomaton) -> SigmaAutomaton:
    """Inline every non-root state whose SCC is trivial."""
    fresh = _fresh_y_allocator(auto.transitions)
    while True:
        graph = scc_graph(auto)
        target_states = {s for t in auto.transitions for s in t.targets}
        candidates = [
            q for i, scc in enumerate(graph.sccs)
            if graph.is_trivial(i, auto)
            for q in scc
            if q != auto.initial and q in target_states
        ]
        if not candidates:
            trimmed = trim_automaton(auto)
            return trimmed if trimmed is not None else SigmaAutomaton(auto.initial, ())
        auto = _inline_once(auto, candidates[0], fresh)


# ---------------------------------------------------------------------------
# Choice-free decomposition (tree expansion + {0,1,oo} assignment search).


def _expand_to_tree(auto: SigmaAutomaton) -> SigmaAutomaton:
    """Copy SCCs so the SCC graph becomes a tree with single-branch entries."""
    graph = scc_graph(auto)
    root_idx = graph.index_of[auto.initial]
    already_tree = all(
        i == root_idx or
        sum(sum(1 for s in t.targets if s in scc) for t in _pre_of(auto, scc)) == 1
        for i, scc in enumerate(graph.sccs)
    )
    if already_tree:
        return auto
    copies = count(1)
    out: list[Transition] = []

    def instantiate(scc_idx: int, rename: dict[State, State]):
        scc = graph.sccs[scc_idx]
        for t in auto.transitions:
            if t.source not in scc:
                continue
            targets = []
            for target in t.targets:
                if target in scc:
                    targets.append(rename[target])
                else:
                    child_idx = graph.index_of[target]
                    cid = next(copies)
                    child_rename = {
                        s: State(f"{s.name}~{cid}", s.arity, s.ann)
                        for s in graph.sccs[child_idx]
                    }
                    instantiate(child_idx, child_rename)
                    targets.append(child_rename[target])
            out.append(Transition(rename[t.source], t.label, tuple(targets),
                                  t.lam, t.tag))

    root_idx = graph.index_of[auto.initial]
    instantiate(root_idx, {s: s for s in graph.sccs[root_idx]})
    return SigmaAutomaton(auto.initial, tuple(out))


def choice_free_decompose(auto: SigmaAutomaton) -> list[SigmaAutomaton]:
    """All choice-free automata whose languages union to the input's."""
    trimmed = trim_automaton(auto)
    if trimmed is None:
        return []
    tree = _expand_to_tree(trimmed)
    graph = scc_graph(tree)
    n = len(graph.sccs)
    pre = [_pre_of(tree, s) for s in graph.sccs]
    post = [_post_of(tree, s) for s in graph.sccs]
    prepost = [_prepost_of(tree, s) for s in graph.sccs]
    root_idx = graph.index_of[tree.initial]
    if root_idx != 0:
        raise InternalError("root SCC not first in topological order")
    order = list(range(n))
    results: list[SigmaAutomaton] = []
    seen: set = set()
    INFV = float("inf")

    def assign(pos: int, x: dict[int, float], y: dict[Transition, float]):
        if pos == len(order):
            transitions = tuple(
                replace(t, lam=ONE if y[t] == 1 else INF)
                for t in tree.transitions if y.get(t, 0) > 0
            )
            cand = trim_automaton(SigmaAutomaton(tree.initial, transitions))
            if cand is not None:
                key = (cand.initial, frozenset(cand.transitions))
                if key not in seen:
                    seen.add(key)
                    results.append(cand)
            return
        i = order[pos]
        if i == root_idx:
            xi = 1.0
        else:
            xi = sum(y.get(t, 0) * sum(1 for s in t.targets if s in graph.sccs[i])
                     for t in pre[i])
        x = dict(x)
        x[i] = xi
        y = dict(y)
        for t in prepost[i]:
            y[t] = INFV if xi > 0 else 0
        if xi in (0, INFV) or not graph.is_linear(i):
            for t in post[i]:
                y[t] = INFV if xi > 0 else 0
            assign(pos + 1, x, y)
        else:
            for chosen in post[i]:
                y2 = dict(y)
                for t in post[i]:
                    y2[t] = 1 if t is chosen else 0
                assign(pos + 1, x, y2)

    assign(0, {}, {})
    return results


def is_choice_free(auto: SigmaAutomaton) -> tuple[bool, str | None]:
    """Verify the structural conditions and the 1/oo labeling."""
    graph = scc_graph(auto)
    root_idx = graph.index_of[auto.initial]
    lam_scc: dict[int, str] = {}
    entering: dict[int, list[Transition]] = {i: [] for i in range(len(graph.sccs))}
    for i, scc in enumerate(graph.sccs):
        for t in _pre_of(auto, scc):
            branches = sum(1 for s in t.targets if s in scc)
            entering[i].extend([t] * branches)
    for i in range(len(graph.sccs)):
        if i == root_idx:
            if entering[i]:
                return False, "root SCC has an entering transition"
        elif len(entering[i]) != 1:
            return False, (f"SCC {sorted(s.render() for s in graph.sccs[i])} entered by "
                           f"{len(entering[i])} branches")
    derived: dict[Transition, str] = {}
    lam_scc[root_idx] = ONE
    for i in range(len(graph.sccs)):  # topological order
        if i not in lam_scc:
            enter = entering[i][0]
            lam_scc[i] = derived.get(enter, INF)
        for t in _prepost_of(auto, graph.sccs[i]):
            derived[t] = INF
        posts = _post_of(auto, graph.sccs[i])
        if lam_scc[i] == ONE and graph.is_linear(i):
            if len(posts) != 1:
                return False, (f"linear 1-SCC {sorted(s.render() for s in graph.sccs[i])} "
                               f"with |post|={len(posts)}")
            derived[posts[0]] = ONE
        else:
            for t in posts:
                derived[t] = INF
    for t in auto.transitions:
        if t.lam not in (ONE, INF):
            return False, f"transition without a 1/oo label: {t.render()}"
        if t.lam != derived.get(t):
            return False, f"label mismatch on {t.render()}"
    return True, None


# ---------------------------------------------------------------------------
# Profiles.


def profile(auto: SigmaAutomaton) -> dict[State, frozenset[int]]:
    """Greatest fixpoint: parameter positions preserved along oo-transitions."""
    prof = {q: frozenset(range(1, q.arity + 1)) for q in auto.states()}
    classes = {t: _label_classes(t.label) for t in auto.inf_transitions()}
    changed = True
    while changed:
        changed = False
        for t in auto.inf_transitions():
            part = classes[t]
            for k, target in enumerate(t.targets, start=1):
                keep = frozenset(
                    r for r in prof[target]
                    if any(part.same(lx(0, s), lx(k, r)) for s in prof[t.source])
                )
                if keep != prof[target]:
                    prof[target] = keep
                    changed = True
    return prof


# ---------------------------------------------------------------------------
# Runs, characteristic formulas.


@dataclass(frozen=True)
class RunTree:
    transition: Transition
    children: tuple["RunTree", ...]


def cvar(kind: str, pos: tuple[int, ...], idx: int) -> str:
    return f"{kind}{'.'.join(map(str, pos))}#{idx}"


def instantiate_label(label: tuple[Atom, ...], pos: tuple[int, ...]) -> list[Atom]:
    sub = {}
    for v in atoms_vars(label):
        kind, child, idx = var_info(v)
        where = pos if (kind == "y" or child == 0) else pos + (child,)
        sub[v] = cvar("x" if kind == "x" else "y", where, idx)
    return [a for a in substitute(label, sub) if not isinstance(a, Emp)]


def charform_run(tree: RunTree, pos: tuple[int, ...] = ()) -> list[Atom]:
    atoms = instantiate_label(tree.transition.label, pos)
    for i, child in enumerate(tree.children, start=1):
        atoms.extend(charform_run(child, pos + (i,)))
    return atoms


def charform_formula(tree: RunTree) -> Formula:
    atoms = normalize_body(charform_run(tree))
    return Formula(tuple(sorted(atoms_vars(atoms))), atoms)


def enumerate_runs(auto: SigmaAutomaton, max_nodes: int = 8,
                   max_runs: int = 2000) -> tuple[list[RunTree], bool]:
    """All accepting runs with at most max_nodes transitions."""
    truncated = [False]

    def runs_from(q: State, budget: int) -> list[tuple[RunTree, int]]:
        out = []
        for t in auto.from_state(q):
            if budget < 1:
                truncated[0] = True
                continue
            partial: list[tuple[tuple[RunTree, ...], int]] = [((), budget - 1)]
            for target in t.targets:
                nxt = []
                for trees, rem in partial:
                    for sub, used in runs_from(target, rem):
                        nxt.append((trees + (sub,), used))
                partial = nxt
                if not partial:
                    break
            for trees, rem in partial:
                out.append((RunTree(t, trees), rem))
                if len(out) > max_runs:
                    truncated[0] = True
                    return out[:max_runs]
        return out

    result = [tree for tree, _ in runs_from(auto.initial, max_nodes)]
    return result[:max_runs], truncated[0]


def run_transition_multiset(tree: RunTree) -> list[Transition]:
    out = [tree.transition]
    for child in tree.children:
        out.extend(run_transition_multiset(child))
    return out


# ---------------------------------------------------------------------------
# Resets.


@dataclass(frozen=True)
class ContextStep:
    transition: Transition
    branch: int                       # 1-based continued branch
    closings: tuple[tuple[int, RunTree], ...]  # per other branch


@dataclass(frozen=True)
class ResetContext:
    state: State
    steps: tuple[ContextStep, ...]

    def frontier_pos(self) -> tuple[int, ...]:
        pos: tuple[int, ...] = ()
        for step in self.steps:
            pos = pos + (step.branch,)
        return pos

    def charform(self) -> list[Atom]:
        atoms: list[Atom] = []
        pos: tuple[int, ...] = ()
        for step in self.steps:
            atoms.extend(instantiate_label(step.transition.label, pos))
            for i, closing in step.closings:
                atoms.extend(charform_run(closing, pos + (i,)))
            pos = pos + (step.branch,)
        return atoms


def _complete_run_summaries(auto: SigmaAutomaton, cap: int = 24
                            ) -> dict[State, list[tuple[frozenset, RunTree]]]:
    """Per state: parameter equalities realized by complete oo-runs."""
    summaries: dict[State, dict[frozenset, RunTree]] = {q: {} for q in auto.states()}
    changed = True
    while changed:
        changed = False
        for t in auto.inf_transitions():
            pools = [list(summaries[target].items()) for target in t.targets]
            if any(not pool for pool in pools):
                continue
            for combo in product(*pools):
                pairs = []
                for atom in t.label:
                    if isinstance(atom, Eq):
                        pairs.append((atom.left, atom.right))
                for i, (eqs, _) in enumerate(combo, start=1):
                    for a, b in eqs:
                        pairs.append((lx(i, a), lx(i, b)))
                part = Partition((), pairs)
                summary = frozenset(
                    (j, k)
                    for j in range(1, t.source.arity + 1)
                    for k in range(j + 1, t.source.arity + 1)
                    if part.same(lx(0, j), lx(0, k))
                )
                bucket = summaries[t.source]
                if summary not in bucket and len(bucket) < cap:
                    bucket[summary] = RunTree(t, tuple(w for _, w in combo))
                    changed = True
    return {q: sorted(d.items(), key=lambda kv: sorted(kv[0])) for q, d in summaries.items()}


def _interface_partition(arity_root: int, arity_front: int,
                         pairs) -> frozenset[frozenset]:
    tokens = [("r", j) for j in range(1, arity_root + 1)] + \
             [("f", j) for j in range(1, arity_front + 1)]
    part = Partition(tokens, pairs)
    return frozenset(c for c in map(frozenset, part.classes()) if len(c) > 1)


def _step_summaries(auto: SigmaAutomaton, q: State,
                    completes) -> list[tuple[Transition, int, tuple, frozenset]]:
    """Single oo-steps from q: (transition, branch, closings, interface pairs)."""
    out = []
    for t in auto.from_state(q):
        if t.lam != INF:
            continue
        for branch in range(1, len(t.targets) + 1):
            other = [i for i in range(1, len(t.targets) + 1) if i != branch]
            pools = [completes[t.targets[i - 1]] for i in other]
            if any(not pool for pool in pools):
                continue
            for combo in product(*pools):
                pairs = []
                for atom in t.label:
                    if isinstance(atom, Eq):
                        pairs.append((atom.left, atom.right))
                closings = []
                for i, (eqs, witness) in zip(other, combo):
                    closings.append((i, witness))
                    for a, b in eqs:
                        pairs.append((lx(i, a), lx(i, b)))
                token_pairs = []
                part = Partition((), pairs)
                front = t.targets[branch - 1]
                for j in range(1, q.arity + 1):
                    for k in range(1, q.arity + 1):
                        if j < k and part.same(lx(0, j), lx(0, k)):
                            token_pairs.append((("r", j), ("r", k)))
                    for k in range(1, front.arity + 1):
                        if part.same(lx(0, j), lx(branch, k)):
                            token_pairs.append((("r", j), ("f", k)))
                for j in range(1, front.arity + 1):
                    for k in range(j + 1, front.arity + 1):
                        if part.same(lx(branch, j), lx(branch, k)):
                            token_pairs.append((("f", j), ("f", k)))
                out.append((t, branch, tuple(closings), frozenset(token_pairs)))
    return out


def _compose_interface(arity_root: int, arity_mid: int, arity_front: int,
                       first: frozenset, second: frozenset) -> frozenset:
    tokens = ([("r", j) for j in range(1, arity_root + 1)]
              + [("m", j) for j in range(1, arity_mid + 1)]
              + [("f", j) for j in range(1, arity_front + 1)])
    part = Partition(tokens)
    for a, b in first:
        part.union(a if a[0] == "r" else ("m", a[1]),
                   b if b[0] == "r" else ("m", b[1]))
    for a, b in second:
        part.union(("m", a[1]) if a[0] == "r" else a,
                   ("m", b[1]) if b[0] == "r" else b)
    out = set()
    interface = [("r", j) for j in range(1, arity_root + 1)] + \
                [("f", j) for j in range(1, arity_front + 1)]
    for i, a in enumerate(interface):
        for b in interface[i + 1:]:
            if part.same(a, b):
                out.add((a, b))
    return frozenset(out)


def _reset_ok(summary: frozenset, arity: int, prof: frozenset[int]) -> bool:
    part = Partition([("r", j) for j in range(1, arity + 1)]
                     + [("f", j) for j in range(1, arity + 1)], summary)
    for j in prof:
        if not part.same(("r", j), ("f", j)):
            return False
    for j in range(1, arity + 1):
        for k in range(1, arity + 1):
            if k not in prof and part.same(("r", j), ("f", k)):
                return False
    return True


def find_reset(auto: SigmaAutomaton, q: State,
               prof: dict[State, frozenset[int]] | None = None,
               max_summaries: int = 20000) -> ResetContext:
    """Shortest context of oo-transitions from q back to q that keeps exactly
    the profile positions and severs every other parameter equality."""
    if prof is None:
        prof = profile(auto)
    completes = _complete_run_summaries(auto)
    steps_of = {s: _step_summaries(auto, s, completes) for s in auto.states()}
    start = (q, frozenset((("r", j), ("f", j)) for j in range(1, q.arity + 1)))
    queue = deque([(q, start[1], ())])
    visited = {start}
    while queue:
        state, summary, path = queue.popleft()
        if state == q and path and _reset_ok(summary, q.arity, prof[q]):
            return ResetContext(q, path)
        if len(visited) > max_summaries:
            break
        for t, branch, closings, step_sum in steps_of[state]:
            front = t.targets[branch - 1]
            combined = _compose_interface(q.arity, state.arity, front.arity,
                                          summary, step_sum)
            key = (front, combined)
            if key in visited:
                continue
            visited.add(key)
            queue.append((front, combined,
                          path + (ContextStep(t, branch, closings),)))
    raise NoReset(f"no reset context for state {q.render()}")


def validate_reset(ctx: ResetContext, prof: dict[State, frozenset[int]]) -> bool:
    """Re-check both reset conditions on the concrete context."""
    atoms = ctx.charform()
    eq = eq_closure(tuple(atoms))
    front = ctx.frontier_pos()
    n = ctx.state.arity
    for j in prof[ctx.state]:
        if not eq.same(cvar("x", (), j), cvar("x", front, j)):
            return False
    for j in range(1, n + 1):
        for k in range(1, n + 1):
            if k not in prof[ctx.state] and eq.same(cvar("x", (), j), cvar("x", front, k)):
                return False
    return True


# ---------------------------------------------------------------------------
# Stages I-III of persistent-variable elimination.


def stage1_strip(auto: SigmaAutomaton) -> SigmaAutomaton:
    """Remove relation and disequality atoms from 1-transition labels."""
    out = []
    for t in auto.transitions:
        if t.lam == ONE:
            label = normalize_body(a for a in t.label
                                   if not isinstance(a, (RelAtom, Neq)))
            out.append(replace(t, label=label))
        else:
            out.append(t)
    return SigmaAutomaton(auto.initial, tuple(out))


def _is_persistent(var: str, t: Transition, prof) -> bool:
    kind, pos, idx = var_info(var)
    if kind == "y":
        return False
    state = t.source if pos == 0 else t.targets[pos - 1]
    return idx in prof[state]


def stage2_remove_nonpersistent_equalities(auto: SigmaAutomaton) -> SigmaAutomaton:
    """Drop from 1-transitions the equalities lost around resets."""
    prof = profile(auto)
    fresh = _fresh_y_allocator(auto.transitions)
    out = []
    for t in auto.transitions:
        if t.lam != ONE:
            out.append(t)
            continue
        # step 1: shield non-persistent source parameters equated to a
        # persistent target variable behind fresh label variables
        sub = {}
        for atom in t.label:
            if not isinstance(atom, Eq):
                continue
            for a, b in ((atom.left, atom.right), (atom.right, atom.left)):
                ka, pa, ja = var_info(a)
                kb, pb, jb = var_info(b)
                if (ka == "x" and pa == 0 and ja not in prof[t.source]
                        and kb == "x" and pb >= 1 and jb in prof[t.targets[pb - 1]]):
                    sub.setdefault(a, ly(next(fresh)))
        label = substitute(t.label, sub)
        # step 2: drop equalities involving any non-persistent state variable
        kept = []
        for atom in label:
            if isinstance(atom, Eq):
                bad = any(
                    var_info(v)[0] == "x" and not _is_persistent(v, t, prof)
                    for v in (atom.left, atom.right)
                )
                if bad:
                    continue
            kept.append(atom)
        out.append(replace(t, label=normalize_body(kept)))
    return SigmaAutomaton(auto.initial, tuple(out))


def stage3_annotate(auto: SigmaAutomaton) -> tuple[SigmaAutomaton, int]:
    """Annotate states with maps from persistent positions to label variables.

    Label variables of 1-transitions are first renamed apart into a global
    family indexed 1..M; the annotation map of each state sends a persistent
    parameter position to the index it is provably equal to on every run.
    """
    prof = profile(auto)
    renamed: list[Transition] = []
    m = 0
    for t in auto.transitions:
        if t.lam == ONE:
            ys = sorted({v for v in atoms_vars(t.label) if var_info(v)[0] == "y"},
                        key=lambda v: var_info(v)[2])
            sub = {}
            for v in ys:
                m += 1
                sub[v] = ly(m)
            renamed.append(replace(t, label=substitute(t.label, sub)))
        else:
            renamed.append(t)
    by_source: dict[str, list[tuple[int, Transition]]] = {}
    for idx, t in enumerate(renamed):
        by_source.setdefault(t.source.name, []).append((idx, t))

    if auto.initial.arity != 0:
        raise InternalError("annotation expects a nullary initial state")
    init = State(auto.initial.name, 0, ())
    queue = deque([init])
    seen = {init}
    out: list[Transition] = []
    out_keys: set = set()
    while queue:
        src = queue.popleft()
        a0 = dict(src.ann)
        for idx, t in by_source.get(src.name, ()):
            classes = _label_classes(t.label)
            targets = []
            ok = True
            for k, target in enumerate(t.targets, start=1):
                ann: dict[int, int] = {}
                if t.lam == ONE:
                    domain = sorted(prof[target])
                else:
                    domain = range(1, target.arity + 1)
                for i in domain:
                    xs = sorted(
                        (var_info(v)[2] for v in classes.class_of(lx(k, i))
                         if var_info(v)[0] == "x" and var_info(v)[1] == 0),
                    )
                    xs = [j for j in xs if j in a0]
                    if xs:
                        ann[i] = a0[xs[0]]
                        continue
                    if t.lam == ONE:
                        ys = sorted(
                            var_info(v)[2] for v in classes.class_of(lx(k, i))
                            if var_info(v)[0] == "y"
                        )
                        if ys:
                            ann[i] = ys[0]
                            continue
                        ok = False
                        break
                if not ok:
                    break
                if len(set(ann.values())) != len(ann):
                    raise InternalError("annotation not injective")
                targets.append(State(target.name, target.arity,
                                     tuple(sorted(ann.items()))))
            if not ok:
                continue
            new_t = Transition(src, t.label, tuple(targets), t.lam, tag=idx)
            key = (src, t.label, tuple(targets), t.lam, idx)
            if key not in out_keys:
                out_keys.add(key)
                out.append(new_t)
            for target in targets:
                if target not in seen:
                    seen.add(target)
                    queue.append(target)
    return SigmaAutomaton(init, tuple(out)), m


def stage3_split(annotated: SigmaAutomaton) -> list[SigmaAutomaton]:
    """One automaton per selection of a single annotated copy of each
    original 1-transition; all annotated oo-copies are kept everywhere."""
    ones: dict[int, list[Transition]] = {}
    infs: list[Transition] = []
    for t in annotated.transitions:
        if t.lam == ONE:
            ones.setdefault(t.tag, []).append(t)
        else:
            infs.append(t)
    selections = product(*(ones[tag] for tag in sorted(ones)))
    out = []
    seen = set()
    for selection in selections:
        auto = SigmaAutomaton(annotated.initial, tuple(infs) + tuple(selection))
        trimmed = trim_automaton(auto)
        if trimmed is None:
            continue
        key = (trimmed.initial, frozenset(trimmed.transitions))
        if key not in seen:
            seen.add(key)
            out.append(trimmed)
    return out


def stage3_remove_persistent(auto: SigmaAutomaton) -> SigmaAutomaton:
    """Drop persistent variables; relation atoms over them become fresh
    symbols indexed by the annotation, shared across transitions."""

    def new_state(s: State) -> State:
        dom = [p for p, _ in (s.ann or ())]
        name = s.name
        if s.ann:
            name += "|" + ",".join(f"{p}>{y}" for p, y in s.ann)
        return State(name, s.arity - len(dom), None)

    out = []
    for t in auto.transitions:
        a0 = dict(t.source.ann or ())
        persistent: set[str] = {lx(0, j) for j in a0}
        if t.lam == ONE:
            persistent |= {v for v in atoms_vars(t.label) if var_info(v)[0] == "y"}
        doms = [a0] + [dict(target.ann or ()) for target in t.targets]
        for i, target in enumerate(t.targets, start=1):
            persistent |= {lx(i, j) for j in doms[i]}

        def zeta(v: str) -> str:
            kind, pos, idx = var_info(v)
            if kind == "y":
                return v
            shift = sum(1 for j in doms[pos] if j < idx)
            return lx(pos, idx - shift)

        label: list[Atom] = []
        for atom in t.label:
            if isinstance(atom, RelAtom):
                g = {}
                kept_args = []
                for pos_in_atom, v in enumerate(atom.args, start=1):
                    if v in persistent:
                        _, _, idx = var_info(v)
                        g[pos_in_atom] = a0[idx]
                    else:
                        kept_args.append(zeta(v))
                if not kept_args:
                    raise AllPersistentAtom(f"atom {atom} has only persistent arguments")
                if g:
                    name = atom.rel + "@" + ",".join(f"{p}:{y}" for p, y in sorted(g.items()))
                else:
                    name = atom.rel
                label.append(RelAtom(name, tuple(kept_args)))
            elif isinstance(atom, (Eq, Neq)):
                if atom.left in persistent or atom.right in persistent:
                    continue
                pair = (zeta(atom.left), zeta(atom.right))
                label.append(Eq(*pair) if isinstance(atom, Eq) else Neq(*pair))
        out.append(Transition(new_state(t.source), normalize_body(label),
                              tuple(new_state(s) for s in t.targets), t.lam, t.tag))
    return SigmaAutomaton(new_state(auto.initial), tuple(out))


# ---------------------------------------------------------------------------
# Wrapping of 1-transitions.


def _reset_atoms(ctx: ResetContext, side: str) -> list[tuple[str, tuple[int, ...]]]:
    """Atoms of the reset whose arguments all equal anchor parameters.

    side "root" anchors at the context's root parameters, side "front" at the
    open frontier's; returns (relation, parameter index tuple) pairs.
    """
    atoms = ctx.charform()
    eq = eq_closure(tuple(atoms))
    anchor_pos = () if side == "root" else ctx.frontier_pos()
    anchors = {j: cvar("x", anchor_pos, j) for j in range(1, ctx.state.arity + 1)}
    out = set()
    for atom in atoms:
        if not isinstance(atom, RelAtom):
            continue
        index_sets = []
        for v in atom.args:
            hits = [j for j, a in anchors.items() if eq.same(v, a)]
            if not hits:
                index_sets = []
                break
            index_sets.append(hits)
        if not index_sets:
            continue
        for combo in product(*index_sets):
            out.add((atom.rel, combo))
    return sorted(out)


def wrap_one_transitions(auto: SigmaAutomaton) -> SigmaAutomaton:
    """Relabel 1-transitions with the atoms every reset applies to the glued
    parameters, so that definitions extracted from the result are expandable."""
    prof = profile(auto)
    graph = scc_graph(auto)
    resets: dict[State, ResetContext | None] = {}

    def reset_for(q: State) -> ResetContext | None:
        if q in resets:
            return resets[q]
        if q.arity == 0 or graph.is_trivial(graph.index_of[q], auto):
            resets[q] = None
            return None
        ctx = find_reset(auto, q, prof)
        if not validate_reset(ctx, prof):
            raise InternalError(f"reset for {q.render()} failed validation")
        resets[q] = ctx
        return ctx

    out = []
    for t in auto.transitions:
        if t.lam != ONE:
            out.append(t)
            continue
        if any(not isinstance(a, Emp) for a in t.label):
            raise InternalError(f"1-transition not yet reduced to emp: {t.render()}")
        atoms: list[Atom] = []
        ctx = reset_for(t.source)
        if ctx is not None:
            for rel, idxs in _reset_atoms(ctx, "root"):
                atoms.append(RelAtom(rel, tuple(lx(0, j) for j in idxs)))
        for i, target in enumerate(t.targets, start=1):
            ctx = reset_for(target)
            if ctx is not None:
                for rel, idxs in _reset_atoms(ctx, "front"):
                    atoms.append(RelAtom(rel, tuple(lx(i, j) for j in idxs)))
        out.append(replace(t, label=normalize_body(atoms)))
    return SigmaAutomaton(auto.initial, tuple(out))
