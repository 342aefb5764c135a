"""Top-level decision pipeline and bound arithmetic.

The input system is normalized, translated to an automaton, decomposed into
choice-free branches, freed of persistent variables, wrapped, and turned
back into expandable systems; each branch is then decided through the color
abstraction.  The set of models is treewidth-bounded iff every branch is.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .abstraction import (fixpoint_triples, rgb_condition_check,
                          single_pair_fusion_closure, third_components)
from .automata import (SigmaAutomaton, automaton_to_sid, choice_free_decompose,
                       eliminate_trivial_sccs, sid_to_automaton, stage1_strip,
                       stage2_remove_nonpersistent_equalities, stage3_annotate,
                       stage3_remove_persistent, stage3_split,
                       wrap_one_transitions)
from .errors import EmptySemantics
from .mcs import build_mcs_sid
from .normalize import (eliminate_equalities, make_all_satisfiable,
                        normalize_sid, strip_disequalities, trim,
                        wrap_sentence)
from .syntax import Formula, Measures, Sid, max_pred_arity, measures
from .util import Color

BOUND_LIMIT = 10 ** 18


@dataclass(frozen=True)
class Verdict:
    bounded: bool
    bound: int | None = None
    witness: tuple[Color, Color] | None = None
    witness_branch: int | None = None
    stats: dict = field(default_factory=dict)
    note: str = ""

    def render(self) -> str:
        if self.bounded:
            if self.bound is None:
                return "BOUNDED bound exists, exceeds representable range"
            return f"BOUNDED bound={self.bound}"
        c1, c2 = self.witness
        fmt = lambda c: "{" + ",".join(sorted(c)) + "}"
        return f"UNBOUNDED witness=({fmt(c1)},{fmt(c2)})"


def check_expandable_twb(sid: Sid, root: str, k: int = 3) -> Verdict:
    """Decide boundedness for an expandable, normalized system.

    Builds the connected-component system, runs the triple fixpoint, closes
    the root's multisets under single-pair fusion and checks the color
    condition.  A positive verdict carries the optimal bound.
    """
    gamma, p = build_mcs_sid(sid, root)
    pools = fixpoint_triples(gamma, k)
    base = third_components(pools.get(p, set()))
    closure = single_pair_fusion_closure(k, base)
    ok, witness = rgb_condition_check(closure)
    stats = {
        "mcs_rules": len(gamma.rules),
        "triples": sum(len(v) for v in pools.values()),
        "closure_size": len(closure),
    }
    if ok:
        return Verdict(True, measures(sid).max_var_in_rule, stats=stats)
    return Verdict(False, witness=witness, stats=stats)


def bound_formula(m: Measures, pred_arity: int,
                  per_branch_delta1: list[int]) -> tuple[int | None, int | None, int | None]:
    """(headline bound, closed form, per-branch form); None marks overflow."""
    v, ra, rn, pa, xa = (m.max_var_in_rule, m.max_rule_arity, m.relations_no,
                         pred_arity, m.max_rel_arity)
    big = 2 * v + (1 + ra) * rn * pa ** xa
    K = m.preds_no * rn * pa ** (pa + xa)
    closed = None
    if ra <= 1 or K * max(ra, 1).bit_length() <= 200:
        n = max(K, ra ** K)
        value = v + n * big
        if value <= BOUND_LIMIT:
            closed = value
    branch = None
    if per_branch_delta1:
        value = v + max(per_branch_delta1) * big
        if value <= BOUND_LIMIT:
            branch = value
    candidates = [b for b in (closed, branch) if b is not None]
    return (min(candidates) if candidates else None), closed, branch


def check_twb(sid: Sid, root: str | None = None,
              sentence: Formula | None = None, k: int = 3,
              assume_expandable: bool = False,
              trace: Callable[[str, object], None] | None = None) -> Verdict:
    """Decide treewidth boundedness of the root's models.

    Runs the full reduction unless ``assume_expandable`` short-cuts to the
    direct check (sound only when the input is already expandable, e.g. for
    systems produced by this very pipeline).
    """
    emit = trace or (lambda stage, payload: None)
    if root is None:
        if sentence is None:
            raise ValueError("need a root predicate or a sentence")
        sid, root = wrap_sentence(sid, sentence)
    emit("input", (sid, root))
    original_measures = measures(sid)
    pred_arity = max_pred_arity(sid)
    try:
        normalized = eliminate_equalities(sid)
        normalized = make_all_satisfiable(normalized, root)
        normalized = trim(normalized, root)
        normalized = strip_disequalities(normalized)
    except EmptySemantics:
        return Verdict(True, 0, note="the root has no models",
                       stats={"branches": 0, "delta1_max": 0,
                              "measures": original_measures.as_dict()})
    emit("normalized", (normalized, root))

    if assume_expandable:
        verdict = check_expandable_twb(normalized, root, k)
        stats = dict(verdict.stats)
        stats.update({"branches": 1, "delta1_max": 0,
                      "measures": original_measures.as_dict()})
        return Verdict(verdict.bounded, verdict.bound, verdict.witness,
                       0 if not verdict.bounded else None, stats, verdict.note)

    auto = sid_to_automaton(normalized, root)
    emit("automaton", auto)
    auto = eliminate_trivial_sccs(auto)
    emit("no-trivial-sccs", auto)
    branches = choice_free_decompose(auto)
    emit("choice-free-branches", branches)

    delta1: list[int] = []
    verdict_cache: dict = {}
    branch_count = 0
    for i, branch in enumerate(branches):
        stage1 = stage1_strip(branch)
        emit(f"branch-{i}-stage1", stage1)
        stage2 = stage2_remove_nonpersistent_equalities(stage1)
        emit(f"branch-{i}-stage2", stage2)
        annotated, _ = stage3_annotate(stage2)
        emit(f"branch-{i}-annotated", annotated)
        for j, split in enumerate(stage3_split(annotated)):
            branch_count += 1
            removed = stage3_remove_persistent(split)
            emit(f"branch-{i}.{j}-persistent-free", removed)
            wrapped = wrap_one_transitions(removed)
            emit(f"branch-{i}.{j}-wrapped", wrapped)
            delta1.append(len(wrapped.one_transitions()))
            key = (wrapped.initial, frozenset(wrapped.transitions))
            if key in verdict_cache:
                sub = verdict_cache[key]
            else:
                gamma, groot = automaton_to_sid(wrapped)
                emit(f"branch-{i}.{j}-gamma", (gamma, groot))
                try:
                    gamma = normalize_sid(gamma, groot)
                except EmptySemantics:
                    sub = None
                else:
                    sub = check_expandable_twb(gamma, groot, k)
                verdict_cache[key] = sub
            if sub is not None and not sub.bounded:
                stats = {"branches": branch_count, "delta1_max": max(delta1),
                         "measures": original_measures.as_dict()}
                return Verdict(False, witness=sub.witness,
                               witness_branch=branch_count - 1, stats=stats)
    headline, closed, per_branch = bound_formula(original_measures, pred_arity, delta1)
    stats = {
        "branches": branch_count,
        "delta1_max": max(delta1, default=0),
        "measures": original_measures.as_dict(),
        "closed_form_bound": closed,
        "branch_bound": per_branch,
    }
    note = "" if headline is not None else "bound exists, exceeds representable range"
    return Verdict(True, headline, stats=stats, note=note)
