"""Desk-scale ground truth: bounded enumeration and brute-force abstractions.

Everything in this module is exponential and meant for small instances; it
exists to cross-check the abstract computations of the other modules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .structures import (Structure, dedup_isomorphic, kmcolabs,
                         maximal_connected_substructures, model_of_qpf,
                         single_pair_fusions)
from .syntax import (Formula, PredAtom, RelAtom, Sid, atoms_vars,
                     eq_closure as _eq, formula_of_pred, unfold_step)
from .util import Multiset


@dataclass(frozen=True)
class UnfoldingBudget:
    max_steps: int = 6
    max_elements: int = 10
    max_models: int = 4000


DEFAULT_BUDGET = UnfoldingBudget()


def enumerate_complete_unfoldings(sid: Sid, root: str,
                                  budget: UnfoldingBudget = DEFAULT_BUDGET
                                  ) -> tuple[list[Formula], bool]:
    """Breadth-first complete unfoldings: leftmost atom, rules in file order.

    Returns the complete unfoldings within budget and a truncation flag.
    """
    start = Formula((), (PredAtom(root, ()),)) if sid.pred_arities()[root] == 0 \
        else formula_of_pred(sid, root)
    frontier = [start]
    complete: list[Formula] = []
    truncated = False
    for _ in range(budget.max_steps):
        if not frontier:
            break
        next_frontier = []
        for goal in frontier:
            idxs = goal.pred_indices()
            if not idxs:
                continue
            which = idxs[0]
            atom = goal.atoms[which]
            for rule in sid.rules_of(atom.pred):
                out = unfold_step(goal, sid, which, rule)
                qpf = tuple(a for a in out.atoms if not isinstance(a, PredAtom))
                eq = _eq(qpf)
                rel_classes = {eq.rep(v) for a in qpf
                               if isinstance(a, RelAtom) for v in a.args}
                if len(rel_classes) > budget.max_elements:
                    truncated = True
                    continue
                if out.is_predicate_free():
                    complete.append(out)
                    if len(complete) >= budget.max_models:
                        return complete, True
                else:
                    next_frontier.append(out)
        frontier = next_frontier
    if frontier:
        truncated = True
    return complete, truncated


def canonical_model_of(formula: Formula) -> Structure | None:
    """The canonical model of a complete unfolding, if satisfiable."""
    out = model_of_qpf(formula.atoms)
    return out[0] if out is not None else None


def enumerate_canonical_models(sid: Sid, root: str,
                               budget: UnfoldingBudget = DEFAULT_BUDGET
                               ) -> tuple[list[Structure], bool]:
    """Canonical models of complete unfoldings, deduplicated up to isomorphism."""
    unfoldings, truncated = enumerate_complete_unfoldings(sid, root, budget)
    models = []
    for formula in unfoldings:
        s = canonical_model_of(formula)
        if s is None:
            continue
        if s.size() > budget.max_elements:
            truncated = True
            continue
        models.append(s)
    return dedup_isomorphic(models), truncated


def all_models_of_formula(formula: Formula,
                          element_cap: int = 8) -> list[Structure]:
    """Every model of a complete unfolding, up to isomorphism.

    Models are exactly the quotients of the canonical model by compatible
    equivalences that do not merge elements separated by a disequality.
    """
    from .structures import is_compatible, model_of_qpf, quotient
    from .syntax import Neq
    from .util import Partition, iter_set_partitions
    out = model_of_qpf(formula.atoms)
    if out is None:
        return []
    base, store = out
    if base.size() > element_cap + 6:
        return []
    diseq = {frozenset((store[a.left], store[a.right]))
             for a in formula.atoms if isinstance(a, Neq)}
    models = []
    supp = sorted(base.support())
    for blocks in iter_set_partitions(supp):
        part = Partition(supp)
        ok = True
        for block in blocks:
            for other in block[1:]:
                part.union(block[0], other)
        for u, v in diseq:
            if part.same(u, v):
                ok = False
                break
        if ok and is_compatible(part, base):
            q = quotient(base, part)
            if q.size() <= element_cap:
                models.append(q)
    return dedup_isomorphic(models)


def full_models_up_to_iso(sid: Sid, root: str,
                          budget: UnfoldingBudget = DEFAULT_BUDGET,
                          max_elements: int = 8) -> tuple[set, bool]:
    """Canonical forms of all models of bounded unfoldings (with fusions)."""
    from .structures import canonical_form
    unfoldings, truncated = enumerate_complete_unfoldings(sid, root, budget)
    forms = set()
    for formula in unfoldings:
        for s in all_models_of_formula(formula, max_elements):
            forms.add(canonical_form(s))
    return forms, truncated


def brute_kmcolabs(models: Iterable[Structure], k: int) -> set[Multiset]:
    out: set[Multiset] = set()
    for s in models:
        out |= kmcolabs(k, s)
    return out


def brute_funsplit_kmcolabs(models: Iterable[Structure], k: int) -> set[Multiset]:
    out: set[Multiset] = set()
    for s in models:
        for part in maximal_connected_substructures(s):
            out |= kmcolabs(k, part)
    return out


def realize_witness(components: list[Structure], colors: Iterable,
                    element_cap: int = 12, max_structures: int = 400) -> bool:
    """Search fused connected structures realizing each color triple.

    Smallest-first worklist over single-pair fusions of the components;
    succeeds once, for every given color, three elements of that color
    appear in one structure.
    """
    from .structures import canonical_form, mcolabs
    wanted = {frozenset(c) for c in colors}

    def satisfied_by(s: Structure) -> set:
        counts: dict = {}
        for c in mcolabs(s):
            counts[c] = counts.get(c, 0) + 1
        return {c for c in wanted if counts.get(c, 0) >= 3}

    seen = dedup_isomorphic(list(components))
    found: set = set()
    for s in seen:
        found |= satisfied_by(s)
    if wanted <= found:
        return True
    keys = {canonical_form(s) for s in seen}
    frontier = sorted(seen, key=lambda s: s.size())
    while frontier and len(seen) < max_structures:
        frontier.sort(key=lambda s: s.size())
        s1 = frontier.pop(0)
        for s2 in sorted(seen, key=lambda s: s.size()):
            if s1.size() + s2.size() > element_cap:
                continue
            for fused in single_pair_fusions(s1, s2):
                key = canonical_form(fused)
                if key in keys:
                    continue
                keys.add(key)
                seen.append(fused)
                frontier.append(fused)
                found |= satisfied_by(fused)
                if wanted <= found:
                    return True
                if len(seen) >= max_structures:
                    break
            if len(seen) >= max_structures:
                break
    return wanted <= found


def brute_fusion_closure(models: Iterable[Structure], pair_limit: int,
                         element_cap: int, k: int,
                         max_structures: int = 80) -> tuple[set[Multiset], bool]:
    """Color abstractions of everything reachable by single-pair fusions.

    Fusion rounds are bounded by pair_limit; results are truncated (and
    flagged) once the element or structure caps are reached.
    """
    from .structures import canonical_form
    seen = dedup_isomorphic(list(models))
    keys = {canonical_form(s) for s in seen}
    truncated = False
    frontier = list(seen)
    for _ in range(pair_limit):
        fresh: list[Structure] = []
        for s1 in frontier:
            for s2 in seen:
                if len(seen) + len(fresh) >= max_structures:
                    truncated = True
                    break
                if s1.size() + s2.size() > element_cap:
                    truncated = True
                    continue
                for fused in single_pair_fusions(s1, s2):
                    key = canonical_form(fused)
                    if key not in keys:
                        keys.add(key)
                        fresh.append(fused)
            if truncated and len(seen) + len(fresh) >= max_structures:
                break
        if not fresh:
            break
        seen.extend(fresh)
        frontier = fresh
        if len(seen) >= max_structures:
            truncated = True
            break
    return brute_kmcolabs(seen, k), truncated


def models_up_to_iso(sid: Sid, root: str,
                     budget: UnfoldingBudget = DEFAULT_BUDGET,
                     max_elements: int | None = None) -> tuple[set, bool]:
    """Canonical forms of the canonical models, for model-set comparisons."""
    from .structures import canonical_form
    cap = max_elements if max_elements is not None else budget.max_elements
    models, truncated = enumerate_canonical_models(sid, root, budget)
    return {canonical_form(s) for s in models if s.size() <= cap}, truncated


# ---------------------------------------------------------------------------
# Aggregated cross-checks.


@dataclass
class CheckResult:
    name: str
    status: str        # PASS | FAIL | INCONCLUSIVE
    detail: str = ""

    def line(self) -> str:
        detail = self.detail or "-"
        return f"CHECK {self.name} {self.status} {detail}"


@dataclass
class CrosscheckReport:
    results: list[CheckResult]
    verdict: object | None = None
    sampled_treewidths: list[int] = None
    component_multisets: dict = None

    def lines(self) -> list[str]:
        return [r.line() for r in self.results]

    def text(self) -> str:
        out = list(self.lines())
        counts = {"PASS": 0, "FAIL": 0, "INCONCLUSIVE": 0}
        for r in self.results:
            counts[r.status] += 1
        out.append(f"SUMMARY pass={counts['PASS']} fail={counts['FAIL']} "
                   f"inconclusive={counts['INCONCLUSIVE']}")
        return "\n".join(out)

    def failed(self) -> bool:
        return any(r.status == "FAIL" for r in self.results)


def _compare_sets(name: str, want: set, got: set, truncated: bool) -> CheckResult:
    if want == got:
        return CheckResult(name, "PASS", f"{len(want)} items")
    if truncated:
        return CheckResult(name, "INCONCLUSIVE", "budget exhausted before equality")
    missing, extra = len(want - got), len(got - want)
    return CheckResult(name, "FAIL", f"missing={missing} extra={extra}")


def crosscheck(sid: Sid, root: str,
               budget: UnfoldingBudget = DEFAULT_BUDGET,
               random_samples: int = 1000) -> CrosscheckReport:
    """Run every module-level property against brute force at desk scale."""
    import random as _random

    from .abstraction import (fixpoint_triples, single_pair_fusion_closure,
                              third_components)
    from .decide import check_twb
    from .mcs import build_mcs_sid
    from .normalize import normalize_sid
    from .structures import (canonical_form, color_of, compose,
                             internal_fusions, is_compatible,
                             maximal_connected_substructures, treewidth_exact)
    from .syntax import measures
    from .util import Partition, mset

    results: list[CheckResult] = []
    size_cap = min(8, budget.max_elements)

    # normalization preserves the models of bounded unfoldings
    normalized = None
    try:
        normalized = normalize_sid(sid, root)
    except Exception as exc:  # EmptySemantics included
        results.append(CheckResult("normalize-equivalence", "PASS",
                                   f"no models ({type(exc).__name__})"))
    if normalized is not None:
        full_cap = min(6, size_cap)
        want, t1 = full_models_up_to_iso(sid, root, budget, full_cap)
        got, t2 = full_models_up_to_iso(normalized, root, budget, full_cap)
        results.append(_compare_sets("normalize-equivalence", want, got, t1 or t2))

    # canonical models stay below the variable bound
    m = measures(sid)
    models, truncated = enumerate_canonical_models(sid, root, budget)
    small = [s for s in models if s.size() <= 10]
    bound = max(m.max_var_in_rule - 1, 0)
    bad = [s for s in small if treewidth_exact(s) > bound]
    results.append(CheckResult(
        "canonical-treewidth-bound",
        "FAIL" if bad else "PASS",
        f"{len(small)} models, width bound {bound}"))

    sampled_tw: list[int] = []
    for s in small:
        if s.size() <= 7:
            for fused in internal_fusions(s, element_cap=7):
                sampled_tw.append(treewidth_exact(fused))
        else:
            sampled_tw.append(treewidth_exact(s))

    if normalized is not None:
        # automaton translation preserves bounded models
        from .automata import (automaton_to_sid, charform_formula,
                               eliminate_trivial_sccs, enumerate_runs,
                               sid_to_automaton)
        auto = sid_to_automaton(normalized, root)
        runs, t3 = enumerate_runs(auto, max_nodes=budget.max_steps)
        run_forms = set()
        for tree in runs:
            model = canonical_model_of(charform_formula(tree))
            if model is not None and model.size() <= size_cap:
                run_forms.add(canonical_form(model))
        sid_forms, t4 = models_up_to_iso(normalized, root, budget, size_cap)
        results.append(_compare_sets("automaton-models", sid_forms, run_forms,
                                     t3 or t4 or truncated))
        back, back_root = automaton_to_sid(auto)
        back_forms, t5 = models_up_to_iso(back, back_root, budget, size_cap)
        results.append(_compare_sets("automaton-roundtrip", sid_forms, back_forms,
                                     t4 or t5))

        # connected-component system matches brute funsplit; the size cap is
        # low enough that both enumerations are complete below it
        gamma, p = build_mcs_sid(normalized, root)
        comp_budget = UnfoldingBudget(budget.max_steps + 2, budget.max_elements,
                                      budget.max_models)
        comp_cap = max(2, min(size_cap, budget.max_steps - 2))
        want = set()
        for s in models:
            for part in maximal_connected_substructures(s):
                if part.size() <= comp_cap:
                    want.add(canonical_form(part))
        got, t6 = models_up_to_iso(gamma, p, comp_budget, comp_cap)
        got = {f for f in got if f}  # components are nonempty by definition
        results.append(_compare_sets("mcs-equality", want, got, truncated or t6))

        # abstraction fixpoint includes the brute component abstraction
        pools = fixpoint_triples(gamma, 3)
        predicted = third_components(pools.get(p, set()))
        brute = brute_funsplit_kmcolabs(models, 3)
        if brute <= predicted:
            results.append(CheckResult("abstraction-inclusion", "PASS",
                                       f"{len(brute)} multisets"))
        else:
            results.append(CheckResult(
                "abstraction-inclusion",
                "INCONCLUSIVE" if truncated else "FAIL",
                f"uncovered={len(brute - predicted)}"))

        # fusion closure of concrete structures versus the abstract closure
        components = dedup_isomorphic(
            [part for s in models for part in maximal_connected_substructures(s)])
        base = brute_kmcolabs(components, 3)
        closed = single_pair_fusion_closure(3, base)
        concrete, t7 = brute_fusion_closure(components, pair_limit=2,
                                            element_cap=10, k=3,
                                            max_structures=60)
        if concrete <= closed:
            results.append(CheckResult("closure-inclusion", "PASS",
                                       f"{len(concrete)} multisets"))
        else:
            results.append(CheckResult(
                "closure-inclusion", "INCONCLUSIVE" if t7 else "FAIL",
                f"uncovered={len(concrete - closed)}"))

    # decision procedure versus sampled structures
    verdict = check_twb(sid, root)
    if verdict.bounded:
        if verdict.bound is None:
            results.append(CheckResult("verdict-consistency", "PASS",
                                       "bound beyond representable range"))
        else:
            over = [w for w in sampled_tw if w > verdict.bound]
            results.append(CheckResult(
                "verdict-consistency", "FAIL" if over else "PASS",
                f"bound={verdict.bound} max_sampled={max(sampled_tw, default=0)}"))
    else:
        c1, c2 = verdict.witness
        components = dedup_isomorphic(
            [part for s in models for part in maximal_connected_substructures(s)])
        if realize_witness(components, [c1, c2]):
            results.append(CheckResult("witness-realizability", "PASS",
                                       "both triples realized"))
        else:
            results.append(CheckResult(
                "witness-realizability", "INCONCLUSIVE",
                "witness triples not reached within caps"))

    # random single-pair compatibility property
    rng = _random.Random(20240809)
    rels = {r.name: r.arity for r in sid.relations} or {"r": 2}
    checked = failures = 0
    while checked < random_samples:
        def rand_structure(offset):
            interp = {}
            for rel, arity in rels.items():
                tuples = {tuple(offset + rng.randrange(4) for _ in range(arity))
                          for _ in range(rng.randint(0, 3))}
                if tuples:
                    interp[rel] = tuples
            return Structure(interp)
        s1, s2 = rand_structure(0), rand_structure(10)
        if s1.is_empty() or s2.is_empty():
            continue
        u1 = rng.choice(sorted(s1.support()))
        u2 = rng.choice(sorted(s2.support()))
        if color_of(s1, u1) & color_of(s2, u2):
            continue
        both = compose(s1, s2)
        if not is_compatible(Partition(both.support(), [(u1, u2)]), both):
            failures += 1
        checked += 1
    results.append(CheckResult(
        "single-pair-compatibility", "FAIL" if failures else "PASS",
        f"{checked} samples, {failures} failures"))

    comp_counts: dict[str, int] = {}
    for s in models:
        for part in maximal_connected_substructures(s):
            from .util import format_multiset
            from .structures import mcolabs
            key = format_multiset(mcolabs(part))
            comp_counts[key] = comp_counts.get(key, 0) + 1
    return CrosscheckReport(results, verdict, sampled_tw, comp_counts)
