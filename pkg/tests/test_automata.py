from itertools import permutations

import pytest

from slrtwb.automata import (INF, ONE, ResetContext, SigmaAutomaton, State,
                             Transition, automaton_to_sid,
                             charform_formula, choice_free_decompose,
                             eliminate_trivial_sccs, enumerate_runs,
                             find_reset, is_choice_free, lx, ly, profile,
                             run_transition_multiset, scc_graph,
                             sid_to_automaton, stage1_strip,
                             stage2_remove_nonpersistent_equalities,
                             stage3_annotate, stage3_remove_persistent,
                             stage3_split, trim_automaton, validate_reset,
                             wrap_one_transitions)
from slrtwb.oracle import (UnfoldingBudget, enumerate_canonical_models)
from slrtwb.parser import parse_sid
from slrtwb.structures import canonical_form, dedup_isomorphic, model_of_qpf
from slrtwb.syntax import Emp, Eq, RelAtom

SID_TA = """\
rel e/2
pred A/0 B/3
A <- exists y1 y2 y3 . B(y1,y2,y3)
B(x1,x2,x3) <- exists y4 . e(x1,x3) * e(x1,y4) * B(y4,x2,x3)
B(x1,x2,x3) <- e(x1,x3) * e(x1,x2) * e(x2,x3)
"""

RUNNING = """\
rel e/2
pred A/0 C1/3 C2/3
A <- exists y1 y2 y3 . C1(y1,y2,y3)
C1(x1,x2,x3) <- exists y4 . e(x1,y4) * e(x3,y4) * C1(y4,x2,x3)
C1(x1,x2,x3) <- exists y5 . e(x1,x2) * C2(x2,y5,x3)
C2(x1,x2,x3) <- exists y6 . e(x1,y6) * e(x3,y6) * C2(y6,x2,x3)
C2(x1,x2,x3) <- e(x1,x2)
"""


# -- helpers -----------------------------------------------------------------


def label_canon(label):
    """Canonical form of a label up to renaming of its y-variables."""
    from slrtwb.automata import var_info
    from slrtwb.syntax import atoms_vars, substitute
    ys = sorted({v for v in atoms_vars(label) if var_info(v)[0] == "y"})
    if len(ys) > 5:
        raise ValueError("label too wide for canonicalization")
    best = None
    for perm in permutations(range(1, len(ys) + 1)):
        sub = {v: ly(i) for v, i in zip(ys, perm)}
        ser = tuple(sorted(map(str, substitute(label, sub))))
        if best is None or ser < best:
            best = ser
    return best


def automata_equal(a: SigmaAutomaton, b: SigmaAutomaton) -> bool:
    """Equality up to renaming of states and label variables."""
    sa, sb = a.states(), b.states()
    if len(sa) != len(sb) or len(a.transitions) != len(b.transitions):
        return False
    for perm in permutations(sb):
        mapping = dict(zip(sa, perm))
        if mapping[a.initial] != b.initial:
            continue
        if any(s.arity != t.arity for s, t in mapping.items()):
            continue
        def key(t, m=None):
            src = m[t.source] if m else t.source
            tgts = tuple(m[x] for x in t.targets) if m else t.targets
            return (src, label_canon(t.label), tgts, t.lam)
        if sorted(map(str, (key(t, mapping) for t in a.transitions))) == \
           sorted(map(str, (key(t) for t in b.transitions))):
            return True
    return False


def letters_automaton():
    """The choice-free example automaton over plain letters, plus its
    non-choice-free extension (two extra transitions)."""
    q = {i: State(f"q{i}", 0) for i in range(6)}

    def letter(name):
        return (RelAtom(name, (ly(1),)),)

    base = [
        Transition(q[0], letter("a"), (q[0], q[1])),
        Transition(q[1], letter("b"), (q[1],)),
        Transition(q[1], letter("c"), ()),
        Transition(q[0], letter("b"), (q[2],)),
        Transition(q[2], letter("a"), (q[2], q[2])),
        Transition(q[2], letter("b"), (q[3],)),
        Transition(q[2], letter("b"), (q[4],)),
        Transition(q[3], letter("c"), ()),
        Transition(q[4], letter("c"), ()),
    ]
    red = [
        Transition(q[0], letter("b"), (q[5],)),
        Transition(q[5], letter("c"), ()),
    ]
    return q, base, red


# -- sid <-> automaton -------------------------------------------------------


def test_sid_to_automaton_example():
    sid = parse_sid(SID_TA)
    auto = sid_to_automaton(sid, "A")
    assert auto.initial.name == "q_A" and auto.initial.arity == 0
    t1, t2, t3 = auto.transitions
    assert t1.label == (Eq(ly(1), lx(1, 1)), Eq(ly(2), lx(1, 2)), Eq(ly(3), lx(1, 3)))
    assert t2.label == (
        RelAtom("e", (lx(0, 1), lx(0, 3))),
        RelAtom("e", (lx(0, 1), ly(1))),
        Eq(ly(1), lx(1, 1)), Eq(lx(0, 2), lx(1, 2)), Eq(lx(0, 3), lx(1, 3)),
    )
    assert t3.targets == ()
    assert len(t3.label) == 3


def test_single_emp_rule_roundtrip():
    sid = parse_sid("pred A/0\nA <- emp")
    auto = sid_to_automaton(sid, "A")
    assert auto.transitions[0].label == (Emp(),)
    back, root = automaton_to_sid(auto)
    assert back.rules[0].body == (Emp(),)


def test_automaton_models_match_sid_models():
    sid = parse_sid(SID_TA)
    auto = sid_to_automaton(sid, "A")
    runs, _ = enumerate_runs(auto, max_nodes=4)
    run_models = []
    for tree in runs:
        m = model_of_qpf(charform_formula(tree).atoms)
        if m:
            run_models.append(m[0])
    sid_models, _ = enumerate_canonical_models(
        sid, "A", UnfoldingBudget(max_steps=5, max_elements=8))
    run_forms = {canonical_form(s) for s in dedup_isomorphic(run_models)}
    sid_forms = {canonical_form(s) for s in sid_models if s.size() <= 5}
    assert {f for f in run_forms} >= sid_forms


def test_automaton_to_sid_roundtrip_models():
    sid = parse_sid(SID_TA)
    auto = sid_to_automaton(sid, "A")
    back, root = automaton_to_sid(auto)
    m1, _ = enumerate_canonical_models(sid, "A", UnfoldingBudget(4, 8))
    m2, _ = enumerate_canonical_models(back, root, UnfoldingBudget(4, 8))
    f1 = {canonical_form(s) for s in m1}
    f2 = {canonical_form(s) for s in m2}
    assert f1 == f2


# -- SCC analysis ------------------------------------------------------------


def test_scc_graph_letters():
    q, base, red = letters_automaton()
    auto = SigmaAutomaton(q[0], tuple(base + red))
    graph = scc_graph(auto)
    by_name = {next(iter(s)).name: i for i, s in enumerate(graph.sccs) if len(s) == 1}
    assert graph.is_linear(by_name["q0"])
    assert graph.is_linear(by_name["q1"])
    assert not graph.is_linear(by_name["q2"])
    assert graph.is_linear(by_name["q3"])
    assert graph.is_linear(by_name["q4"])
    assert graph.index_of[q[0]] == 0  # topological, root first


def test_scc_trivial_path():
    a, b, c = State("a", 0), State("b", 0), State("c", 0)
    auto = SigmaAutomaton(a, (
        Transition(a, (Emp(),), (b,)),
        Transition(b, (Emp(),), (c,)),
        Transition(c, (Emp(),), ()),
    ))
    graph = scc_graph(auto)
    assert len(graph.sccs) == 3
    assert all(graph.is_trivial(i, auto) for i in range(3))


# -- choice-free decomposition (criterion 4 content) -------------------------


def expected_decomposition():
    q, base, red = letters_automaton()
    a1 = SigmaAutomaton(q[0], tuple(
        Transition(t.source, t.label, t.targets,
                   ONE if i == 3 else INF)
        for i, t in enumerate(base)
    ))
    a2 = SigmaAutomaton(q[0], (
        Transition(q[0], base[0].label, (q[0], q[1]), INF),
        Transition(q[1], base[1].label, (q[1],), INF),
        Transition(q[1], base[2].label, (), INF),
        Transition(q[0], red[0].label, (q[5],), ONE),
        Transition(q[5], red[1].label, (), ONE),
    ))
    return a1, a2


def test_choice_free_decomposition_golden():
    q, base, red = letters_automaton()
    auto = SigmaAutomaton(q[0], tuple(base + red))
    parts = choice_free_decompose(auto)
    assert len(parts) == 2
    exp1, exp2 = expected_decomposition()
    assert any(automata_equal(p, exp1) for p in parts)
    assert any(automata_equal(p, exp2) for p in parts)
    for p in parts:
        ok, witness = is_choice_free(p)
        assert ok, witness


def test_is_choice_free_violation_witness():
    q, base, red = letters_automaton()
    labeled = [Transition(t.source, t.label, t.targets,
                          ONE if i == 3 else INF) for i, t in enumerate(base)]
    labeled += [Transition(red[0].source, red[0].label, red[0].targets, ONE),
                Transition(red[1].source, red[1].label, red[1].targets, ONE)]
    ok, witness = is_choice_free(SigmaAutomaton(q[0], tuple(labeled)))
    assert not ok
    assert "post" in witness or "branches" in witness


def test_choice_free_already():
    q, base, _ = letters_automaton()
    parts = choice_free_decompose(SigmaAutomaton(q[0], tuple(base)))
    assert len(parts) == 1
    exp1, _ = expected_decomposition()
    assert automata_equal(parts[0], exp1)


def test_decompose_path_automaton():
    a, b = State("a", 0), State("b", 0)
    auto = SigmaAutomaton(a, (
        Transition(a, (Emp(),), (a,)),
        Transition(a, (Emp(),), (b,)),
        Transition(b, (Emp(),), (b,)),
        Transition(b, (Emp(),), ()),
    ))
    parts = choice_free_decompose(auto)
    assert len(parts) == 1
    assert sorted(t.lam for t in parts[0].transitions) == [ONE, ONE, INF, INF]


def test_one_transitions_occur_once_in_runs():
    sid = parse_sid(RUNNING)
    auto = sid_to_automaton(sid, "A")
    auto = eliminate_trivial_sccs(auto)
    for part in choice_free_decompose(auto):
        runs, _ = enumerate_runs(part, max_nodes=7)
        assert runs
        ones = set(part.one_transitions())
        for tree in runs:
            used = run_transition_multiset(tree)
            for t in ones:
                assert used.count(t) == 1


# -- trivial SCC elimination -------------------------------------------------


def test_eliminate_trivial_keeps_root():
    sid = parse_sid(SID_TA)
    auto = sid_to_automaton(sid, "A")
    out = eliminate_trivial_sccs(auto)
    assert {s.name for s in out.states()} == {"q_A", "q_B"}
    assert len(out.transitions) == 3


def test_eliminate_trivial_inlines_chain():
    sid = parse_sid("""\
rel a/1 e/2
pred A/0 M/1 B/1
A <- exists y . M(y)
M(x1) <- exists z . e(x1,z) * B(z)
B(x1) <- exists y . a(x1) * e(x1,y) * B(y)
B(x1) <- a(x1)
""")
    auto = sid_to_automaton(sid, "A")
    out = eliminate_trivial_sccs(auto)
    assert {s.name for s in out.states()} == {"q_A", "q_B"}
    # language preserved on bounded models (generous steps, tight size cap)
    back, root = automaton_to_sid(out)
    m1, _ = enumerate_canonical_models(sid, "A", UnfoldingBudget(8, 6))
    m2, _ = enumerate_canonical_models(back, root, UnfoldingBudget(8, 6))
    assert {canonical_form(s) for s in m1} == {canonical_form(s) for s in m2}


# -- profiles (criterion 3 content) ------------------------------------------


def choice_free_running():
    sid = parse_sid(RUNNING)
    auto = eliminate_trivial_sccs(sid_to_automaton(sid, "A"))
    parts = choice_free_decompose(auto)
    assert len(parts) == 1
    return parts[0]


def test_profile_sid_ta():
    sid = parse_sid(SID_TA)
    auto = eliminate_trivial_sccs(sid_to_automaton(sid, "A"))
    parts = choice_free_decompose(auto)
    assert len(parts) == 1
    prof = profile(parts[0])
    by_name = {s.name: prof[s] for s in parts[0].states()}
    assert by_name["q_A"] == frozenset()
    assert by_name["q_B"] == frozenset({2, 3})


def test_profile_running_example():
    auto = stage1_strip(choice_free_running())
    prof = profile(auto)
    by_name = {s.name: prof[s] for s in auto.states()}
    assert by_name["q_C1"] == frozenset({2, 3})
    assert by_name["q_C2"] == frozenset({2, 3})
    assert by_name["q_A"] == frozenset()


def test_profile_no_incoming_inf_is_full():
    a, b = State("a", 0), State("b", 2)
    auto = SigmaAutomaton(a, (
        Transition(a, (Emp(),), (b,), ONE),
        Transition(b, (Emp(),), (), INF),
    ))
    assert profile(auto)[b] == frozenset({1, 2})


# -- stages (criterion 5 content) ---------------------------------------------


def test_stage1_strip_running():
    auto = choice_free_running()
    out = stage1_strip(auto)
    tau3 = [t for t in out.transitions
            if t.lam == ONE and t.source.name == "q_C1"][0]
    assert tau3.label == (Eq(lx(0, 2), lx(1, 1)), Eq(ly(1), lx(1, 2)),
                          Eq(lx(0, 3), lx(1, 3)))
    tau5 = [t for t in out.transitions
            if t.lam == ONE and t.source.name == "q_C2"][0]
    assert tau5.label == (Emp(),)
    tau2 = [t for t in out.transitions
            if t.lam == INF and t.source.name == "q_C1"][0]
    assert any(isinstance(a, RelAtom) for a in tau2.label)


def test_stage2_running():
    auto = stage2_remove_nonpersistent_equalities(stage1_strip(choice_free_running()))
    tau3 = [t for t in auto.transitions
            if t.lam == ONE and t.source.name == "q_C1"][0]
    assert label_canon(tau3.label) == label_canon(
        (Eq(ly(9), lx(1, 2)), Eq(lx(0, 3), lx(1, 3))))
    # equality x^e_2 = x^1_1 dropped; persistent ones kept


def test_stage3_annotation_running():
    auto = stage2_remove_nonpersistent_equalities(stage1_strip(choice_free_running()))
    annotated, m = stage3_annotate(auto)
    assert m == 3  # label variables of the two 1-transitions, renamed apart
    anns = {s.name: dict(s.ann) for s in annotated.states()}
    assert anns["q_A"] == {}
    assert set(anns["q_C1"]) == {2, 3}
    assert set(anns["q_C2"]) == {2, 3}
    # position 3 flows through the oo-equality x^e_3 = x^1_3, so both states
    # map it to the same label variable (this is what shares the fresh symbol)
    assert anns["q_C2"][3] == anns["q_C1"][3]
    assert anns["q_C2"][2] != anns["q_C1"][2]


def test_stage3_split_and_remove_running():
    auto = stage2_remove_nonpersistent_equalities(stage1_strip(choice_free_running()))
    annotated, _ = stage3_annotate(auto)
    splits = stage3_split(annotated)
    assert len(splits) == 1
    removed = stage3_remove_persistent(splits[0])
    ones = [t for t in removed.transitions if t.lam == ONE]
    assert all(t.label == (Emp(),) for t in ones)
    infs = [t for t in removed.transitions if t.lam == INF]
    assert len(infs) == 2
    # both recursive transitions use the same fresh unary symbol e_g
    unary = {a.rel for t in infs for a in t.label
             if isinstance(a, RelAtom) and len(a.args) == 1}
    assert len(unary) == 1
    name = unary.pop()
    assert name.startswith("e@")
    for t in infs:
        kinds = sorted(
            (a.rel, len(a.args)) for a in t.label if isinstance(a, RelAtom))
        assert kinds == [("e", 2), (name, 1)]
        assert sum(1 for a in t.label if isinstance(a, Eq)) == 1
    # arities dropped from 3 to 1
    assert {s.arity for s in removed.states()} == {0, 1}


def test_wrap_running():
    auto = stage2_remove_nonpersistent_equalities(stage1_strip(choice_free_running()))
    annotated, _ = stage3_annotate(auto)
    removed = stage3_remove_persistent(stage3_split(annotated)[0])
    wrapped = wrap_one_transitions(removed)
    ones = sorted((t for t in wrapped.transitions if t.lam == ONE),
                  key=lambda t: t.source.name)
    # tau1 (from q_A) and tau3 (from q_C1) gain e_g(x1_1); tau5 stays emp
    tau1 = [t for t in ones if t.source.arity == 0][0]
    assert len(tau1.label) == 1
    atom = tau1.label[0]
    assert isinstance(atom, RelAtom) and atom.rel.startswith("e@")
    assert atom.args == (lx(1, 1),)
    tau3 = [t for t in ones if t.source.arity == 1 and t.targets][0]
    assert tau3.label == tau1.label
    tau5 = [t for t in ones if not t.targets][0]
    assert tau5.label == (Emp(),)


# -- resets -------------------------------------------------------------------


def test_reset_sid_ta():
    sid = parse_sid(SID_TA)
    auto = eliminate_trivial_sccs(sid_to_automaton(sid, "A"))
    part = choice_free_decompose(auto)[0]
    prof = profile(part)
    qb = [s for s in part.states() if s.name == "q_B"][0]
    ctx = find_reset(part, qb, prof)
    assert validate_reset(ctx, prof)
    # iterating the recursive transition twice also forgets x^e_1; the
    # minimal context found by the search already satisfies both conditions
    recursive = [t for t in part.from_state(qb) if t.targets][0]
    twice = ResetContext(qb, (ctx.steps[0],) * 2)
    assert twice.steps[0].transition == recursive
    assert validate_reset(twice, prof)


def test_reset_length_one_without_equalities():
    a, b = State("a", 0), State("b", 1)
    auto = SigmaAutomaton(a, (
        Transition(a, (Emp(),), (b,), ONE),
        Transition(b, (RelAtom("e", (lx(0, 1), ly(1))),), (b,), INF),
        Transition(b, (Emp(),), (), INF),
    ))
    prof = profile(auto)
    assert prof[b] == frozenset()
    ctx = find_reset(auto, b, prof)
    assert len(ctx.steps) == 1
    assert validate_reset(ctx, prof)


def test_reset_running_example_atoms():
    auto = stage2_remove_nonpersistent_equalities(stage1_strip(choice_free_running()))
    annotated, _ = stage3_annotate(auto)
    removed = stage3_remove_persistent(stage3_split(annotated)[0])
    prof = profile(removed)
    from slrtwb.automata import _reset_atoms
    for s in removed.states():
        if s.arity != 1 or s.name.startswith("q_A"):
            continue
        ctx = find_reset(removed, s, prof)
        atoms = _reset_atoms(ctx, "front")
        assert len(atoms) == 1
        rel, idxs = atoms[0]
        assert rel.startswith("e@") and idxs == (1,)
