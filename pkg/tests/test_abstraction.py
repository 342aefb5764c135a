import pytest

from slrtwb.abstraction import (color_of_qpf, fixpoint_triples, make_triple,
                                rgb_condition_check,
                                single_pair_fusion_closure, third_components,
                                triple_compose, triple_project)
from slrtwb.errors import ColorClash
from slrtwb.parser import parse_sid
from slrtwb.syntax import RelAtom
from slrtwb.util import mset, sub_multisets_upto

A = frozenset({"a"})
B = frozenset({"b"})
AB = frozenset({"a", "b"})
E = frozenset()


def test_triple_compose_unit():
    t = make_triple({"x": A}, [A, B])
    unit = make_triple({}, [])
    out = triple_compose(t, unit, 3)
    assert out == {make_triple({"x": A}, sub) for sub in sub_multisets_upto(mset([A, B]), 3)}


def test_triple_compose_merges_disjoint():
    t1 = make_triple({"x": A}, [])
    t2 = make_triple({"x": B}, [])
    out = triple_compose(t1, t2, 3)
    assert out == {make_triple({"x": AB}, [])}
    with pytest.raises(ColorClash):
        triple_compose(t1, t1, 3)


def test_triple_project():
    t = make_triple({"x": A, "y": B}, [])
    out = triple_project(t, {"x"}, 1)
    assert {p.m for p in out} == {(), mset([B])}
    out = triple_project(t, {"x", "y"}, 3)
    assert out == {t}  # only sub-multisets of the (empty) multiset


def test_color_of_qpf():
    t = color_of_qpf((RelAtom("a", ("x",)), RelAtom("e", ("x", "y"))))
    assert t.as_dict() == {"x": A, "y": E}
    t = color_of_qpf((RelAtom("e", ("x", "x")),))
    assert t.as_dict() == {"x": frozenset({"e"})}
    assert color_of_qpf(()) == make_triple({}, [])


def test_fixpoint_single_rule():
    sid = parse_sid("rel a/1\npred P/0\nP <- exists y . a(y)")
    pools = fixpoint_triples(sid, 3)
    ms = third_components(pools["P"])
    assert mset([A]) in ms and () in ms


def test_fixpoint_chain_multisets():
    sid = parse_sid("""\
rel a/1 e/2
pred P/0 B/1
P <- exists y . B(y)
B(x1) <- exists y . a(x1) * e(x1,y) * B(y)
B(x1) <- a(x1)
""")
    pools = fixpoint_triples(sid, 3)
    ms = third_components(pools["P"])
    assert mset([A, A, A]) in ms
    assert all(set(m) <= {A} for m in ms)
    # parameter colors recorded in the first two components
    b_colors = {colors for colors, _ in pools["B"]}
    assert (A,) in b_colors


def test_closure_spec_examples():
    # fusing two one-element structures yields one element again
    closure = single_pair_fusion_closure(3, {mset([E])})
    assert closure == {(), mset([E])}
    # fusing blank-colored elements of two-element structures pumps the count
    closure = single_pair_fusion_closure(3, {mset([E, E])})
    assert {(), mset([E]), mset([E, E]), mset([E, E, E])} <= closure
    # from one a-b edge: the merged color appears, a never duplicates
    closure = single_pair_fusion_closure(3, {mset([A, B])})
    assert mset([AB, B, A]) in closure
    assert mset([A, A, A]) not in closure
    assert mset([AB, AB, AB]) in closure
    assert single_pair_fusion_closure(3, set()) == set()


def test_closure_is_closure_operator():
    base = {mset([A, B]), mset([A]), mset([B]), ()}
    closure = single_pair_fusion_closure(3, base)
    assert base <= closure  # extensive
    assert single_pair_fusion_closure(3, closure) == closure  # idempotent
    smaller = single_pair_fusion_closure(3, {mset([A, B])})
    assert smaller <= closure  # monotone
    # downward closed (the base here is downward closed)
    for m in closure:
        assert sub_multisets_upto(m, 3) <= closure


def test_rgb_condition():
    bad = {mset([A, A, A]), mset([B, B, B])}
    ok, witness = rgb_condition_check(bad)
    assert not ok and set(witness) == {A, B}
    good = {mset([AB, AB, AB]), mset([A, B])}
    assert rgb_condition_check(good) == (True, None)
    assert rgb_condition_check(set()) == (True, None)
    # a single all-blank triple conflicts with itself
    ok, witness = rgb_condition_check({mset([E, E, E])})
    assert not ok and witness == (E, E)
