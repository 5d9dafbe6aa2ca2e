import pytest
from hypothesis import given, settings, strategies as st

from ltleb.hfset import (
    EMPTY, HFBudgetError, HFError, as_natural, atom, atoms, big_union, cardinality,
    decode_list, decode_tuple, elements, empty, encode_list, encode_tuple, format_hf,
    fst, hfset, kpair, leq, lt, nat_plus, node_budget, pair, set_node_budget, snd,
    subset, the_unique, transitive_closure, von_neumann,
)

a, b = atom("a"), atom("b")
E = EMPTY


def S(*xs):
    return hfset(xs)


# -- naive oracles over a frozenset model -----------------------------------

def to_model(x):
    if x.is_atom:
        return x.atom
    return frozenset(to_model(e) for e in x.elems)


def model_tc(m):
    if isinstance(m, str):
        return frozenset()
    acc = set(m)
    for e in m:
        acc |= model_tc(e)
    return frozenset(acc)


hf_values = st.recursive(
    st.sampled_from([E, a, b]),
    lambda inner: st.lists(inner, max_size=3).map(hfset),
    max_leaves=10,
)
hf_sets = hf_values.filter(lambda x: not x.is_atom)


# -- examples ---------------------------------------------------------------

def test_empty():
    assert elements(empty()) == []
    assert empty() == empty()
    assert format_hf(empty()) == "{}"


def test_atoms():
    assert atoms(["a", "b"]) == S(a, b)
    assert atoms([]) == E
    assert a in atoms(["b", "a"]).elems


def test_big_union():
    assert big_union(S(S(E), S(S(E)))) == S(E, S(E))
    assert big_union(S(a, S(E))) == S(E)
    assert big_union(E) == E
    with pytest.raises(HFError):
        big_union(a)


def test_the_unique():
    assert the_unique(S(a)) == a
    assert the_unique(S(a, b)) == E
    assert the_unique(E) == E
    with pytest.raises(HFError):
        the_unique(a)


def test_pair():
    assert pair(E, S(E)) == S(E, S(E))
    assert pair(a, a) == S(a)
    assert pair(a, b) == S(a, b)


def test_transitive_closure():
    assert transitive_closure(E) == E
    assert transitive_closure(S(S(E))) == S(S(E), E)
    assert transitive_closure(S(a, S(a))) == S(a, S(a))


def test_order_examples():
    for s in [E, S(E), S(a, S(b)), von_neumann(4)]:
        assert leq(E, s)
    x = S(a, S(E))
    assert not lt(x, x)
    assert lt(von_neumann(2), von_neumann(3))


def test_tc_equal_distinct_sets_are_not_strictly_ordered():
    x, y = S(E, S(E)), S(S(E))
    assert x != y
    assert leq(x, y) and leq(y, x)
    assert not lt(x, y) and not lt(y, x)


def test_von_neumann():
    assert von_neumann(0) == E
    assert von_neumann(2) == S(E, S(E))
    assert as_natural(S(S(E))) is None
    assert as_natural(a) is None
    for n in range(8):
        assert as_natural(von_neumann(n)) == n
    assert format_hf(von_neumann(3)) == "3"


def test_tuples():
    xs = [E, S(E)]
    assert decode_tuple(encode_tuple(xs), 2) == xs
    assert encode_tuple([a, b]) == S(S(a), S(a, b))
    assert encode_tuple([]) == E
    assert encode_tuple([a]) == a
    assert decode_tuple(S(a, b), 2) is None
    assert fst(kpair(a, b)) == a and snd(kpair(a, b)) == b
    assert fst(kpair(a, a)) == a and snd(kpair(a, a)) == a
    assert fst(S(a, b)) == E


def test_lists():
    xs = [a, E, a]
    l = encode_list(xs)
    assert decode_list(l) == xs
    assert fst(l) == von_neumann(3)
    assert decode_list(encode_list([])) == []
    assert decode_list(S(a)) is None


def test_arith():
    assert cardinality(S(a, b, E)) == von_neumann(3)
    assert nat_plus(von_neumann(2), von_neumann(3)) == von_neumann(5)
    with pytest.raises(HFError):
        nat_plus(a, E)


def test_node_budget():
    old = node_budget()
    try:
        set_node_budget(5)
        with pytest.raises(HFBudgetError):
            _fresh_vn_chain(6)
    finally:
        set_node_budget(old)


def _fresh_vn_chain(n):
    # build ordinals without the module cache so the budget applies
    out = [E]
    for _ in range(n):
        out.append(hfset(out[-1].elems + (out[-1],)))
    return out


def test_format_nested():
    assert format_hf(S(a, S(E))) == "{a, 1}"
    assert format_hf(S(S(S(E)))) == "{{1}}"


# -- properties -------------------------------------------------------------

@given(hf_values, hf_values)
def test_canonical_equality(x, y):
    assert (x == y) == (to_model(x) == to_model(y))
    if x == y:
        assert x.key == y.key and hash(x) == hash(y)


@given(st.lists(hf_values, max_size=5))
def test_construction_order_irrelevant(xs):
    assert hfset(xs) == hfset(list(reversed(xs))) == hfset(xs + xs)


@given(hf_values, hf_values, hf_values)
def test_order_laws(x, y, z):
    assert leq(x, x)
    assert not lt(x, x)
    if leq(x, y) and leq(y, z):
        assert leq(x, z)
    if lt(x, y) and lt(y, z):
        assert lt(x, z)
    if lt(x, y):
        assert len(x.tc()) < len(y.tc())


@given(hf_values)
def test_tc_matches_model(x):
    assert frozenset(to_model(e) for e in x.tc()) == model_tc(to_model(x))


@given(hf_sets, hf_sets)
def test_leq_subsumes_subset_and_membership(x, y):
    if subset(x, y):
        assert leq(x, y)
    for e in y.elems:
        assert leq(e, y)


@given(hf_sets, hf_values, hf_values)
def test_ops_match_model(x, y, z):
    m = to_model(x)
    bu = frozenset().union(*(e for e in m if not isinstance(e, str)))
    assert to_model(big_union(x)) == bu
    assert to_model(pair(y, z)) == frozenset({to_model(y), to_model(z)})
    tu = to_model(the_unique(x))
    assert tu == (next(iter(m)) if len(m) == 1 else frozenset())


@given(st.lists(hf_values, max_size=4))
def test_tuple_and_list_roundtrip(xs):
    assert decode_tuple(encode_tuple(xs), len(xs)) == xs
    assert decode_list(encode_list(xs)) == xs
