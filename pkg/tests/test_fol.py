import random

import pytest
from hypothesis import given, settings, strategies as st

from gen import rand_formula, rand_spec, seeded
from ltleb.fixtures import fixture_names, fixture_text
from ltleb.fol import (
    EvalError, IndeterminateError, check_dlf, check_leadsto, check_var_c, check_var_d,
    eval_formula, eval_term, next_formula, recheck_witness,
)
from ltleb.hfset import EMPTY, atom, hfset, von_neumann as vn
from ltleb.machine import build_graph, elaborate, load_machine, trivial_extension
from ltleb.speclang import parse_formula, parse_term
from ltleb.syntax import (
    And, Call, Eq, Exists, FalseF, Forall, Implies, Le, Lit, Lt, Member, Not, Or, SetOf,
    TrueF, Var, subst,
)

F, T = parse_formula, parse_term


@pytest.fixture(scope="module")
def counter():
    return load_machine(fixture_text("counter"))


def test_eval_term_examples():
    assert eval_term(T("Pair({}, {})"), {}) == hfset([EMPTY])
    a = atom("a")
    assert eval_term(Var("v"), {"v": hfset([a])}) == hfset([a])
    assert eval_term(T("BigUnion(Pair(1, {1}))"), {}) == hfset([EMPTY, vn(1)])
    with pytest.raises(EvalError):
        eval_term(Var("w"), {})
    with pytest.raises(EvalError):
        eval_term(Call("BigUnion", (Lit(a),)), {})


def test_list_builtins():
    l = eval_term(T("append(append(nil, 1), 2)"), {})
    assert eval_term(T("len(l)"), {"l": l}) == vn(2)
    assert eval_term(T("head(l)"), {"l": l}) == vn(1)
    assert eval_term(T("head(tail(l))"), {"l": l}) == vn(2)
    assert eval_term(T("len(tail(tail(l)))"), {"l": l}) == vn(0)
    assert eval_term(T("card({a, b, 1})"), {"a": atom("a"), "b": atom("b")}) == vn(3)
    assert eval_term(T("tuple(1, 2)"), {}) == eval_term(T("Pair({1}, {1, 2})"), {})


def test_eval_formula_examples():
    assert eval_formula(F("forall x in {} . false"), {})
    assert eval_formula(F("exists x in {{}} . x = {}"), {})
    assert eval_formula(F("n < 3"), {"n": vn(2)})
    with pytest.raises(EvalError):
        eval_formula(Forall("x", Lit(atom("a")), TrueF()), {})


def test_next_formula(counter):
    g = build_graph(counter)
    n3 = g.nodes.index((vn(3),))
    assert eval_formula(next_formula(counter, F("n < 3")), g.env(n3))
    nt = next_formula(counter, TrueF())
    assert all(eval_formula(nt, g.env(i)) for i in range(len(g.nodes)))
    nf = next_formula(counter, FalseF())
    assert not eval_formula(nf, g.env(n3))


@pytest.mark.parametrize("name", fixture_names())
def test_next_formula_law(name):
    m = load_machine(fixture_text(name))
    g = build_graph(m)
    for phi in [phi for _, phi in m.formulas]:
        nphi = next_formula(m, phi)
        for i in range(len(g.nodes)):
            want = all(g.holds(j, phi) for j in g.succ(i))
            assert eval_formula(nphi, g.env(i), m.atom_set) == want


def test_leadsto(counter):
    g = build_graph(counter)
    assert check_leadsto(g, F("n != 0"), TrueF()).verdict
    # from n = k only values below k are reached
    for k in range(11):
        assert check_leadsto(g, F(f"n = {k}"), F(f"n < {k}")).verdict
    r = check_leadsto(g, TrueF(), FalseF())
    assert not r.verdict and r.witness.successor is not None
    assert recheck_witness(g, r, TrueF(), FalseF())


def test_dlf(counter):
    g = build_graph(counter)
    assert check_dlf(g, FalseF()).verdict
    r = check_dlf(g, F("n = 0"))
    assert not r.verdict and g.nodes[r.witness.state] == (vn(0),)
    assert recheck_witness(g, r, F("n = 0"))
    gx = build_graph(trivial_extension(counter))
    for phi in [TrueF(), F("n = 0"), F("n != 5")]:
        assert check_dlf(gx, phi).verdict


def test_var_c(counter):
    g = build_graph(counter)
    assert check_var_c(g, T("n"), F("n != 0")).verdict
    r = check_var_c(g, T("{}"), F("n != 0"))
    assert not r.verdict and r.witness.successor is None
    assert recheck_witness(g, r, T("{}"), F("n != 0"))
    assert check_var_c(g, T("{}"), FalseF()).verdict


def test_var_d(counter):
    stutter = load_machine("machine M\nvariables n\ninit n := 2 end\nevent e then skip end")
    g = build_graph(stutter)
    assert check_var_d(g, T("{}"), TrueF()).verdict
    gx = build_graph(trivial_extension(counter))
    assert check_var_d(gx, T("n"), F("n = 0")).verdict
    up = load_machine("machine M\nvariables n\ninit n := 0 end\n"
                      "event e where n = 0 then n := 1 end\nevent f where n = 1 then n := 0 end")
    gu = build_graph(up)
    r = check_var_d(gu, T("n"), FalseF())
    assert not r.verdict
    assert recheck_witness(gu, r, T("n"), FalseF())


def test_truncated_is_indeterminate(counter):
    g = build_graph(counter, 2)
    for fn, args in [(check_leadsto, (TrueF(), TrueF())), (check_dlf, (TrueF(),)),
                     (check_var_c, (T("n"), TrueF())), (check_var_d, (T("n"), TrueF()))]:
        with pytest.raises(IndeterminateError):
            fn(g, *args)


# -- oracle: naive substitution-based evaluator ------------------------------

def _naive(f, binding):
    """Evaluate by substituting literals for variables, then reducing closed formulas."""
    closed = subst(f, {k: Lit(v) for k, v in binding.items()})
    return _closed(closed)


def _closed(f):
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Not):
        return not _closed(f.body)
    if isinstance(f, And):
        return _closed(f.left) and _closed(f.right)
    if isinstance(f, Or):
        return _closed(f.left) or _closed(f.right)
    if isinstance(f, Implies):
        return not _closed(f.left) or _closed(f.right)
    if isinstance(f, (Forall, Exists)):
        bound = eval_term(f.bound, {})
        if bound.is_atom:
            raise EvalError("atom bound")
        vals = [_closed(subst(f.body, {f.var: Lit(e)})) for e in bound.elems]
        return all(vals) if isinstance(f, Forall) else any(vals)
    l, r = eval_term(f.left, {}), eval_term(f.right, {})
    if isinstance(f, Member):
        return (not r.is_atom) and l in r.elems
    if isinstance(f, Eq):
        return l == r
    if isinstance(f, Lt):
        return l.tc() < r.tc()
    if isinstance(f, Le):
        return l.tc() <= r.tc()
    raise TypeError(f)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_eval_matches_naive(seed):
    rng = seeded(seed)
    f = rand_formula(rng, ["x", "y"], 3)
    b = {"x": hfset([vn(rng.randrange(3))]), "y": vn(rng.randrange(4))}
    try:
        want = _naive(f, b)
    except EvalError:
        with pytest.raises(EvalError):
            eval_formula(f, b)
        return
    except Exception:
        # naive evaluator hit an operator error (e.g. atom argument)
        with pytest.raises(Exception):
            eval_formula(f, b)
        return
    assert eval_formula(f, b) == want


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**9))
def test_leadsto_trace_sampling(seed):
    rng = seeded(seed)
    m = elaborate(rand_spec(rng))
    g = build_graph(m)
    phis = [phi for phi in [F("v0 = 0"), F("v0 != 1"), F("v0 <= 1")]]
    for p1 in phis:
        for p2 in phis:
            if not check_leadsto(g, p1, p2).verdict:
                continue
            for _ in range(5):
                i = rng.choice(g.initial)
                for _ in range(8):
                    nxt = g.succ(i)
                    if not nxt:
                        break
                    j = rng.choice(nxt)
                    if g.holds(i, p1):
                        assert g.holds(j, p2)
                    i = j
