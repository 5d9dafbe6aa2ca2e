import pytest
from hypothesis import given, settings, strategies as st

from gen import ATOMS, rand_formula, rand_spec, rand_temporal, seeded
from ltleb.fixtures import fixture_text
from ltleb.hfset import von_neumann
from ltleb.speclang import (
    FRAGMENT, ParseError, parse_formula, parse_formula_file, parse_machine,
    parse_temporal, print_formula, print_machine, print_temporal, tokenize,
)
from ltleb.syntax import (
    AlwaysEventually, Assign, Eq, EventuallyAlways, Lit, Not, Progress, State, Var,
)


def diag(text, fn=parse_machine):
    with pytest.raises(ParseError) as e:
        fn(text)
    assert e.value.diagnostics
    return e.value.diagnostics[0]


def test_counter_fixture():
    spec = parse_machine(fixture_text("counter"))
    assert spec.variables == ("n",)
    assert [e.name for e in spec.events] == ["dec", "jump"]
    assert len(spec.init) == 1
    assert dict(spec.formulas)["zero"] == Eq(Var("n"), Lit(von_neumann(0)))


def test_empty_input():
    d = diag("")
    assert "no machine declared" in d.message
    assert "no machine declared" in diag("  // only a comment\n").message


def test_undeclared_variable():
    src = "machine M\nvariables n\ninit n := 0 end\nevent e where m = 0 then n := 1 end\n"
    d = diag(src)
    assert "'m'" in d.message and (d.line, d.col) == (4, 15)


def test_other_diagnostics():
    base = "machine M\nvariables n\ninit n := 0 end\n"
    assert "assigned twice" in diag(base + "event e then n := 1; n := 2 end").message
    assert "already declared" in diag("machine M\nvariables n, n\ninit n := 0 end").message
    assert "not initialised" in diag("machine M\nvariables n, m\ninit n := 0 end").message
    assert "domain" in diag(base + "event e any x where x = 0 then n := x end").message
    assert "domain" in diag(base + "event e then n :| n' = 0 end").message
    # unbounded quantifier
    assert diag(base + "event e where forall x . x = 0 then skip end")
    # init may not read the before-state
    assert "'n'" in diag("machine M\nvariables n\ninit n := n end").message
    # primed variables only inside actions
    assert "n'" in diag(base + "event e where n' = 0 then skip end").message


def test_diagnostics_deterministic():
    src = "machine M\nvariables n\ninit n := 0 end\nevent e where m = 0 then skip end"
    assert diag(src) == diag(src)


def test_assignment_forms_roundtrip():
    src = """machine M
atoms a, b
constants S = {a, b}
variables x, y, z
init
  x := a;
  y :in S;
  z :| z' in S & z' != x' from S
end
event e
  any p from S
  where p != x
then
  x := p;
  y :in {p, x};
  z :| z' = p from S
end
"""
    spec = parse_machine(src)
    kinds = [a.kind for a in spec.events[0].actions]
    assert kinds == [":=", ":in", ":|"]
    assert parse_machine(print_machine(spec)) == spec


def test_counter_roundtrip():
    spec = parse_machine(fixture_text("counter"))
    assert parse_machine(print_machine(spec)) == spec


def test_temporal_shapes():
    f = parse_temporal("[] (phi = 0 -> <> psi = 0)")
    assert isinstance(f, Progress) and isinstance(f.body, State)
    assert isinstance(parse_temporal("<> [] phi = 0"), EventuallyAlways)
    assert isinstance(parse_temporal("[] <> phi = 0"), AlwaysEventually)
    f = parse_temporal("[] <> phi = 0")
    assert parse_temporal(print_temporal(f)) == f


@pytest.mark.parametrize("text", [
    "<> x = 0",
    "x = 0 U y = 0",
    "[] (x = 0) & [] (y = 0)",
    "([] (x = 0)) | ([] (y = 0))",
    "[] (x = 0 -> <> <> y = 0)",
    "[] (x = 0) -> [] (y = 0)",
])
def test_fragment_rejections(text):
    d = diag(text, parse_temporal)
    assert FRAGMENT in d.message


def test_named_formulas_in_temporal():
    spec = parse_machine(fixture_text("counter"))
    f = parse_temporal("[] (n = 2 -> <> zero)", spec)
    assert f == Progress(Eq(Var("n"), Lit(von_neumann(2))), State(Eq(Var("n"), Lit(von_neumann(0)))))
    with pytest.raises(ParseError):
        parse_temporal("[] <> (m = 0)", spec)


def test_formula_file():
    spec = parse_machine(fixture_text("counter"))
    got = parse_formula_file("// comment\nlive : [] <> zero\n\nsafe : [] (n <= 10)\n", spec)
    assert [n for n, _ in got] == ["live", "safe"]
    with pytest.raises(ParseError) as e:
        parse_formula_file("bad : <> zero\n", spec)
    assert e.value.diagnostics[0].line == 1


def test_printer_precedence():
    f = parse_formula("(x = 0 -> y = 0) -> z = 0")
    assert print_formula(f) == "(x = {} -> y = {}) -> z = {}"
    f = parse_formula("x = 0 -> y = 0 -> z = 0")
    assert print_formula(f) == "x = {} -> y = {} -> z = {}"
    f = parse_formula("!(x = 0 & y = 0) | (exists q in x . q = 0)")
    assert parse_formula(print_formula(f)) == f
    assert parse_formula("x != 0") == Not(Eq(Var("x"), Lit(von_neumann(0))))


def test_lexer_positions():
    toks = tokenize("a :in b\n  [] <>")
    assert [(t.text, t.line, t.col) for t in toks[:-1]] == [
        ("a", 1, 1), (":in", 1, 3), ("b", 1, 7), ("[]", 2, 3), ("<>", 2, 6)]


# -- property: round trip -----------------------------------------------------

@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9))
def test_machine_roundtrip_property(seed):
    spec = rand_spec(seeded(seed), syntax_only=True)
    assert parse_machine(print_machine(spec)) == spec


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9))
def test_temporal_roundtrip_property(seed):
    rng = seeded(seed)
    states = [rand_formula(rng, ["x", "y"], 2, atoms=()) for _ in range(3)]
    f = rand_temporal(rng, states, 3)
    assert parse_temporal(print_temporal(f)) == f


# -- property: fragment gate vs a reference recognizer ----------------------

def _ref_accepts(text):
    """Position-set recognizer for the fragment grammar over lexer tokens.

    T ::= '[]' '<>' T | '<>' '[]' T | '[]' '(' S '->' '<>' T ')' | '[]' T | '(' T ')' | S
    S ::= I ;  I ::= D ('->' I)? ;  D ::= C ('|' C)* ;  C ::= U ('&' U)*
    U ::= '!' U | 'true' | 'false' | '(' S ')' | Q | R
    Q ::= ('forall'|'exists') id 'in' id '.' S ;  R ::= id ('='|'!='|'in'|'<'|'<=') id
    """
    try:
        toks = [t.text for t in tokenize(text)][:-1]
    except ParseError:
        return False
    toks = " ".join(toks).replace("{ }", "0").split()  # the empty-set literal is an id
    n = len(toks)

    def tok(i, s):
        return i < n and toks[i] == s

    def is_id(i):
        return i < n and (toks[i].isidentifier() or toks[i].isdigit()) and toks[i] not in (
            "forall", "exists", "in", "true", "false")

    from functools import lru_cache

    @lru_cache(None)
    def T(i):
        out = set()
        if tok(i, "[]") and tok(i + 1, "<>"):
            out |= T(i + 2)
        if tok(i, "<>") and tok(i + 1, "[]"):
            out |= T(i + 2)
        if tok(i, "[]") and tok(i + 1, "("):
            for j in S(i + 2):
                if tok(j, "->") and tok(j + 1, "<>"):
                    out |= {k + 1 for k in T(j + 2) if tok(k, ")")}
        if tok(i, "[]"):
            out |= T(i + 1)
        if tok(i, "("):
            out |= {k + 1 for k in T(i + 1) if tok(k, ")")}
        return frozenset(out | S(i))

    @lru_cache(None)
    def S(i):
        out = set()
        for j in D(i):
            out.add(j)
            if tok(j, "->"):
                out |= S(j + 1)
        return frozenset(out)

    @lru_cache(None)
    def D(i):
        out, todo = set(), set(C(i))
        while todo:
            j = todo.pop()
            if j in out:
                continue
            out.add(j)
            if tok(j, "|"):
                todo |= C(j + 1)
        return frozenset(out)

    @lru_cache(None)
    def C(i):
        out, todo = set(), set(U(i))
        while todo:
            j = todo.pop()
            if j in out:
                continue
            out.add(j)
            if tok(j, "&"):
                todo |= U(j + 1)
        return frozenset(out)

    @lru_cache(None)
    def U(i):
        out = set()
        if tok(i, "!"):
            out |= U(i + 1)
        if tok(i, "true") or tok(i, "false"):
            out.add(i + 1)
        if tok(i, "("):
            out |= {k + 1 for k in S(i + 1) if tok(k, ")")}
        if (tok(i, "forall") or tok(i, "exists")) and is_id(i + 1) and tok(i + 2, "in") \
                and is_id(i + 3) and tok(i + 4, "."):
            out |= S(i + 5)
        if is_id(i) and any(tok(i + 1, op) for op in ("=", "!=", "in", "<", "<=")) and is_id(i + 2):
            out.add(i + 3)
        return frozenset(out)

    return n in T(0)


_PIECES = ["[]", "<>", "(", ")", "->", "&", "|", "!", "x = 0", "y in z", "true",
           "forall q in x .", "U"]


_STATES = ["x = 0", "y in z", "x < y", "!(x <= 1)", "x != y & true",
           "forall q in x . q = y", "x = 0 -> y = 1 | false"]


def _rand_text(rng):
    if rng.random() < 0.5:
        states = [parse_formula(rng.choice(_STATES)) for _ in range(2)]
        s = print_temporal(rand_temporal(rng, states, 2))
        toks = s.split(" ")
        for _ in range(rng.randrange(3)):
            k = rng.randrange(len(toks) + 1)
            if rng.random() < 0.5 and toks:
                del toks[min(k, len(toks) - 1)]
            else:
                toks.insert(k, rng.choice(_PIECES))
        return " ".join(toks)
    return " ".join(rng.choice(_PIECES) for _ in range(rng.randrange(1, 9)))


@settings(max_examples=400, deadline=None)
@given(st.integers(0, 10**9))
def test_fragment_gate_matches_reference(seed):
    text = _rand_text(seeded(seed))
    try:
        parse_temporal(text)
        ok = True
    except ParseError:
        ok = False
    assert ok == _ref_accepts(text), text
