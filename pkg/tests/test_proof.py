import json

import pytest
from hypothesis import given, settings, strategies as st

from gen import all_temporal, rand_spec, rand_states, rand_temporal, seeded
from ltleb.fixtures import fixture_names, fixture_text
from ltleb.machine import build_graph, elaborate, load_machine, trivial_extension
from ltleb.oracle import FAILS, HOLDS, holds_bruteforce
from ltleb.proof import (
    EXTENDED, ORIGINAL, Context, Phi3Hint, ProofFailure, ProofHints, ProofTree,
    RuleNotApplicable, VariantHint, apply_CONV, apply_DIV, apply_INV1, apply_INV2, apply_LIVE,
    apply_modal, apply_PERS, apply_PROG, check_proof, format_tree, load_hints, proof_from_json,
    proof_to_json, prove, prog_invariant, synthesize_phi3,
)
from ltleb.speclang import parse_formula, parse_temporal, parse_term
from ltleb.syntax import FALSE, TRUE, Always, AlwaysEventually, State, neg

F = parse_formula

SMALL = """
machine Small
constants Nat4 = 4
variables n
init
  n := 3
end
event dec
  where n != 0
then
  n :| n' < n from Nat4
end
"""


def fixture(name):
    return load_machine(fixture_text(name))


@pytest.fixture(scope="module")
def counter():
    return fixture("counter")


def hint_n(m):
    return ProofHints([VariantHint(parse_term("n", m))])


# -- CONV / DIV -----------------------------------------------------------------

def test_conv_counter(counter):
    t = apply_CONV(counter, parse_term("n"), F("n != 0"))
    assert t.conclusion.kind == "conv" and t.rule == "CONV"
    assert [p.rule for p in t.premises] == ["VAR_C", "DLF"]
    assert all(p.evidence.verdict for p in t.premises)


def test_conv_empty_variant_not_applicable(counter):
    with pytest.raises(RuleNotApplicable) as e:
        apply_CONV(counter, parse_term("{}"), F("n != 0"))
    assert e.value.report.kind == "var_c" and not e.value.report.verdict


def test_conv_false_is_vacuous(counter):
    assert apply_CONV(counter, parse_term("{}"), FALSE).rule == "CONV"


def test_div_extended_counter(counter):
    ctx = Context(counter)
    assert apply_DIV(ctx, parse_term("n"), F("n = 0"), EXTENDED).conclusion.kind == "div"


def test_div_increasing_variant_not_applicable(counter):
    # 11 - n grows as the counter goes down
    with pytest.raises(RuleNotApplicable):
        apply_DIV(counter, parse_term("card(diff(Nat10, n))", counter), F("n = 0"))


def test_div_true_needs_only_non_increase(counter):
    ctx = Context(counter)
    assert apply_DIV(ctx, parse_term("n"), TRUE, EXTENDED).rule == "DIV"


# -- INV1 / INV2 / LIVE / PROG / PERS -----------------------------------------------

def test_inv1(counter):
    t = apply_INV1(counter, F("n <= 10"))
    assert t.conclusion.formula == Always(State(F("n <= 10")))


def test_inv1_violated_by_init(counter):
    with pytest.raises(RuleNotApplicable) as e:
        apply_INV1(counter, F("n <= 3"))
    w = e.value.report.witness
    assert e.value.report.kind == "init" and w is not None


def test_inv2():
    m = load_machine(SMALL)
    box = apply_INV1(m, F("n <= 3"))
    t = apply_INV2(m, box, F("n <= 10"))
    assert t.rule == "INV2" and t.premises[0].rule == "VALID"
    with pytest.raises(RuleNotApplicable):
        apply_INV2(m, box, F("n <= 2"))


def test_live(counter):
    ctx = Context(counter)
    conv = apply_CONV(ctx, parse_term("n"), F("n != 0"), EXTENDED)
    t = apply_LIVE(ctx, F("n = 0"), conv)
    assert t.conclusion.formula == AlwaysEventually(State(F("n = 0")))
    with pytest.raises(RuleNotApplicable):
        apply_LIVE(ctx, F("n = 5"), conv)
    vac = apply_CONV(ctx, parse_term("{}"), FALSE, EXTENDED)
    assert apply_LIVE(ctx, TRUE, vac).conclusion.formula == AlwaysEventually(State(TRUE))


def test_prog_counter(counter):
    ctx = Context(counter)
    p1, p2, p3 = F("n = 2"), F("n = 0"), F("n != 0")
    d = apply_DIV(ctx, parse_term("n"), neg(p3), EXTENDED)
    inv = apply_INV1(ctx, prog_invariant(p1, p2, p3), EXTENDED)
    t = apply_PROG(ctx, p1, p2, p3, d, inv)
    assert t.rule == "PROG" and [p.rule for p in t.premises] == ["DIV", "LEADSTO", "INV1"]
    assert check_proof(counter, apply_modal(ctx, "EXT", t)).ok


def test_prog_false_phi3_fails_third_antecedent(counter):
    with pytest.raises(RuleNotApplicable) as e:
        apply_INV1(Context(counter), prog_invariant(F("n = 2"), F("n = 0"), FALSE), EXTENDED)
    assert e.value.report.kind == "leadsto"


def test_prog_needs_deadlock_freedom(counter):
    # the unextended counter deadlocks at 0, where traces end without reaching phi2
    p1, p2, p3 = F("n = 0"), F("n = 5"), F("n = 0")
    d = apply_DIV(counter, parse_term("{}"), neg(p3))
    inv = apply_INV1(counter, prog_invariant(p1, p2, p3))
    with pytest.raises(RuleNotApplicable, match="deadlock"):
        apply_PROG(counter, p1, p2, p3, d, inv)


def test_vacuous_progress_uses_box_or(counter):
    t = prove(counter, parse_temporal("[] (false -> <> (n = 5))", counter), hint_n(counter))
    assert isinstance(t, ProofTree) and "BOX_OR" in t.rules


def test_pers(counter):
    ctx = Context(counter)
    d = apply_DIV(ctx, parse_term("n"), F("n = 0"), EXTENDED)
    assert apply_PERS(ctx, F("n = 0"), d).rule == "PERS"
    # the unextended counter only deadlocks in n = 0, so dlf(n != 0) holds there too
    d0 = apply_DIV(counter, parse_term("n"), F("n = 0"))
    assert apply_PERS(counter, F("n = 0"), d0).conclusion.machine == ORIGINAL
    dt = apply_DIV(ctx, parse_term("n"), TRUE, EXTENDED)
    assert apply_PERS(ctx, TRUE, dt).rule == "PERS"


# -- modal rules ---------------------------------------------------------------

def test_box(counter):
    t = apply_modal(counter, "BOX", apply_INV1(counter, F("n <= 10")))
    assert t.conclusion.formula == Always(Always(State(F("n <= 10"))))


def test_box_or():
    m = load_machine(SMALL)
    psi = parse_temporal("[] <> (n = 1)", m)
    t = apply_modal(m, "BOX_OR", apply_INV1(m, F("n != 5")), psi=psi)
    assert print_t(t) == "[] (n = 5 -> <> ([] <> (n = 1)))"


def print_t(t):
    from ltleb.speclang import print_temporal
    return print_temporal(t.conclusion.formula)


def test_ext(counter):
    t = prove(counter, parse_temporal("[] <> (n = 0)", counter), hint_n(counter))
    assert t.rule == "EXT" and t.conclusion.machine == ORIGINAL
    assert t.premises[0].conclusion.machine == EXTENDED
    with pytest.raises(RuleNotApplicable):
        apply_modal(counter, "EXT", apply_INV1(counter, F("n <= 10")))


def test_modal_schema_mismatch(counter):
    with pytest.raises(RuleNotApplicable):
        apply_modal(counter, "BOX_DIA_2", apply_INV1(counter, F("n <= 10")))


# -- prove ---------------------------------------------------------------------

def test_prove_conv_live(counter):
    t = prove(counter, parse_temporal("[] <> (n = 0)", counter), hint_n(counter))
    assert t.rules == ["EXT", "LIVE", "CONV", "VAR_C", "DLF"]
    assert check_proof(counter, t).ok


def test_prove_progress(counter):
    # conv(n != 0) holds on the extension, so the first progress case applies
    t = prove(counter, parse_temporal("[] (n = 2 -> <> (n = 0))", counter), hint_n(counter))
    assert "BOX_DIA_1" in t.rules and check_proof(counter, t).ok


def test_prove_progress_by_prog():
    # div(n = 5) holds on the extended counter, so the second progress case applies
    m = fixture("counter")
    phi1, phi2 = m.formula("five"), m.formula("nonzero")
    f = parse_temporal("[] (five -> <> nonzero)", m)
    t = prove(m, f, auto_refine=True)
    assert isinstance(t, ProofTree) and "PROG" in t.rules, t
    assert check_proof(m, t).ok
    g = build_graph(trivial_extension(m))
    # no five-state fails nonzero, so nothing needs to be routed
    assert synthesize_phi3(g, phi1, phi2) == FALSE


def test_prove_false_formula(counter):
    r = prove(counter, parse_temporal("[] (n != 0)", counter), hint_n(counter))
    assert isinstance(r, ProofFailure) and r.verdict.value == FAILS


def test_prove_needs_hint_or_refinement(counter):
    r = prove(counter, parse_temporal("[] <> (n = 0)", counter))
    assert isinstance(r, ProofFailure) and "hint" in r.reason
    t = prove(counter, parse_temporal("[] <> (n = 0)", counter), auto_refine=True)
    assert "REFINE_CONV" in t.rules and check_proof(counter, t).ok


def test_prove_not_tail_homogeneous():
    m = fixture("twoloop")
    r = prove(m, parse_temporal("[] (true -> <> one)", m), auto_refine=True)
    assert isinstance(r, ProofFailure) and "tail-homogeneous" in r.reason


def test_phi3_hint_is_tried_first():
    m = fixture("counter")
    f = parse_temporal("[] (five -> <> nonzero)", m)
    auto = prove(m, f, auto_refine=True)
    phi3 = next(n for n in auto.walk() if n.rule == "PROG").evidence
    hinted = prove(m, f, ProofHints(phi3=[Phi3Hint(phi3)], auto_refine=True))
    assert next(n for n in hinted.walk() if n.rule == "PROG").evidence == phi3


# -- check_proof -------------------------------------------------------------------

def test_check_rejects_tampered_variant(counter):
    t = prove(counter, parse_temporal("[] <> (n = 0)", counter), hint_n(counter))
    doc = proof_to_json(t, counter)
    conv = doc["tree"]["premises"][0]["premises"][0]
    conv["premises"][0]["conclusion"]["args"][0] = "{}"
    res = check_proof(counter, proof_from_json(doc, counter))
    assert not res.ok and res.node.rule == "VAR_C"


def test_check_rejects_schema_mismatch(counter):
    t = prove(counter, parse_temporal("[] <> (n = 0)", counter), hint_n(counter))
    t.premises[0].rule = "BOX_DIA_2"
    res = check_proof(counter, t)
    assert not res.ok and "BOX_DIA_2" in res.reason


def test_check_rejects_wrong_machine(counter):
    t = prove(counter, parse_temporal("[] <> (n = 0)", counter), hint_n(counter))
    assert not check_proof(fixture("timer"), t).ok


def test_json_round_trip_with_refinement(counter):
    t = prove(counter, parse_temporal("<> [] (n = 0)", counter), auto_refine=True)
    doc = json.loads(json.dumps(proof_to_json(t, counter)))
    back = proof_from_json(doc, counter)
    assert back.rules == t.rules and check_proof(counter, back).ok
    assert proof_to_json(back, counter) == doc


def test_format_tree(counter):
    t = prove(counter, parse_temporal("[] <> (n = 0)", counter), hint_n(counter))
    text = format_tree(t)
    assert text.splitlines()[0].startswith("M |- [] <> (n = {})")
    assert "[CONV; t = n]" in text


def test_load_hints(counter):
    h = load_hints(json.dumps({"auto_refine": True, "variants": [
        {"rule": "CONV", "formula": "n != 0", "term": "n"}],
        "phi3": [{"formula": "n != 0", "target": "n = 0"}]}), counter)
    assert h.auto_refine and h.variants_for("CONV", F("n != 0")) == [parse_term("n")]
    assert h.variants_for("DIV", F("n != 0")) == []
    assert h.phi3_for(F("n = 2"), F("n = 0")) == [F("n != 0")]


# -- soundness ---------------------------------------------------------------------

@pytest.mark.parametrize("name", fixture_names())
def test_soundness_on_fixtures(name):
    m = fixture(name)
    g = build_graph(trivial_extension(m))
    ctx, checker = Context(m), Context(m)
    for f in all_temporal([phi for _, phi in m.formulas], 2):
        t = prove(m, f, auto_refine=True, context=ctx)
        if isinstance(t, ProofTree):
            assert check_proof(m, t, context=checker).ok
            assert holds_bruteforce(g, f).value == HOLDS, f


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**9))
def test_soundness_random(seed):
    rng = seeded(seed)
    m = elaborate(rand_spec(rng))
    g = build_graph(trivial_extension(m))
    phis = rand_states(rng, list(m.variables))
    # refinements of random machines can be large; over budget they are indeterminate
    ctx = Context(m, budget=5_000, word_budget=20_000)
    checker = Context(m, budget=5_000, word_budget=20_000)
    for _ in range(10):
        f = rand_temporal(rng, phis, 2)
        t = prove(m, f, auto_refine=True, context=ctx)
        if isinstance(t, ProofTree):
            assert check_proof(m, t, context=checker).ok
            assert holds_bruteforce(g, f).value == HOLDS
