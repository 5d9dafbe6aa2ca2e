"""Derivations in the rule system for []LTL over event machines.

A derivation is a tree of judgments ``M |- phi``. Leaves are first-order side
conditions (leadsto, dlf, var_c, var_d, initiation, validity), discharged by
evaluating them on the complete reachable state graph. Inner nodes apply one
of the rules

    CONV   var_c(t, phi), dlf(phi)                 |- conv(phi)
    DIV    var_d(t, phi)                           |- div(phi)
    INV1   |- init -> phi, leadsto(phi, phi)       |- [] phi
    INV2   |- phi -> psi, [] phi                   |- [] psi
    LIVE   conv(!phi)                              |- [] <> phi
    PROG   div(!p3), leadsto(p3 & !p2, p3 | p2),
           [] (p1 & !p2 -> p3)                     |- [] (p1 -> <> p2)
    PERS   div(phi), dlf(!phi)                     |- <> [] phi

the modal rules BOX, BOX_OR, BOX_DIA_1..3, DIA_BOX_1..3, the transfer rule
EXT from the trivial extension to the machine itself, and REFINE_CONV /
REFINE_DIV, which carry conv/div from a refined machine back to the extension
when the projected trace sets agree.

Judgments name their machine by tag: "M" (the input machine), "M~" (its
trivial extension) or a refinement tag such as "M'1".
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from .fol import (
    IndeterminateError, SideConditionReport, Witness, check_dlf, check_leadsto, check_var_c,
    check_var_d,
)
from .hfset import HFError
from .machine import (
    DEFAULT_NODE_BUDGET, Machine, StateGraph, build_graph, elaborate, to_source,
    trivial_extension,
)
from .oracle import (
    CONV_SIDE, DIV_SIDE, Verdict, check_conv, check_div, holds, tail_homogeneous,
)
from .refine import (
    PROJECTION_DEPTH, WORD_BUDGET, ProjectionReport, Refinement, RefinementRefused, projection_equivalent, refine_for_conv,
    refine_for_div,
)
from .speclang import (
    ParseError, parse_formula, parse_machine, parse_temporal, parse_term, print_formula,
    print_machine, print_temporal, print_term,
)
from .syntax import (
    Always, AlwaysEventually, And, Call, Eq, EventuallyAlways, Formula, Implies, Lit,
    Or, Progress, SetOf, State, Temporal, Term, Var, conj, disj, modal_word, neg,
)

ORIGINAL, EXTENDED = "M", "M~"

LEAF_RULES = {"INIT": "init", "VALID": "valid", "LEADSTO": "leadsto", "DLF": "dlf",
              "VAR_C": "var_c", "VAR_D": "var_d"}
MODAL_RULES = ("BOX", "BOX_OR", "BOX_DIA_1", "BOX_DIA_2", "BOX_DIA_3",
               "DIA_BOX_1", "DIA_BOX_2", "DIA_BOX_3", "EXT")


class RuleNotApplicable(Exception):
    """A rule's premises or side conditions do not hold."""

    def __init__(self, message: str, report: Optional[SideConditionReport] = None):
        super().__init__(message)
        self.report = report


class ProofFormatError(ValueError):
    """A serialized proof could not be read."""


class ProofMachineMismatch(ValueError):
    """A serialized proof mentions names the given machine does not declare."""


# -- judgments and trees ------------------------------------------------------

@dataclass(frozen=True)
class Judgment:
    machine: str
    kind: str  # "temporal" or a side-condition kind
    args: tuple

    @property
    def formula(self) -> Temporal:
        if self.kind != "temporal":
            raise ValueError(f"{self.kind} judgment has no temporal formula")
        return self.args[0]

    def key(self) -> tuple:
        return (self.machine, self.kind) + tuple(_arg_key(a) for a in self.args)

    def body_text(self) -> str:
        if self.kind == "temporal":
            return print_temporal(self.args[0])
        if self.kind == "init":
            return f"init -> {print_formula(self.args[0], 1)}"
        if self.kind == "valid":
            return print_formula(self.args[0])
        return f"{self.kind}(" + ", ".join(_arg_text(a) for a in self.args) + ")"

    def text(self) -> str:
        return f"{self.machine} |- {self.body_text()}"


def _is_temporal(x) -> bool:
    return isinstance(x, (State, Always, AlwaysEventually, EventuallyAlways, Progress))


def _is_term(x) -> bool:
    return isinstance(x, (Var, Lit, Call, SetOf))


def _arg_text(a) -> str:
    if _is_temporal(a):
        return print_temporal(a)
    if _is_term(a):
        return print_term(a)
    return print_formula(a)


def temporal_key(f: Temporal) -> tuple:
    """The LTL formula denoted by f, with state formulas compared by their text."""
    return tuple(t if isinstance(t, str) else (t[0], print_formula(t[1]))
                 for t in modal_word(f))


def _arg_key(a):
    if _is_temporal(a):
        return ("T",) + temporal_key(a)
    return _arg_text(a)


@dataclass
class ProofTree:
    conclusion: Judgment
    rule: str
    premises: List["ProofTree"] = field(default_factory=list)
    evidence: Any = None  # SideConditionReport for leaves, Term for CONV/DIV, ...
    refinement: Optional[Refinement] = None  # REFINE_CONV / REFINE_DIV only

    def walk(self):
        yield self
        for p in self.premises:
            yield from p.walk()

    @property
    def rules(self) -> List[str]:
        return [n.rule for n in self.walk()]


@dataclass
class ProofFailure:
    reason: str
    formula: Optional[Temporal] = None
    verdict: Optional[Verdict] = None

    ok = False


# -- hints --------------------------------------------------------------------

@dataclass(frozen=True)
class VariantHint:
    term: Term
    rule: Optional[str] = None  # "CONV" / "DIV"; None for both
    formula: Optional[Formula] = None  # the conv/div argument; None for any


@dataclass(frozen=True)
class Phi3Hint:
    formula: Formula
    antecedent: Optional[Formula] = None
    target: Optional[Formula] = None


@dataclass
class ProofHints:
    variants: List[VariantHint] = field(default_factory=list)
    phi3: List[Phi3Hint] = field(default_factory=list)
    auto_refine: bool = False

    def variants_for(self, rule: str, phi: Formula) -> List[Term]:
        k = print_formula(phi)
        out = []
        for h in self.variants:
            if h.rule not in (None, rule):
                continue
            if h.formula is not None and print_formula(h.formula) != k:
                continue
            if h.term not in out:
                out.append(h.term)
        return out

    def phi3_for(self, phi1: Formula, phi2: Formula) -> List[Formula]:
        k1, k2 = print_formula(phi1), print_formula(phi2)
        return [h.formula for h in self.phi3
                if (h.antecedent is None or print_formula(h.antecedent) == k1)
                and (h.target is None or print_formula(h.target) == k2)]


def load_hints(text: str, machine: Machine) -> ProofHints:
    """Hints from JSON: {"auto_refine": bool, "variants": [{"term", "rule"?,
    "formula"?}], "phi3": [{"formula", "antecedent"?, "target"?}]}."""
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("hint file must hold a JSON object")
    opt = lambda d, k: parse_formula(d[k], machine) if d.get(k) is not None else None  # noqa: E731
    variants = []
    for d in data.get("variants", []):
        rule = d.get("rule")
        if rule not in (None, "CONV", "DIV"):
            raise ValueError(f"variant hint rule must be CONV or DIV, not {rule!r}")
        variants.append(VariantHint(parse_term(d["term"], machine), rule, opt(d, "formula")))
    phi3 = [Phi3Hint(parse_formula(d["formula"], machine), opt(d, "antecedent"), opt(d, "target"))
            for d in data.get("phi3", [])]
    return ProofHints(variants, phi3, bool(data.get("auto_refine", False)))


# -- context ------------------------------------------------------------------

class Context:
    """The machines a derivation talks about, with cached graphs and reports."""

    def __init__(self, machine: Machine, budget: int = DEFAULT_NODE_BUDGET,
                 depth: int = PROJECTION_DEPTH, word_budget: int = WORD_BUDGET):
        self.machine = machine
        self.ext = trivial_extension(machine)
        self.budget = budget
        self.depth = depth
        self.word_budget = word_budget
        self._machines: Dict[str, Machine] = {ORIGINAL: machine, EXTENDED: self.ext}
        self._graphs: Dict[Machine, StateGraph] = {}
        self._reports: Dict[tuple, SideConditionReport] = {}
        self.refinements: Dict[str, Refinement] = {}
        self._made: Dict[tuple, str] = {}
        self._projections: Dict[Machine, Any] = {}

    def machine_for(self, tag: str) -> Machine:
        try:
            return self._machines[tag]
        except KeyError:
            raise RuleNotApplicable(f"unknown machine {tag!r}") from None

    def graph(self, tag: str) -> StateGraph:
        m = self.machine_for(tag)
        g = self._graphs.get(m)
        if g is None:
            g = self._graphs[m] = build_graph(m, self.budget)
        if not g.complete:
            raise RuleNotApplicable(
                f"indeterminate: state graph of {tag} truncated at {len(g.nodes)} nodes")
        return g

    def register(self, tag: str, ref: Refinement) -> None:
        if tag in (ORIGINAL, EXTENDED):
            raise RuleNotApplicable(f"refinement cannot reuse the tag {tag!r}")
        old = self.refinements.get(tag)
        if old is not None and old.machine != ref.machine:
            raise RuleNotApplicable(f"tag {tag!r} names two different refinements")
        self.refinements[tag] = ref
        self._machines[tag] = ref.machine

    def refine(self, kind: str, phi: Formula) -> Tuple[str, Refinement]:
        """The refinement for conv/div(phi) of the extension, built once."""
        key = (kind, print_formula(phi))
        tag = self._made.get(key)
        if tag is None:
            build = refine_for_conv if kind == "conv" else refine_for_div
            ref = build(self.ext, phi, budget=self.budget)
            tag = f"M'{len(self.refinements) + 1}"
            while tag in self.refinements:
                tag += "'"
            self.register(tag, ref)
            self._made[key] = tag
        return tag, self.refinements[tag]

    def projection(self, tag: str):
        ref = self.refinements[tag]
        rep = self._projections.get(ref.machine)
        if rep is None:
            try:
                graphs = self.graph(EXTENDED), self.graph(tag)
                rep = projection_equivalent(ref, self.depth, self.budget, self.word_budget, graphs)
            except IndeterminateError as e:
                raise RuleNotApplicable(f"indeterminate: {e}") from None
            self._projections[ref.machine] = rep
        return rep

    def forget_tags(self) -> None:
        """Drop refinement tags (cached results stay, keyed by machine)."""
        for tag in self.refinements:
            del self._machines[tag]
        self.refinements = {}
        self._made = {}

    def report(self, tag: str, kind: str, args: tuple) -> SideConditionReport:
        key = (self.machine_for(tag), kind) + tuple(_arg_key(a) for a in args)
        rep = self._reports.get(key)
        if rep is None:
            rep = self._reports[key] = self._compute(tag, kind, args)
        return rep

    def _compute(self, tag: str, kind: str, args: tuple) -> SideConditionReport:
        g = self.graph(tag)
        try:
            if kind == "init":
                bad = [i for i in g.initial if not g.holds(i, args[0])]
                return SideConditionReport("init", not bad, Witness(bad[0]) if bad else None,
                                           "initial state violates the formula" if bad else "")
            if kind == "valid":
                bad = [i for i in range(len(g.nodes)) if not g.holds(i, args[0])]
                return SideConditionReport("valid", not bad, Witness(bad[0]) if bad else None,
                                           "reachable state violates the formula" if bad else "")
            if kind == "leadsto":
                return check_leadsto(g, *args)
            if kind == "dlf":
                return check_dlf(g, *args)
            if kind == "var_c":
                return check_var_c(g, *args)
            if kind == "var_d":
                return check_var_d(g, *args)
            if kind == "deadlock_free":
                dead = g.deadlocked_nodes()
                return SideConditionReport("deadlock_free", not dead,
                                           Witness(dead[0]) if dead else None,
                                           "deadlocked state" if dead else "")
        except IndeterminateError as e:
            raise RuleNotApplicable(f"indeterminate: {e}") from None
        except HFError as e:
            return SideConditionReport(kind, False, None, f"evaluation error: {e}")
        raise ValueError(f"unknown side condition {kind!r}")


def as_context(x: Union[Machine, Context]) -> Context:
    return x if isinstance(x, Context) else Context(x)


# -- leaves -------------------------------------------------------------------

def side_condition(ctx, kind: str, args: tuple, on: str = ORIGINAL) -> ProofTree:
    """A leaf for a first-order side condition, checked on the state graph."""
    ctx = as_context(ctx)
    rule = {v: k for k, v in LEAF_RULES.items()}[kind]
    rep = ctx.report(on, kind, args)
    j = Judgment(on, kind, tuple(args))
    if not rep.verdict:
        raise RuleNotApplicable(f"{j.text()} fails: {rep.reason}", rep)
    return ProofTree(j, rule, [], rep)


def apply_INIT(ctx, phi: Formula, on: str = ORIGINAL) -> ProofTree:
    """M |- phi for a state formula: every initial state satisfies phi."""
    ctx = as_context(ctx)
    rep = ctx.report(on, "init", (phi,))
    j = Judgment(on, "temporal", (State(phi),))
    if not rep.verdict:
        raise RuleNotApplicable(f"{j.text()} fails: {rep.reason}", rep)
    return ProofTree(j, "INIT", [], rep)


# -- rules --------------------------------------------------------------------

def _need(p: ProofTree, tag: str, kind: str, what: str) -> tuple:
    c = p.conclusion
    if c.machine != tag:
        raise RuleNotApplicable(f"{what}: premise is about {c.machine}, expected {tag}")
    if c.kind != kind:
        raise RuleNotApplicable(f"{what}: premise {c.text()} is not a {kind} judgment")
    return c.args


def _same(a: Formula, b: Formula) -> bool:
    return print_formula(a) == print_formula(b)


def apply_CONV(ctx, t: Term, phi: Formula, on: str = ORIGINAL) -> ProofTree:
    ctx = as_context(ctx)
    prem = [side_condition(ctx, "var_c", (t, phi), on), side_condition(ctx, "dlf", (phi,), on)]
    return ProofTree(Judgment(on, "conv", (phi,)), "CONV", prem, t)


def apply_DIV(ctx, t: Term, phi: Formula, on: str = ORIGINAL) -> ProofTree:
    ctx = as_context(ctx)
    prem = [side_condition(ctx, "var_d", (t, phi), on)]
    return ProofTree(Judgment(on, "div", (phi,)), "DIV", prem, t)


def apply_INV1(ctx, phi: Formula, on: str = ORIGINAL) -> ProofTree:
    ctx = as_context(ctx)
    prem = [side_condition(ctx, "init", (phi,), on), side_condition(ctx, "leadsto", (phi, phi), on)]
    return ProofTree(Judgment(on, "temporal", (Always(State(phi)),)), "INV1", prem)


def apply_INV2(ctx, premise: ProofTree, psi: Formula) -> ProofTree:
    ctx = as_context(ctx)
    on = premise.conclusion.machine
    (f,) = _need(premise, on, "temporal", "INV2")
    if not (isinstance(f, Always) and isinstance(f.body, State)):
        raise RuleNotApplicable(f"INV2: premise {print_temporal(f)} is not [] phi")
    valid = side_condition(ctx, "valid", (Implies(f.body.formula, psi),), on)
    return ProofTree(Judgment(on, "temporal", (Always(State(psi)),)), "INV2", [valid, premise])


def apply_LIVE(ctx, phi: Formula, premise: ProofTree) -> ProofTree:
    on = premise.conclusion.machine
    (chi,) = _need(premise, on, "conv", "LIVE")
    if not _same(chi, neg(phi)):
        raise RuleNotApplicable(f"LIVE: premise is conv({print_formula(chi)}), "
                                f"expected conv({print_formula(neg(phi))})")
    return ProofTree(Judgment(on, "temporal", (AlwaysEventually(State(phi)),)), "LIVE", [premise])


def prog_invariant(phi1: Formula, phi2: Formula, phi3: Formula) -> Formula:
    return Implies(And(phi1, neg(phi2)), phi3)


def apply_PROG(ctx, phi1: Formula, phi2: Formula, phi3: Formula,
               div_premise: ProofTree, inv_premise: ProofTree) -> ProofTree:
    """Progress from a divergence of !phi3 and an invariant routing phi1 into phi3.

    The rule reasons about infinite traces, so the machine must be free of
    deadlocks; this is checked alongside the leadsto condition.
    """
    ctx = as_context(ctx)
    on = div_premise.conclusion.machine
    (d,) = _need(div_premise, on, "div", "PROG")
    if not _same(d, neg(phi3)):
        raise RuleNotApplicable(f"PROG: first premise must be div({print_formula(neg(phi3))})")
    (f,) = _need(inv_premise, on, "temporal", "PROG")
    want = Always(State(prog_invariant(phi1, phi2, phi3)))
    if temporal_key(f) != temporal_key(want):
        raise RuleNotApplicable(f"PROG: third premise must be {print_temporal(want)}")
    dead = ctx.report(on, "deadlock_free", ())
    if not dead.verdict:
        raise RuleNotApplicable(f"PROG: {on} has deadlocked states", dead)
    lead = side_condition(ctx, "leadsto", (And(phi3, neg(phi2)), Or(phi3, phi2)), on)
    concl = Judgment(on, "temporal", (Progress(phi1, State(phi2)),))
    return ProofTree(concl, "PROG", [div_premise, lead, inv_premise], phi3)


def apply_PERS(ctx, phi: Formula, div_premise: ProofTree) -> ProofTree:
    ctx = as_context(ctx)
    on = div_premise.conclusion.machine
    (d,) = _need(div_premise, on, "div", "PERS")
    if not _same(d, phi):
        raise RuleNotApplicable(f"PERS: premise must be div({print_formula(phi)})")
    dlf = side_condition(ctx, "dlf", (neg(phi),), on)
    return ProofTree(Judgment(on, "temporal", (EventuallyAlways(State(phi)),)), "PERS",
                     [div_premise, dlf])


def _modal_schema(rule: str, f: Temporal, phi1: Optional[Formula], psi: Optional[Temporal]):
    """The conclusion the modal rule draws from premise f (None if f does not fit)."""
    if rule == "BOX":
        # any premise whose outermost operator is []
        return Always(f) if isinstance(f, (Always, AlwaysEventually, Progress)) else None
    if rule == "BOX_OR":
        # [] !phi |- [] (phi -> <> psi), phi a state formula
        if isinstance(f, Always) and isinstance(f.body, State) and psi is not None:
            p1 = neg(f.body.formula) if phi1 is None else phi1
            if _same(neg(p1), f.body.formula):
                return Progress(p1, psi)
        return None
    if rule == "BOX_DIA_1":
        if isinstance(f, AlwaysEventually) and phi1 is not None:
            return Progress(phi1, f.body)
        return None
    if rule in ("BOX_DIA_2", "DIA_BOX_1", "DIA_BOX_3"):
        if not isinstance(f, EventuallyAlways):
            return None
        if rule == "BOX_DIA_2":
            return AlwaysEventually(Always(f.body))
        if rule == "DIA_BOX_1":
            return EventuallyAlways(Always(f.body))
        return EventuallyAlways(EventuallyAlways(f.body))
    if rule in ("BOX_DIA_3", "DIA_BOX_2"):
        wrap = AlwaysEventually if rule == "BOX_DIA_3" else EventuallyAlways
        if isinstance(f, Progress):
            return wrap(f)
        if isinstance(f, AlwaysEventually):  # the instance with phi1 = true
            return wrap(f)
        return None
    raise ValueError(f"unknown modal rule {rule!r}")


def apply_modal(ctx, rule: str, premise: ProofTree, *, phi1: Optional[Formula] = None,
                psi: Optional[Temporal] = None, target: Optional[Temporal] = None) -> ProofTree:
    """Apply a modal rule (or EXT) to a temporal premise.

    BOX_OR needs psi and BOX_DIA_1 needs phi1; both are read off target when
    omitted. With target the node concludes target, which must denote the same
    formula as the schema's conclusion.
    """
    if rule not in MODAL_RULES:
        raise ValueError(f"unknown modal rule {rule!r}")
    on = premise.conclusion.machine
    (f,) = _need(premise, on, "temporal", rule)
    if rule == "EXT":
        ctx = as_context(ctx)
        if on != EXTENDED:
            raise RuleNotApplicable("EXT: premise must be about the trivial extension M~")
        concl = f
        on = ORIGINAL
    else:
        if isinstance(target, Progress):
            phi1 = target.antecedent if phi1 is None else phi1
            psi = target.body if psi is None else psi
        concl = _modal_schema(rule, f, phi1, psi)
        if concl is None:
            raise RuleNotApplicable(f"{rule}: premise {print_temporal(f)} does not match the schema")
    if target is not None:
        if temporal_key(target) != temporal_key(concl):
            raise RuleNotApplicable(f"{rule}: yields {print_temporal(concl)}, "
                                    f"not {print_temporal(target)}")
        concl = target
    return ProofTree(Judgment(on, "temporal", (concl,)), rule, [premise])


def apply_REFINE(ctx: Context, kind: str, phi: Formula, premise: ProofTree,
                 tag: str) -> ProofTree:
    """conv/div(phi) on the extension from the same judgment on a refinement of it."""
    ref = ctx.refinements.get(tag)
    if ref is None:
        raise RuleNotApplicable(f"REFINE: no refinement registered as {tag!r}")
    rule = "REFINE_CONV" if kind == "conv" else "REFINE_DIV"
    (p,) = _need(premise, tag, kind, rule)
    if not _same(p, phi) or ref.kind != kind:
        raise RuleNotApplicable(f"{rule}: premise does not concern {kind}({print_formula(phi)})")
    if ref.source != ctx.ext:
        raise RuleNotApplicable(f"{rule}: {tag} is not refined from the trivial extension")
    if ref.machine.variables[:len(ctx.ext.variables)] != ctx.ext.variables:
        raise RuleNotApplicable(f"{rule}: {tag} does not extend the source variables")
    dead = ctx.report(tag, "deadlock_free", ())
    if not dead.verdict:
        raise RuleNotApplicable(f"{rule}: {tag} has deadlocked states", dead)
    rep = ctx.projection(tag)
    if not rep.equal:
        raise RuleNotApplicable(f"{rule}: projected traces of {tag} differ from M~ "
                                f"within depth {rep.depth}")
    return ProofTree(Judgment(EXTENDED, kind, (phi,)), rule, [premise], rep, ref)


# -- checking -----------------------------------------------------------------

@dataclass
class ProofCheck:
    ok: bool
    node: Optional[ProofTree] = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> dict:
        return {"ok": self.ok, "reason": self.reason,
                "node": None if self.node is None else
                {"rule": self.node.rule, "conclusion": self.node.conclusion.text()}}


class _CheckFailure(Exception):
    def __init__(self, node: ProofTree, reason: str):
        super().__init__(reason)
        self.node = node


def check_proof(machine: Machine, tree: ProofTree, budget: int = DEFAULT_NODE_BUDGET,
                depth: int = PROJECTION_DEPTH, context: Optional[Context] = None) -> ProofCheck:
    """Re-derive every node of tree from its premises with fresh side-condition checks.

    A checker context may be passed to reuse results across checks of several
    proofs for the same machine; it should not be the one the proofs were
    searched with.
    """
    if context is not None and context.machine != machine:
        return ProofCheck(False, tree, "checker context belongs to a different machine")
    ctx = context if context is not None else Context(machine, budget, depth)
    ctx.forget_tags()
    try:
        _check(ctx, tree)
    except _CheckFailure as e:
        return ProofCheck(False, e.node, str(e))
    return ProofCheck(True)


def _check(ctx: Context, node: ProofTree) -> None:
    try:
        rebuilt = _rebuild(ctx, node)
    except _CheckFailure:
        raise
    except RuleNotApplicable as e:
        raise _CheckFailure(node, f"{node.rule}: {e}") from None
    except (HFError, ValueError, TypeError, IndexError, AttributeError) as e:
        raise _CheckFailure(node, f"{node.rule}: malformed node ({e})") from None
    if rebuilt.rule != node.rule or rebuilt.conclusion.key() != node.conclusion.key():
        raise _CheckFailure(node, f"{node.rule}: schema gives {rebuilt.conclusion.text()}, "
                                  f"node claims {node.conclusion.text()}")
    got = [p.conclusion.key() for p in node.premises]
    want = [p.conclusion.key() for p in rebuilt.premises]
    if got != want:
        raise _CheckFailure(node, f"{node.rule}: premises do not match the rule schema")


def _rebuild(ctx: Context, node: ProofTree) -> ProofTree:
    c = node.conclusion
    rule = node.rule
    if rule == "INIT" and c.kind == "temporal":
        f = c.formula
        if not isinstance(f, State) or node.premises:
            raise RuleNotApplicable("INIT concludes a state formula")
        return apply_INIT(ctx, f.formula, c.machine)
    if rule in LEAF_RULES:
        if c.kind != LEAF_RULES[rule] or node.premises:
            raise RuleNotApplicable(f"{rule} leaf cannot conclude a {c.kind} judgment")
        return side_condition(ctx, c.kind, c.args, c.machine)
    if rule in ("REFINE_CONV", "REFINE_DIV"):
        if len(node.premises) != 1 or node.refinement is None:
            raise RuleNotApplicable(f"{rule} needs one premise and its refinement")
        tag = node.premises[0].conclusion.machine
        ctx.register(tag, node.refinement)
        _check(ctx, node.premises[0])
        kind = "conv" if rule == "REFINE_CONV" else "div"
        return apply_REFINE(ctx, kind, c.args[0], node.premises[0], tag)
    for p in node.premises:
        _check(ctx, p)
    P = node.premises
    if rule == "CONV":
        t = P[0].conclusion.args[0]
        return apply_CONV(ctx, t, c.args[0], c.machine)
    if rule == "DIV":
        t = P[0].conclusion.args[0]
        return apply_DIV(ctx, t, c.args[0], c.machine)
    if rule == "INV1":
        return apply_INV1(ctx, c.formula.body.formula, c.machine)
    if rule == "INV2":
        return apply_INV2(ctx, P[1], c.formula.body.formula)
    if rule == "LIVE":
        return apply_LIVE(ctx, c.formula.body.formula, P[0])
    if rule == "PROG":
        f = c.formula
        phi3 = P[1].conclusion.args[1].left  # leadsto(p3 & !p2, p3 | p2)
        return apply_PROG(ctx, f.antecedent, f.body.formula, phi3, P[0], P[2])
    if rule == "PERS":
        return apply_PERS(ctx, c.formula.body.formula, P[0])
    if rule in MODAL_RULES:
        if len(P) != 1:
            raise RuleNotApplicable(f"{rule} takes one premise")
        return apply_modal(ctx, rule, P[0], target=c.formula)
    raise RuleNotApplicable(f"unknown rule {rule!r}")


# -- search -------------------------------------------------------------------

class _Fail(Exception):
    pass


def literal_description(g: StateGraph, i: int) -> Formula:
    """The conjunction v1 = c1 & ... pinning down reachable state i."""
    return conj(Eq(Var(v), Lit(x)) for v, x in zip(g.variables, g.nodes[i]))


def synthesize_phi3(g: StateGraph, phi1: Formula, phi2: Formula) -> Formula:
    """The !phi2-states reachable from a phi1 & !phi2 state without passing phi2,
    as a disjunction of literal state descriptions."""
    n = len(g.nodes)
    seen = [False] * n
    stack = [i for i in range(n) if g.holds(i, phi1) and not g.holds(i, phi2)]
    for i in stack:
        seen[i] = True
    while stack:
        i = stack.pop()
        for j in g.succ(i):
            if not seen[j] and not g.holds(j, phi2):
                seen[j] = True
                stack.append(j)
    return disj(literal_description(g, i) for i in range(n) if seen[i])


class _Search:
    """Proof search on the trivial extension, following the shape of the goal."""

    def __init__(self, ctx: Context, hints: ProofHints):
        self.ctx = ctx
        self.hints = hints
        self.g = ctx.graph(EXTENDED)
        self._memo: Dict[tuple, Union[ProofTree, _Fail]] = {}

    def _memoized(self, key, fn):
        r = self._memo.get(key)
        if r is None:
            try:
                r = fn()
            except _Fail as e:
                r = e
            except RuleNotApplicable as e:
                r = _Fail(str(e))
            self._memo[key] = r
        if isinstance(r, _Fail):
            raise r
        return r

    # conv / div with variants from hints or the refinement constructions
    def conv(self, phi: Formula) -> ProofTree:
        return self._memoized(("conv", print_formula(phi)), lambda: self._variant("conv", phi))

    def div(self, phi: Formula) -> ProofTree:
        return self._memoized(("div", print_formula(phi)), lambda: self._variant("div", phi))

    def _variant(self, kind: str, phi: Formula) -> ProofTree:
        text = f"{kind}({print_formula(phi)})"
        v = (check_conv if kind == "conv" else check_div)(self.g, phi)
        if not v.holds:
            why = v.counterexample.format(self.g) if v.counterexample else v.reason
            raise _Fail(f"{text} does not hold on M~: {why}")
        rule = kind.upper()
        apply = apply_CONV if kind == "conv" else apply_DIV
        for t in self.hints.variants_for(rule, phi):
            try:
                return apply(self.ctx, t, phi, EXTENDED)
            except RuleNotApplicable:
                continue
        if not self.hints.auto_refine:
            raise _Fail(f"no variant for {text}: supply a {rule} hint or enable auto-refine")
        try:
            tag, ref = self.ctx.refine(kind, phi)
        except RefinementRefused as e:
            raise _Fail(f"{text}: refinement refused: {e}") from None
        except IndeterminateError as e:
            raise _Fail(f"indeterminate: {text}: {e}") from None
        inner = apply(self.ctx, ref.variant, phi, tag)
        return apply_REFINE(self.ctx, kind, phi, inner, tag)

    # temporal goals
    def prove(self, f: Temporal) -> ProofTree:
        return self._memoized(("T",) + temporal_key(f) + (repr(f),), lambda: self._prove(f))

    def _prove(self, f: Temporal) -> ProofTree:
        ctx = self.ctx
        if isinstance(f, State):
            return apply_INIT(ctx, f.formula, EXTENDED)
        body = f.body
        if isinstance(f, Always):  # invariance
            if isinstance(body, State):
                return apply_INV1(ctx, body.formula, EXTENDED)
            if isinstance(body, EventuallyAlways):
                return apply_modal(ctx, "BOX_DIA_2", self.prove(body), target=f)
            return apply_modal(ctx, "BOX", self.prove(body), target=f)
        if isinstance(f, AlwaysEventually):  # existence
            if isinstance(body, State):
                return apply_LIVE(ctx, body.formula, self.conv(neg(body.formula)))
            if isinstance(body, Always):
                return apply_modal(ctx, "BOX_DIA_2", self.prove(EventuallyAlways(body.body)),
                                   target=f)
            if isinstance(body, EventuallyAlways):
                return apply_modal(ctx, "BOX_DIA_2", self.prove(body), target=f)
            return apply_modal(ctx, "BOX_DIA_3", self.prove(body), target=f)
        if isinstance(f, EventuallyAlways):  # persistence
            if isinstance(body, State):
                return apply_PERS(ctx, body.formula, self.div(body.formula))
            if isinstance(body, Always):
                return apply_modal(ctx, "DIA_BOX_1", self.prove(EventuallyAlways(body.body)),
                                   target=f)
            if isinstance(body, EventuallyAlways):
                return apply_modal(ctx, "DIA_BOX_3", self.prove(body), target=f)
            return apply_modal(ctx, "DIA_BOX_2", self.prove(body), target=f)
        if isinstance(f, Progress):
            return self._progress(f)
        raise TypeError(f"not a temporal formula: {f!r}")

    def _progress(self, f: Progress) -> ProofTree:
        ctx, g = self.ctx, self.g
        phi1 = f.antecedent
        if not any(g.holds(i, phi1) for i in range(len(g.nodes))):
            # the antecedent never holds: [] !phi1 and rule BOX_OR
            return apply_modal(ctx, "BOX_OR", apply_INV1(ctx, neg(phi1), EXTENDED), target=f)
        if not isinstance(f.body, State):
            try:
                return apply_modal(ctx, "BOX_DIA_1", self.prove(AlwaysEventually(f.body)),
                                   target=f)
            except _Fail as e:
                cls = tail_homogeneous(g, phi1)
                raise _Fail(f"{e} (antecedent {print_formula(phi1)} is {cls})") from None
        phi2 = f.body.formula
        cls = tail_homogeneous(g, phi2)
        if cls == CONV_SIDE:
            return apply_modal(ctx, "BOX_DIA_1",
                               self.prove(AlwaysEventually(State(phi2))), target=f)
        if cls == DIV_SIDE:
            return self._prog(phi1, phi2, f)
        raise _Fail(f"{print_formula(phi2)} is not tail-homogeneous ({cls}): neither "
                    f"conv({print_formula(neg(phi2))}) nor div({print_formula(neg(phi2))}) holds")

    def _prog(self, phi1: Formula, phi2: Formula, f: Progress) -> ProofTree:
        cands = self.hints.phi3_for(phi1, phi2) + [synthesize_phi3(self.g, phi1, phi2)]
        last = None
        for phi3 in cands:
            try:
                inv = apply_INV1(self.ctx, prog_invariant(phi1, phi2, phi3), EXTENDED)
                d = self.div(neg(phi3))
                return apply_PROG(self.ctx, phi1, phi2, phi3, d, inv)
            except (_Fail, RuleNotApplicable) as e:
                last = e
        raise _Fail(f"PROG: no phi3 works ({last})")


def prove(machine: Machine, formula: Temporal, hints: Optional[ProofHints] = None, *,
          auto_refine: Optional[bool] = None, context: Optional[Context] = None,
          budget: int = DEFAULT_NODE_BUDGET,
          depth: int = PROJECTION_DEPTH) -> Union[ProofTree, ProofFailure]:
    """Search a derivation of M |- formula; the root is an EXT step from M~.

    Variants come from hints, or with auto_refine from the refinement
    constructions. A context may be shared between calls on the same machine
    to reuse graphs, side-condition reports and refinements.
    """
    hints = hints or ProofHints()
    if auto_refine is not None:
        hints = ProofHints(hints.variants, hints.phi3, auto_refine)
    ctx = context if context is not None else Context(machine, budget, depth)
    if context is not None and context.machine != machine:
        raise ValueError("context belongs to a different machine")
    try:
        search = _Search(ctx, hints)
        tree = search.prove(formula)
    except (_Fail, RuleNotApplicable) as e:
        verdict = None
        try:
            verdict = holds(ctx.graph(EXTENDED), formula)
        except RuleNotApplicable:
            pass
        return ProofFailure(str(e), formula, verdict)
    return apply_modal(ctx, "EXT", tree)


# -- output -------------------------------------------------------------------

def _node_note(node: ProofTree) -> str:
    if node.rule in ("CONV", "DIV"):
        return f"t = {print_term(node.premises[0].conclusion.args[0])}"
    if node.rule == "PROG":
        return f"phi3 = {print_formula(node.evidence)}"
    if node.rule in ("REFINE_CONV", "REFINE_DIV"):
        rep = node.evidence
        return (f"{node.premises[0].conclusion.machine} = {node.refinement.machine.name}, "
                f"{rep.source_count} projected words to depth {rep.depth}")
    return ""


def format_tree(tree: ProofTree) -> str:
    """Indented listing: each judgment with its rule, premises indented below."""
    lines = []

    def go(node, indent):
        note = _node_note(node)
        rule = node.rule + (f"; {note}" if note else "")
        lines.append(f"{'  ' * indent}{node.conclusion.text()}   [{rule}]")
        for p in node.premises:
            go(p, indent + 1)

    go(tree, 0)
    return "\n".join(lines) + "\n"


def _judgment_json(j: Judgment) -> dict:
    return {"machine": j.machine, "kind": j.kind, "args": [_arg_text(a) for a in j.args]}


def _tree_json(node: ProofTree) -> dict:
    out = {"rule": node.rule, "conclusion": _judgment_json(node.conclusion)}
    if node.rule in LEAF_RULES or node.rule == "INIT":
        rep = node.evidence
        out["evidence"] = {"kind": rep.kind, "verdict": rep.verdict}
    elif node.rule in ("CONV", "DIV"):
        out["evidence"] = {"variant": print_term(node.evidence)}
    elif node.rule == "PROG":
        out["evidence"] = {"phi3": print_formula(node.evidence)}
    elif node.rule in ("REFINE_CONV", "REFINE_DIV"):
        ref, rep = node.refinement, node.evidence
        out["evidence"] = {
            "tag": node.premises[0].conclusion.machine,
            "refinement": {"kind": ref.kind, "phi": print_formula(ref.phi),
                           "variant": print_term(ref.variant),
                           "variant_kind": ref.variant_kind,
                           "machine": print_machine(to_source(ref.machine))},
            "projection": {"equal": rep.equal, "depth": rep.depth,
                           "source_words": rep.source_count, "refined_words": rep.refined_count},
        }
    out["premises"] = [_tree_json(p) for p in node.premises]
    return out


def proof_to_json(tree: ProofTree, machine: Machine) -> dict:
    return {"format": "ltleb-proof/1", "machine": machine.name,
            "conclusion": tree.conclusion.text(), "tree": _tree_json(tree)}


def proof_to_text(tree: ProofTree, machine: Machine) -> str:
    return json.dumps(proof_to_json(tree, machine), indent=2, sort_keys=True) + "\n"


def _parse_arg(kind: str, i: int, text: str, m: Machine):
    if kind == "temporal":
        return parse_temporal(text, m)
    if kind in ("var_c", "var_d") and i == 0:
        return parse_term(text, m)
    return parse_formula(text, m)


def proof_from_json(data: dict, machine: Machine) -> ProofTree:
    """Read a proof document; refinements are rebuilt from their printed machines."""
    if not isinstance(data, dict) or data.get("format") != "ltleb-proof/1":
        raise ProofFormatError("not an ltleb-proof/1 document")
    ext = trivial_extension(machine)
    machines = {ORIGINAL: machine, EXTENDED: ext}

    def node(d) -> ProofTree:
        try:
            cj = d["conclusion"]
            tag, kind = cj["machine"], cj["kind"]
            rule = d["rule"]
            ev = d.get("evidence") or {}
            ref = None
            if rule in ("REFINE_CONV", "REFINE_DIV"):
                r = ev["refinement"]
                refined = elaborate(parse_machine(r["machine"]))
                ref = Refinement(r["kind"], ext, refined, parse_formula(r["phi"], refined),
                                 parse_term(r["variant"], refined), {}, r["variant_kind"])
                machines[ev["tag"]] = refined
            if tag not in machines:
                raise ProofFormatError(f"unknown machine tag {tag!r}")
            m = machines[tag]
            try:
                args = tuple(_parse_arg(kind, i, a, m) for i, a in enumerate(cj["args"]))
            except ParseError as e:
                raise ProofMachineMismatch(f"{tag} |- {kind}{cj['args']}: {e}") from None
            premises = [node(p) for p in d.get("premises", [])]
        except (ProofFormatError, ProofMachineMismatch):
            raise
        except Exception as e:  # parse errors, missing keys, wrong types
            raise ProofFormatError(f"malformed proof node: {e}") from None
        evidence: Any = None
        if rule in LEAF_RULES or rule == "INIT":
            evidence = SideConditionReport(ev.get("kind", kind), bool(ev.get("verdict")))
        elif rule in ("CONV", "DIV") and premises:
            evidence = premises[0].conclusion.args[0]
        elif rule == "PROG" and len(premises) > 1:
            evidence = premises[1].conclusion.args[1].left
        elif ref is not None:
            pr = ev.get("projection") or {}
            evidence = ProjectionReport(bool(pr.get("equal")), int(pr.get("depth", 0)),
                                        int(pr.get("source_words", 0)),
                                        int(pr.get("refined_words", 0)))
        return ProofTree(Judgment(tag, kind, args), rule, premises, evidence, ref)

    return node(data.get("tree"))
