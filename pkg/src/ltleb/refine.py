"""Refinements that make convergence and divergence provable with a variant.

refine_for_conv(M, phi) builds a machine that runs M on a shadow copy w of
the state, buffers the phi-states it passes in a list l and replays them on
the visible variables once a !phi-state is reached; len(l) is then a variant
for var_c. refine_for_div(M, phi) records which !phi-states have been left,
so that the set of not yet visited !phi-states shrinks on every !phi-step.

Both constructions are applied to the trivial extension of M, whose traces
are all infinite; the refined machine is checked against it by comparing the
projected trace sets up to a bounded depth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from . import hfset as H
from .fol import IndeterminateError, check_var_c, check_var_d
from .hfset import EMPTY, HF
from .machine import (
    DEFAULT_NODE_BUDGET, Event, Machine, StateGraph, build_graph, to_source,
    trivial_extension,
)
from .oracle import Verdict, check_conv, check_div
from .speclang import print_formula, print_machine, print_term, tokenize
from .syntax import (
    TRUE, Assign, Call, Eq, Exists, Formula, Lit, Not, Param, Term, Var, conj,
    disj, neg, set_of, subst, subst_assign, subst_term,
)

PROJECTION_DEPTH = 12
WORD_BUDGET = 200_000
NIL = Lit(H.encode_list([]))


class RefinementRefused(ValueError):
    """The source machine does not satisfy the refinement's precondition."""

    def __init__(self, message: str, verdict: Optional[Verdict] = None):
        super().__init__(message)
        self.verdict = verdict


@dataclass
class Refinement:
    kind: str  # "conv" or "div"
    source: Machine  # the trivially extended source machine
    machine: Machine
    phi: Formula
    variant: Term
    events: Dict[str, Dict[str, str]]
    variant_kind: str = "list-length"
    bounds: Tuple[Tuple[str, HF], ...] = ()

    def to_text(self) -> str:
        return print_machine(to_source(self.machine))

    def sidecar(self) -> dict:
        return {
            "kind": self.kind,
            "source": self.source.name,
            "refined": self.machine.name,
            "phi": print_formula(self.phi),
            "variant": print_term(self.variant),
            "variant_kind": self.variant_kind,
            "events": self.events,
            "bounds": {k: H.format_hf(v) for k, v in self.bounds},
        }

    def sidecar_json(self) -> str:
        return json.dumps(self.sidecar(), indent=2, sort_keys=True)


# -- helpers ------------------------------------------------------------------

class _Fresh:
    """Identifiers not occurring anywhere in the printed source machine."""

    def __init__(self, m: Machine):
        self.used = {t.text for t in tokenize(print_machine(to_source(m)))}

    def __call__(self, base: str) -> str:
        name, k = base, 1
        while name in self.used:
            name, k = f"{base}{k}", k + 1
        self.used.add(name)
        return name


def _assign(var: str, expr: Term) -> Assign:
    return Assign(var, ":|", pred=Eq(Var(var + "'"), expr), domain=set_of([expr]))


def _tuple_term(names: Sequence[str]) -> Term:
    return Call("tuple", tuple(Var(n) for n in names))


def _projections(t: Term, k: int) -> List[Term]:
    """Terms selecting the components of a right-nested k-tuple."""
    if k == 1:
        return [t]
    out = []
    for _ in range(k - 1):
        out.append(Call("fst", (t,)))
        t = Call("snd", (t,))
    return out + [t]


def _enabled_formula(e: Event, ren: Dict[str, Term]) -> Formula:
    g = subst(e.guard, ren)
    for p in reversed(e.params):
        g = Exists(p.name, subst_term(p.domain, ren), g)
    return g


def _require(verdict: Verdict, what: str) -> None:
    if verdict.value == "indeterminate":
        raise RefinementRefused(f"{what} undecided: {verdict.reason}", verdict)
    if not verdict.holds:
        raise RefinementRefused(f"precondition {what} fails on the trivial extension", verdict)


# -- convergence --------------------------------------------------------------

def refine_for_conv(machine: Machine, phi: Formula,
                    budget: int = DEFAULT_NODE_BUDGET) -> Refinement:
    src = trivial_extension(machine)
    g = build_graph(src, budget)
    _require(check_conv(g, phi), "conv")
    witness = next(i for i in range(len(g.nodes)) if not g.holds(i, phi))
    vs = src.variables
    fresh = _Fresh(src)
    ws = [fresh("w_" + v) for v in vs]
    l, s, u = fresh("l"), fresh("s"), fresh("u")
    to_w = {v: Var(w) for v, w in zip(vs, ws)}
    target = dict(zip(vs, ws))
    zero, one, two = (Lit(H.von_neumann(k)) for k in range(3))
    lv, sv, uv = Var(l), Var(s), Var(u)

    init_acts = [subst_assign(a, to_w, target) for a in src.init.actions]
    init_acts += [_assign(v, Lit(x)) for v, x in zip(vs, g.nodes[witness])]
    init_acts += [_assign(l, NIL), _assign(s, zero), _assign(u, zero)]
    init = Event("init", (), TRUE, tuple(init_acts))

    some_enabled = disj(_enabled_formula(e, to_w) for e in src.events)
    events = [
        Event(fresh("e_firstA"), (), conj([Eq(uv, zero), neg(some_enabled)]),
              tuple([_assign(s, one), _assign(u, two)]
                    + [_assign(v, Var(w)) for v, w in zip(vs, ws)])),
        Event(fresh("e_firstB"), (), conj([Eq(uv, zero), some_enabled]),
              (_assign(u, one),)),
    ]
    emap: Dict[str, Dict[str, str]] = {
        "": {"firstA": events[0].name, "firstB": events[1].name}}
    phi_w = subst(phi, to_w)
    w_tuple = _tuple_term(ws)
    head = _projections(Call("head", (lv,)), len(vs))
    running = [Eq(sv, zero), Eq(uv, one)]
    for e in src.events:
        g_w = subst(e.guard, to_w)
        params = tuple(Param(p.name, subst_term(p.domain, to_w)) for p in e.params)
        acts = tuple(subst_assign(a, to_w, target) for a in e.actions)
        ea = Event(fresh(f"{e.name}_a"), params, conj([g_w, phi_w] + running),
                   acts + (_assign(l, Call("append", (lv, w_tuple))),))
        eb = Event(fresh(f"{e.name}_b"), params,
                   conj([g_w, neg(phi_w)] + running + [Not(Eq(lv, NIL))]),
                   acts + (_assign(s, one),)
                   + tuple(_assign(v, h) for v, h in zip(vs, head))
                   + (_assign(l, Call("append", (Call("tail", (lv,)), w_tuple))),))
        ec = Event(fresh(f"{e.name}_c"), params,
                   conj([g_w, neg(phi_w)] + running + [Eq(lv, NIL)]),
                   acts + (_assign(s, one),)
                   + tuple(_assign(v, Var(w)) for v, w in zip(vs, ws)))
        events += [ea, eb, ec]
        emap[e.name] = {"a": ea.name, "b": eb.name, "c": ec.name}
    er = Event(fresh("e_r"), (), conj([Not(Eq(lv, NIL)), Eq(sv, one), Eq(uv, one)]),
               tuple(_assign(v, h) for v, h in zip(vs, head))
               + (_assign(l, Call("tail", (lv,))),))
    es = Event(fresh("e_s"), (), conj([Eq(lv, NIL), Eq(sv, one), Eq(uv, one)]),
               (_assign(s, zero),))
    events += [er, es]
    emap[""].update({"r": er.name, "s": es.name})

    refined = Machine(
        name=fresh(src.name + "_conv"), atoms=src.atoms, constants=src.constants,
        variables=tuple(vs) + tuple(ws) + (l, s, u), init=init, events=tuple(events),
        formulas=src.formulas)
    return Refinement("conv", src, refined, phi, Call("len", (lv,)), emap)


def conv_projection(ref: Refinement):
    """Select states with s = 1 and keep the source variables."""
    vs = ref.source.variables
    s_index = len(ref.machine.variables) - 2  # variables end with (l, s, u)
    one = H.von_neumann(1)

    def project(state):
        return tuple(state[:len(vs)]) if state[s_index] == one else None

    return project


# -- divergence ---------------------------------------------------------------

def refine_for_div(machine: Machine, phi: Formula, variant: str = "auto",
                   budget: int = DEFAULT_NODE_BUDGET) -> Refinement:
    """variant: "tuple" (per-variable value sets, Kuratowski tuple of
    differences), "cardinality" (one set of visited !phi-states, variant is the
    number of unvisited ones) or "auto" (tuple if it verifies, else cardinality).
    """
    src = trivial_extension(machine)
    g = build_graph(src, budget)
    _require(check_div(g, phi), "div")
    if variant == "auto":
        ref = _div_tuple(src, g, phi)
        if variant_verified(ref, budget):
            return ref
        return _div_cardinality(src, g, phi)
    if variant == "tuple":
        return _div_tuple(src, g, phi)
    if variant == "cardinality":
        return _div_cardinality(src, g, phi)
    raise ValueError(f"unknown variant kind {variant!r}")


def _split_events(src: Machine, phi: Formula, extra: Tuple[Assign, ...], fresh):
    events, emap = [], {}
    for e in src.events:
        plus = Event(fresh(f"{e.name}_plus"), e.params, conj([e.guard, phi]), e.actions)
        minus = Event(fresh(f"{e.name}_minus"), e.params, conj([e.guard, neg(phi)]),
                      e.actions + extra)
        events += [plus, minus]
        emap[e.name] = {"plus": plus.name, "minus": minus.name}
    return events, emap


def _div_tuple(src: Machine, g: StateGraph, phi: Formula) -> Refinement:
    vs = src.variables
    fresh = _Fresh(src)
    cs = [fresh("c_" + v) for v in vs]
    bs = [fresh("b_" + v) for v in vs]
    neg_nodes = [i for i in range(len(g.nodes)) if not g.holds(i, phi)]
    bounds = [H.hfset(g.nodes[i][k] for i in neg_nodes) for k in range(len(vs))]
    init = replace(src.init, actions=src.init.actions
                   + tuple(_assign(c, Lit(EMPTY)) for c in cs)
                   + tuple(_assign(b, Lit(m)) for b, m in zip(bs, bounds)))
    # the value left behind (before the step) is recorded
    extra = tuple(_assign(c, Call("union", (Var(c), set_of([Var(v)]))))
                  for c, v in zip(cs, vs))
    events, emap = _split_events(src, phi, extra, fresh)
    variant = Call("tuple", tuple(Call("diff", (Var(b), Var(c))) for b, c in zip(bs, cs)))
    m = Machine(fresh(src.name + "_div"), src.atoms, src.constants,
                tuple(vs) + tuple(cs) + tuple(bs), init, tuple(events), src.formulas)
    return Refinement("div", src, m, phi, variant, emap, "tuple",
                      tuple(zip(bs, bounds)))


def _div_cardinality(src: Machine, g: StateGraph, phi: Formula) -> Refinement:
    vs = src.variables
    fresh = _Fresh(src)
    c, b = fresh("c"), fresh("b")
    bound = H.hfset(H.encode_tuple(g.nodes[i]) for i in range(len(g.nodes))
                    if not g.holds(i, phi))
    init = replace(src.init, actions=src.init.actions
                   + (_assign(c, Lit(EMPTY)), _assign(b, Lit(bound))))
    extra = (_assign(c, Call("union", (Var(c), set_of([_tuple_term(vs)])))),)
    events, emap = _split_events(src, phi, extra, fresh)
    variant = Call("card", (Call("diff", (Var(b), Var(c))),))
    m = Machine(fresh(src.name + "_div"), src.atoms, src.constants,
                tuple(vs) + (c, b), init, tuple(events), src.formulas)
    return Refinement("div", src, m, phi, variant, emap, "cardinality", ((b, bound),))


def div_projection(ref: Refinement):
    k = len(ref.source.variables)
    return lambda state: tuple(state[:k])


# -- verification -------------------------------------------------------------

def variant_verified(ref: Refinement, budget: int = DEFAULT_NODE_BUDGET) -> bool:
    g = build_graph(ref.machine, budget)
    if not g.complete:
        return False
    check = check_var_c if ref.kind == "conv" else check_var_d
    return check(g, ref.variant, ref.phi).verdict


@dataclass(frozen=True)
class EdgeFacts:
    """The three edge-wise facts behind the divergence variant."""
    phi_edges_preserve: bool
    neg_edges_decrease: bool
    nonempty_on_neg: bool
    witness: Optional[Tuple[int, str, int]] = None

    @property
    def ok(self) -> bool:
        return self.phi_edges_preserve and self.neg_edges_decrease and self.nonempty_on_neg


def div_edge_facts(ref: Refinement, g: StateGraph) -> EdgeFacts:
    preserve = decrease = nonempty = True
    witness = None
    t = ref.variant
    for i in range(len(g.nodes)):
        ti = g.term_value(i, t)
        if g.holds(i, ref.phi):
            for e in g.out[i]:
                if g.term_value(e.dst, t) != ti:
                    preserve = False
                    witness = witness or (i, e.event, e.dst)
        elif g.out[i]:
            if ti == EMPTY:
                nonempty = False
                witness = witness or (i, "", i)
            for e in g.out[i]:
                if not H.lt(g.term_value(e.dst, t), ti):
                    decrease = False
                    witness = witness or (i, e.event, e.dst)
    return EdgeFacts(preserve, decrease, nonempty, witness)


def _over(n: int, budget: int) -> None:
    if n > budget:
        raise IndeterminateError(f"more than {budget} trace words to compare")


def source_words(g: StateGraph, depth: int, budget: int = WORD_BUDGET) -> set:
    """State words of length `depth` along paths of a deadlock-free graph (cached on g)."""
    cached = g.words.get((depth, budget))
    if cached is not None:
        return cached
    out = set()
    frontier = {(i,) for i in g.initial}
    for _ in range(depth - 1):
        frontier = {w + (j,) for w in frontier for j in g.succ(w[-1])}
        _over(len(frontier), budget)
    for w in frontier:
        out.add(tuple(g.nodes[i] for i in w))
    g.words[(depth, budget)] = out
    return out


def projected_words(g: StateGraph, project, depth: int, budget: int = WORD_BUDGET) -> set:
    """First `depth` selected-and-projected states along paths of g.

    Explores (node, word) pairs; a pair is expanded at most once.
    """
    out = set()
    seen = set()
    stack = []
    for i in g.initial:
        p = project(g.nodes[i])
        stack.append((i, () if p is None else (p,)))
    while stack:
        i, w = stack.pop()
        if (i, w) in seen:
            continue
        seen.add((i, w))
        _over(len(seen), 4 * budget)
        if len(w) == depth:
            out.add(w)
            continue
        for j in g.succ(i):
            p = project(g.nodes[j])
            stack.append((j, w if p is None else w + (p,)))
    return out


@dataclass(frozen=True)
class ProjectionReport:
    equal: bool
    depth: int
    source_count: int
    refined_count: int
    missing: Optional[tuple] = None  # a source word the refinement cannot produce
    extra: Optional[tuple] = None  # a projected word the source cannot produce


def projection_equivalent(ref: Refinement, depth: int = PROJECTION_DEPTH,
                          budget: int = DEFAULT_NODE_BUDGET,
                          word_budget: int = WORD_BUDGET,
                          graphs: Optional[Tuple[StateGraph, StateGraph]] = None) -> ProjectionReport:
    """Compare source words with projected refined words of length depth.

    graphs, if given, are the already built (source, refined) graphs.
    Raises IndeterminateError if a graph is truncated or either side has more
    than word_budget words.
    """
    if graphs is None:
        graphs = build_graph(ref.source, budget), build_graph(ref.machine, budget)
    gs, gr = graphs
    if not (gs.complete and gr.complete):
        raise IndeterminateError("projection check needs complete graphs")
    project = conv_projection(ref) if ref.kind == "conv" else div_projection(ref)
    a = source_words(gs, depth, word_budget)
    b = projected_words(gr, project, depth, word_budget)
    missing = min(a - b) if a - b else None
    extra = min(b - a) if b - a else None
    return ProjectionReport(a == b, depth, len(a), len(b), missing, extra)


# -- sufficiently refined -------------------------------------------------------

@dataclass
class FormulaReport:
    name: str
    phi: Formula
    conv: bool
    div: bool
    conv_variant: Optional[Term] = None
    div_variant: Optional[Term] = None
    conv_via_refinement: bool = False
    div_via_refinement: bool = False

    @property
    def ok(self) -> bool:
        if not (self.conv or self.div):
            return False
        conv_ok = not self.conv or self.conv_variant is not None
        div_ok = not self.div or self.div_variant is not None
        return conv_ok and div_ok

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "phi": print_formula(self.phi),
            "conv": self.conv,
            "div": self.div,
            "conv_variant": None if self.conv_variant is None else print_term(self.conv_variant),
            "div_variant": None if self.div_variant is None else print_term(self.div_variant),
            "conv_via_refinement": self.conv_via_refinement,
            "div_via_refinement": self.div_via_refinement,
            "ok": self.ok,
        }


@dataclass
class SufficiencyReport:
    formulas: List[FormulaReport] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(f.ok for f in self.formulas)

    @property
    def failing(self) -> List[str]:
        return [f.name for f in self.formulas if not f.ok]

    def to_json(self) -> dict:
        return {"ok": self.ok, "formulas": [f.to_json() for f in self.formulas]}


def candidate_variants(m: Machine, hints: Sequence[Term] = ()) -> List[Term]:
    """Hints first, then each state variable, its cardinality, and {}."""
    out = list(hints)
    for v in m.variables:
        out += [Var(v), Call("card", (Var(v),))]
    out.append(Lit(EMPTY))
    seen, uniq = set(), []
    for t in out:
        if t not in seen:
            seen.add(t)
            uniq.append(t)
    return uniq


def find_variant(g: StateGraph, kind: str, phi: Formula, candidates: Sequence[Term]):
    check = check_var_c if kind == "conv" else check_var_d
    for t in candidates:
        try:
            if check(g, t, phi).verdict:
                return t
        except H.HFError:
            continue
    return None


def sufficiently_refined(machine: Machine, formulas: Sequence[Tuple[str, Formula]],
                         hints: Optional[Dict[str, Sequence[Term]]] = None,
                         auto_refine: bool = True,
                         budget: int = DEFAULT_NODE_BUDGET) -> SufficiencyReport:
    """For each (name, phi): conv/div of phi on the trivial extension and a
    validated variant for each that holds; with auto_refine, a variant carried
    by the Lemma-style refinement counts when no direct candidate works.
    """
    hints = hints or {}
    ext = trivial_extension(machine)
    g = build_graph(ext, budget)
    if not g.complete:
        raise IndeterminateError(f"state graph truncated at {len(g.nodes)} nodes")
    report = SufficiencyReport()
    for name, phi in formulas:
        cands = candidate_variants(ext, hints.get(name, ()))
        fr = FormulaReport(name, phi, check_conv(g, phi).holds, check_div(g, phi).holds)
        if fr.conv:
            fr.conv_variant = find_variant(g, "conv", phi, cands)
            if fr.conv_variant is None and auto_refine:
                ref = refine_for_conv(machine, phi, budget)
                if variant_verified(ref, budget):
                    fr.conv_variant, fr.conv_via_refinement = ref.variant, True
        if fr.div:
            fr.div_variant = find_variant(g, "div", phi, cands)
            if fr.div_variant is None and auto_refine:
                ref = refine_for_div(machine, phi, budget=budget)
                if variant_verified(ref, budget):
                    fr.div_variant, fr.div_via_refinement = ref.variant, True
        report.formulas.append(fr)
    return report
