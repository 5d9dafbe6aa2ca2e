"""Evaluation of terms and bounded state formulas over HF(A), the successor
modality N(phi), and the first-order side conditions used by the proof rules
(leadsto, dlf, var_c, var_d), checked over a reachable state graph.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from . import hfset as H
from .hfset import EMPTY, HF, HFError
from .syntax import (
    And, Call, Eq, Exists, FalseF, Forall, Formula, Implies, Le, Lit, Lt, Member, Not,
    Or, SetOf, Term, TrueF, Var, conj, primed, subst,
)


class EvalError(HFError):
    """Unbound variable or an operator applied outside its domain."""


class IndeterminateError(Exception):
    """A check needed a complete graph but got a truncated one."""


# -- terms ------------------------------------------------------------------

def _list_parts(l: HF, op: str):
    n = H.as_natural(H.fst(l))
    if H.kpair_parts(l) is None or n is None:
        raise EvalError(f"{op}: argument is not a list")
    return n, H.snd(l)


def _tail(l: HF) -> HF:
    n, chain = _list_parts(l, "tail")
    if n == 0:
        return l
    return H.kpair(H.von_neumann(n - 1), H.snd(chain))


def _append(l: HF, x: HF) -> HF:
    xs = H.decode_list(l)
    if xs is None:
        raise EvalError("append: argument is not a list")
    return H.encode_list(xs + [x])


def _head(l: HF) -> HF:
    n, chain = _list_parts(l, "head")
    return H.fst(chain) if n else EMPTY


_OPS = {
    "BigUnion": H.big_union,
    "TheUnique": H.the_unique,
    "Pair": H.pair,
    "union": H.union,
    "inter": H.intersection,
    "diff": H.difference,
    "fst": H.fst,
    "snd": H.snd,
    "card": H.cardinality,
    "plus": H.nat_plus,
    "len": lambda l: H.von_neumann(_list_parts(l, "len")[0]),
    "head": _head,
    "tail": _tail,
    "append": _append,
}


def eval_term(t: Term, binding: Mapping[str, HF], atoms: HF = EMPTY) -> HF:
    if isinstance(t, Var):
        try:
            return binding[t.name]
        except KeyError:
            raise EvalError(f"unbound variable {t.name!r}") from None
    if isinstance(t, Lit):
        return t.value
    if isinstance(t, Call):
        if t.op == "Atoms":
            return atoms
        args = [eval_term(a, binding, atoms) for a in t.args]
        if t.op == "tuple":
            return H.encode_tuple(args)
        try:
            return _OPS[t.op](*args)
        except EvalError:
            raise
        except HFError as e:
            raise EvalError(str(e)) from None
    if isinstance(t, SetOf):
        return H.hfset(eval_term(a, binding, atoms) for a in t.items)
    raise TypeError(f"not a term: {t!r}")


def eval_formula(f: Formula, binding: Mapping[str, HF], atoms: HF = EMPTY) -> bool:
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Member):
        return H.member(eval_term(f.left, binding, atoms), eval_term(f.right, binding, atoms))
    if isinstance(f, Eq):
        return eval_term(f.left, binding, atoms) == eval_term(f.right, binding, atoms)
    if isinstance(f, Lt):
        return H.lt(eval_term(f.left, binding, atoms), eval_term(f.right, binding, atoms))
    if isinstance(f, Le):
        return H.leq(eval_term(f.left, binding, atoms), eval_term(f.right, binding, atoms))
    if isinstance(f, Not):
        return not eval_formula(f.body, binding, atoms)
    if isinstance(f, And):
        return eval_formula(f.left, binding, atoms) and eval_formula(f.right, binding, atoms)
    if isinstance(f, Or):
        return eval_formula(f.left, binding, atoms) or eval_formula(f.right, binding, atoms)
    if isinstance(f, Implies):
        return (not eval_formula(f.left, binding, atoms)) or eval_formula(f.right, binding, atoms)
    if isinstance(f, (Forall, Exists)):
        bound = eval_term(f.bound, binding, atoms)
        if bound.is_atom:
            raise EvalError(f"quantifier bound for {f.var!r} is an atom ({bound.atom})")
        inner = dict(binding)
        want = isinstance(f, Exists)
        for e in bound.elems:
            inner[f.var] = e
            if eval_formula(f.body, inner, atoms) == want:
                return want
        return not want
    raise TypeError(f"not a formula: {f!r}")


# -- the successor modality -------------------------------------------------

def next_formula(machine, phi: Formula) -> Formula:
    """N(phi): phi holds in every successor.

    For each event: forall params in domains . G -> forall v1' in D1 ... .
    (P1 & ... & Pk -> phi[v'/v]). Assigned variables range over their
    candidate domains; unassigned ones keep their value.
    """
    parts = []
    for ev in machine.events:
        after = {v: Var(primed(v)) for v in ev.assigned}
        body: Formula = subst(phi, after)
        if ev.assigned:
            body = Implies(conj(a.pred for a in ev.actions), body)
        for a in reversed(ev.actions):
            body = Forall(primed(a.var), a.domain, body)
        body = Implies(ev.guard, body)
        for p in reversed(ev.params):
            body = Forall(p.name, p.domain, body)
        parts.append(body)
    return conj(parts)


# -- side conditions --------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    state: int
    event: Optional[str] = None
    binding: Optional[tuple] = None
    successor: Optional[int] = None


@dataclass(frozen=True)
class SideConditionReport:
    kind: str
    verdict: bool
    witness: Optional[Witness] = None
    reason: str = ""

    def to_json(self, graph) -> dict:
        out = {"kind": self.kind, "verdict": self.verdict, "reason": self.reason}
        if self.witness is not None:
            w = self.witness
            out["witness"] = {
                "state": graph.state_json(w.state),
                "event": w.event,
                "binding": None if w.binding is None else {k: str(v) for k, v in w.binding},
                "successor": None if w.successor is None else graph.state_json(w.successor),
            }
        return out


def _need_complete(graph, kind):
    if not graph.complete:
        raise IndeterminateError(f"{kind}: state graph truncated at {len(graph.nodes)} nodes")


def _edge_witness(e) -> Witness:
    return Witness(e.src, e.event, e.binding, e.dst)


def check_leadsto(graph, phi1: Formula, phi2: Formula) -> SideConditionReport:
    _need_complete(graph, "leadsto")
    for i in range(len(graph.nodes)):
        if not graph.holds(i, phi1):
            continue
        for e in graph.out[i]:
            if not graph.holds(e.dst, phi2):
                return SideConditionReport("leadsto", False, _edge_witness(e),
                                           "successor of a phi1-state violates phi2")
    return SideConditionReport("leadsto", True)


def check_dlf(graph, phi: Formula) -> SideConditionReport:
    _need_complete(graph, "dlf")
    for i in range(len(graph.nodes)):
        if graph.holds(i, phi) and not graph.out[i]:
            return SideConditionReport("dlf", False, Witness(i), "deadlocked phi-state")
    return SideConditionReport("dlf", True)


def _decreases(graph, t: Term, i: int, kind: str):
    """None if every edge out of i strictly decreases t and t != {} at i."""
    ti = graph.term_value(i, t)
    if ti == EMPTY:
        return SideConditionReport(kind, False, Witness(i), "variant is empty at an enabled state")
    for e in graph.out[i]:
        if not H.lt(graph.term_value(e.dst, t), ti):
            return SideConditionReport(kind, False, _edge_witness(e), "variant does not decrease")
    return None


def check_var_c(graph, t: Term, phi: Formula) -> SideConditionReport:
    _need_complete(graph, "var_c")
    for i in range(len(graph.nodes)):
        if graph.out[i] and graph.holds(i, phi):
            bad = _decreases(graph, t, i, "var_c")
            if bad is not None:
                return bad
    return SideConditionReport("var_c", True)


def check_var_d(graph, t: Term, phi: Formula) -> SideConditionReport:
    _need_complete(graph, "var_d")
    for i in range(len(graph.nodes)):
        if not graph.out[i]:
            continue
        if graph.holds(i, phi):
            ti = graph.term_value(i, t)
            for e in graph.out[i]:
                if not H.leq(graph.term_value(e.dst, t), ti):
                    return SideConditionReport("var_d", False, _edge_witness(e),
                                               "variant increases on a phi-state")
        else:
            bad = _decreases(graph, t, i, "var_d")
            if bad is not None:
                return bad
    return SideConditionReport("var_d", True)


def recheck_witness(graph, report: SideConditionReport, *args) -> bool:
    """True iff the failure witness, evaluated on its own, refutes the condition."""
    w = report.witness
    if w is None:
        return False
    kind = report.kind
    if kind == "leadsto":
        phi1, phi2 = args
        return graph.holds(w.state, phi1) and not graph.holds(w.successor, phi2)
    if kind == "dlf":
        (phi,) = args
        return graph.holds(w.state, phi) and not graph.out[w.state]
    t, phi = args
    ts = graph.term_value(w.state, t)
    strict = kind == "var_c" or not graph.holds(w.state, phi)
    if kind == "var_c" and not graph.holds(w.state, phi):
        return False
    if not graph.out[w.state]:
        return False
    if w.successor is None:
        return strict and ts == EMPTY
    td = graph.term_value(w.successor, t)
    return not (H.lt(td, ts) if strict else H.leq(td, ts))
