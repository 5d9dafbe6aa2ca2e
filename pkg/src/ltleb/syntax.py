"""Abstract syntax shared by the parser, the evaluator and the checkers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

from .hfset import HF


# -- terms ------------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Lit:
    value: HF


@dataclass(frozen=True)
class Call:
    op: str
    args: Tuple["Term", ...] = ()


@dataclass(frozen=True)
class SetOf:
    """Set display {t1, ..., tn} with at least one non-literal item."""
    items: Tuple["Term", ...]


Term = Union[Var, Lit, Call, SetOf]

# name -> arity (None = variadic)
BUILTINS = {
    "Atoms": 0,
    "BigUnion": 1,
    "TheUnique": 1,
    "Pair": 2,
    "tuple": None,
    "union": 2,
    "inter": 2,
    "diff": 2,
    "fst": 1,
    "snd": 1,
    "card": 1,
    "plus": 2,
    "len": 1,
    "head": 1,
    "tail": 1,
    "append": 2,
}


def set_of(items) -> Term:
    """Smart constructor: all-literal displays fold into a literal."""
    from .hfset import hfset

    items = tuple(items)
    if all(isinstance(t, Lit) for t in items):
        return Lit(hfset(t.value for t in items))
    return SetOf(items)


# -- state formulas ---------------------------------------------------------

@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class FalseF:
    pass


@dataclass(frozen=True)
class Member:
    left: Term
    right: Term


@dataclass(frozen=True)
class Eq:
    left: Term
    right: Term


@dataclass(frozen=True)
class Lt:
    left: Term
    right: Term


@dataclass(frozen=True)
class Le:
    left: Term
    right: Term


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Forall:
    var: str
    bound: Term
    body: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    bound: Term
    body: "Formula"


Formula = Union[TrueF, FalseF, Member, Eq, Lt, Le, Not, And, Or, Implies, Forall, Exists]

TRUE = TrueF()
FALSE = FalseF()


def conj(fs) -> Formula:
    fs = list(fs)
    if not fs:
        return TRUE
    out = fs[0]
    for f in fs[1:]:
        out = And(out, f)
    return out


def disj(fs) -> Formula:
    fs = list(fs)
    if not fs:
        return FALSE
    out = fs[0]
    for f in fs[1:]:
        out = Or(out, f)
    return out


def neg(f: Formula) -> Formula:
    """Negation that cancels a leading negation and flips constants."""
    if isinstance(f, Not):
        return f.body
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    return Not(f)


# -- temporal formulas ------------------------------------------------------

@dataclass(frozen=True)
class State:
    formula: Formula


@dataclass(frozen=True)
class Always:
    body: "Temporal"


@dataclass(frozen=True)
class AlwaysEventually:
    body: "Temporal"


@dataclass(frozen=True)
class EventuallyAlways:
    body: "Temporal"


@dataclass(frozen=True)
class Progress:
    antecedent: Formula
    body: "Temporal"


Temporal = Union[State, Always, AlwaysEventually, EventuallyAlways, Progress]


def modal_depth(f: Temporal) -> int:
    if isinstance(f, State):
        return 0
    return 1 + modal_depth(f.body)


def modal_word(f: Temporal) -> tuple:
    """The LTL formula denoted by f, as a nested token tuple.

    Different ASTs may denote the same LTL formula ([]<>[]x is both
    Always(EventuallyAlways x) and AlwaysEventually(Always x)); this flattens
    them. Adjacent <><> is merged since <> is idempotent.
    """
    toks = []
    g = f
    while True:
        if isinstance(g, State):
            toks.append(("S", g.formula))
            break
        if isinstance(g, Always):
            toks.append("[]")
        elif isinstance(g, AlwaysEventually):
            toks += ["[]", "<>"]
        elif isinstance(g, EventuallyAlways):
            toks += ["<>", "[]"]
        elif isinstance(g, Progress):
            toks += ["[]", ("->", g.antecedent), "<>"]
        else:
            raise TypeError(f"not a temporal formula: {g!r}")
        g = g.body
    out = []
    for t in toks:
        if t == "<>" and out and out[-1] == "<>":
            continue
        out.append(t)
    return tuple(out)


def same_formula(a: Temporal, b: Temporal) -> bool:
    return modal_word(a) == modal_word(b)


# -- machine source ---------------------------------------------------------

@dataclass(frozen=True)
class Assign:
    """`var := expr`, `var :in expr` or `var :| pred from domain`."""
    var: str
    kind: str
    expr: Optional[Term] = None
    pred: Optional[Formula] = None
    domain: Optional[Term] = None


@dataclass(frozen=True)
class Param:
    name: str
    domain: Term


@dataclass(frozen=True)
class EventDef:
    name: str
    params: Tuple[Param, ...]
    guard: Formula
    actions: Tuple[Assign, ...]


@dataclass(frozen=True)
class SourceSpec:
    name: str
    atoms: Tuple[str, ...]
    constants: Tuple[Tuple[str, HF], ...]
    variables: Tuple[str, ...]
    init: Tuple[Assign, ...]
    events: Tuple[EventDef, ...]
    formulas: Tuple[Tuple[str, Formula], ...] = ()


def primed(name: str) -> str:
    return name + "'"


# -- substitution -----------------------------------------------------------

def term_vars(t: Term) -> set:
    if isinstance(t, Var):
        return {t.name}
    if isinstance(t, Lit):
        return set()
    if isinstance(t, Call):
        return set().union(*(term_vars(a) for a in t.args)) if t.args else set()
    return set().union(*(term_vars(a) for a in t.items))


def free_vars(f: Formula) -> set:
    if isinstance(f, (TrueF, FalseF)):
        return set()
    if isinstance(f, (Member, Eq, Lt, Le)):
        return term_vars(f.left) | term_vars(f.right)
    if isinstance(f, Not):
        return free_vars(f.body)
    if isinstance(f, (And, Or, Implies)):
        return free_vars(f.left) | free_vars(f.right)
    return term_vars(f.bound) | (free_vars(f.body) - {f.var})


def subst_term(t: Term, m: dict) -> Term:
    """Replace variables by terms (m maps names to terms)."""
    if isinstance(t, Var):
        return m.get(t.name, t)
    if isinstance(t, Lit):
        return t
    if isinstance(t, Call):
        return Call(t.op, tuple(subst_term(a, m) for a in t.args))
    return set_of(subst_term(a, m) for a in t.items)


def subst(f: Formula, m: dict) -> Formula:
    """Capture-avoiding only in the sense that bound names shadow m.

    Callers use fresh names for substituted variables, so capture cannot occur.
    """
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, (Member, Eq, Lt, Le)):
        return type(f)(subst_term(f.left, m), subst_term(f.right, m))
    if isinstance(f, Not):
        return Not(subst(f.body, m))
    if isinstance(f, (And, Or, Implies)):
        return type(f)(subst(f.left, m), subst(f.right, m))
    inner = {k: v for k, v in m.items() if k != f.var}
    return type(f)(f.var, subst_term(f.bound, m), subst(f.body, inner))


def rename(f: Formula, names: dict) -> Formula:
    return subst(f, {k: Var(v) for k, v in names.items()})


def subst_assign(a: Assign, m: dict, target: Optional[dict] = None) -> Assign:
    """Substitute in an assignment; `target` renames the assigned variable.

    Primed occurrences follow the target renaming too.
    """
    target = target or {}
    new_var = target.get(a.var, a.var)
    mm = dict(m)
    for old, new in target.items():
        mm[primed(old)] = Var(primed(new))
    return Assign(
        new_var,
        a.kind,
        None if a.expr is None else subst_term(a.expr, mm),
        None if a.pred is None else subst(a.pred, mm),
        None if a.domain is None else subst_term(a.domain, mm),
    )
