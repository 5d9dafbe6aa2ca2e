"""Surface language for machines and formulas: lexer, recursive-descent parser
and printer.

Machine files (``.ebm``)::

    machine Counter
    atoms a, b
    constants Nat10 = 11
    variables n
    init
      n := 10
    end
    event dec
      where n != 0
    then
      n :| n' < n from Nat10
    end
    formulas
      zero : n = 0;

Temporal formulas use ``[]`` and ``<>`` and must lie in the fragment
``phi | [] F | [] <> F | <> [] F | [] (phi -> <> F)`` with ``phi`` a state
formula.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .hfset import EMPTY, HF, atom, encode_list, format_hf, von_neumann
from .syntax import (
    BUILTINS, FALSE, TRUE, And, Always, AlwaysEventually, Assign, Call, Eq, EventDef,
    EventuallyAlways, Exists, FalseF, Forall, Formula, Implies, Le, Lit, Lt, Member,
    Not, Or, Param, Progress, SetOf, SourceSpec, State, Temporal, Term, TrueF, Var,
    set_of,
)

KEYWORDS = {
    "machine", "atoms", "constants", "variables", "init", "event", "any", "from",
    "where", "then", "end", "in", "forall", "exists", "true", "false", "formulas",
    "skip", "nil",
}
RESERVED = KEYWORDS | set(BUILTINS)

FRAGMENT = "not in □LTL fragment"


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str
    severity: str = "error"

    def __str__(self):
        return f"{self.line}:{self.col}: {self.severity}: {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostics: Sequence[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


# -- lexer ------------------------------------------------------------------

@dataclass(frozen=True)
class Tok:
    kind: str  # ident | num | sym | eof
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<kin>:in(?![A-Za-z0-9_]))
  | (?P<sym>\[\]|<>|->|<=|!=|:=|:\||[<=!&|(){},.;:])
  | (?P<num>[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*'?)
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> List[Tok]:
    toks = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError([Diagnostic(line, col, f"unexpected character {text[pos]!r}")])
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind == "kin":
                toks.append(Tok("sym", ":in", line, col))
            elif kind in ("sym", "num", "ident"):
                toks.append(Tok(kind, s, line, col))
            col += len(s)
        pos = m.end()
    toks.append(Tok("eof", "", line, col))
    return toks


# -- parser -----------------------------------------------------------------

_RELOPS = {"in": Member, "=": Eq, "<": Lt, "<=": Le}


@dataclass
class _Context:
    strict: bool = False
    atoms: Dict[str, HF] = field(default_factory=dict)
    constants: Dict[str, HF] = field(default_factory=dict)
    variables: List[str] = field(default_factory=list)
    formulas: Dict[str, Formula] = field(default_factory=dict)
    events: List[str] = field(default_factory=list)


class _Backtrack(Exception):
    pass


class Parser:
    def __init__(self, text: str, ctx: Optional[_Context] = None):
        self.toks = tokenize(text)
        self.i = 0
        self.ctx = ctx or _Context()
        self.scope: List[str] = []

    # token helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("sym", "ident") and t.text == text

    def error(self, msg: str, tok: Optional[Tok] = None):
        t = tok or self.tok
        raise ParseError([Diagnostic(t.line, t.col, msg)])

    def describe(self, t: Tok) -> str:
        return "end of input" if t.kind == "eof" else repr(t.text)

    def advance(self) -> Tok:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.describe(self.tok)}")
        return self.advance()

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def ident(self, what: str = "identifier") -> Tok:
        t = self.tok
        if t.kind != "ident" or t.text in RESERVED:
            self.error(f"expected {what}, found {self.describe(t)}")
        return self.advance()

    def expect_eof(self):
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.describe(self.tok)}")

    # terms
    def term(self) -> Term:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Lit(von_neumann(int(t.text)))
        if self.accept("{"):
            items = []
            if not self.at("}"):
                items.append(self.term())
                while self.accept(","):
                    items.append(self.term())
            self.expect("}")
            return set_of(items)
        if t.kind == "ident":
            name = t.text
            if name == "nil":
                self.advance()
                return Lit(encode_list([]))
            if name in BUILTINS:
                self.advance()
                arity = BUILTINS[name]
                args = []
                if arity == 0:
                    if self.accept("("):
                        self.expect(")")
                    return Call(name, ())
                self.expect("(")
                if not self.at(")"):
                    args.append(self.term())
                    while self.accept(","):
                        args.append(self.term())
                self.expect(")")
                if arity is not None and len(args) != arity:
                    self.error(f"{name} expects {arity} argument(s), got {len(args)}", t)
                return Call(name, tuple(args))
            if name in KEYWORDS:
                self.error(f"expected a term, found {self.describe(t)}")
            self.advance()
            return self.resolve(name, t)
        self.error(f"expected a term, found {self.describe(t)}")

    def resolve(self, name: str, t: Tok) -> Term:
        if name in self.scope:
            return Var(name)
        ctx = self.ctx
        if name in ctx.variables:
            return Var(name)
        if name in ctx.constants:
            return Lit(ctx.constants[name])
        if name in ctx.atoms:
            return Lit(ctx.atoms[name])
        if ctx.strict:
            self.error(f"undeclared identifier {name!r}", t)
        return Var(name)

    # state formulas
    def formula(self) -> Formula:
        return self.implication()

    def implication(self) -> Formula:
        left = self.disjunction()
        # `-> <>` belongs to an enclosing progress formula, never to a state formula
        if self.at("->") and not (self.peek().kind == "sym" and self.peek().text == "<>"):
            self.advance()
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.at("|"):
            self.advance()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.unary()
        while self.at("&"):
            self.advance()
            f = And(f, self.unary())
        return f

    def unary(self) -> Formula:
        t = self.tok
        if self.accept("!"):
            return Not(self.unary())
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if self.at("forall") or self.at("exists"):
            self.advance()
            var = self.bound_name()
            self.expect("in")
            bound = self.term()
            self.expect(".")
            self.scope.append(var)
            try:
                body = self.formula()
            finally:
                self.scope.pop()
            return (Forall if t.text == "forall" else Exists)(var, bound, body)
        if self.accept("("):
            f = self.formula()
            self.expect(")")
            return f
        if t.kind == "sym" and t.text in ("[]", "<>"):
            self.error(f"temporal operator {t.text!r} inside a state formula: {FRAGMENT}")
        if (t.kind == "ident" and t.text in self.ctx.formulas and t.text not in self.scope
                and not self._relop_at(self.peek())):
            self.advance()
            return self.ctx.formulas[t.text]
        left = self.term()
        op = self.tok
        if op.text == "!=" and op.kind == "sym":
            self.advance()
            return Not(Eq(left, self.term()))
        if self._relop_at(op):
            self.advance()
            return _RELOPS[op.text](left, self.term())
        self.error(f"expected a relation (in, =, !=, <, <=), found {self.describe(op)}")

    @staticmethod
    def _relop_at(t: Tok) -> bool:
        return (t.kind == "sym" and t.text in ("=", "!=", "<", "<=")) or (
            t.kind == "ident" and t.text == "in")

    def bound_name(self) -> str:
        t = self.tok
        if t.kind != "ident" or t.text in RESERVED:
            self.error(f"expected a bound variable, found {self.describe(t)}")
        self.advance()
        return t.text

    # temporal formulas
    def temporal(self) -> Temporal:
        t = self.tok
        if self.at("[]"):
            self.advance()
            if self.at("<>"):
                self.advance()
                return AlwaysEventually(self.temporal())
            if self.at("("):
                prog = self.try_progress()
                if prog is not None:
                    return prog
            return Always(self.temporal())
        if self.at("<>"):
            self.advance()
            if self.at("[]"):
                self.advance()
                return EventuallyAlways(self.temporal())
            self.error(f"'<>' must be followed by '[]' or occur as '[] (phi -> <> psi)': {FRAGMENT}", t)
        if self.at("("):
            # either a parenthesised state formula or a parenthesised temporal one
            save = self.i
            try:
                return State(self.formula())
            except ParseError as first:
                err_state, pos_state = first, self.i
            self.i = save
            self.advance()
            try:
                f = self.temporal()
                self.expect(")")
                return f
            except ParseError as second:
                if self.i >= pos_state:
                    raise
                raise err_state from None
        return State(self.formula())

    def try_progress(self) -> Optional[Temporal]:
        save = self.i
        try:
            self.expect("(")
            ante = self.formula()
            if not (self.at("->") and self.peek().text == "<>"):
                raise _Backtrack
        except (ParseError, _Backtrack):
            self.i = save
            return None
        self.advance()
        self.advance()
        body = self.temporal()
        self.expect(")")
        return Progress(ante, body)

    def temporal_top(self) -> Temporal:
        f = self.temporal()
        t = self.tok
        if t.kind == "sym" and t.text in ("&", "|", "->"):
            self.error(f"boolean combination of temporal formulas: {FRAGMENT}")
        if t.kind == "ident" and t.text in ("U", "W"):
            self.error(f"until operator {t.text!r}: {FRAGMENT}")
        self.expect_eof()
        return f

    # machines
    def machine(self) -> SourceSpec:
        if self.tok.kind == "eof":
            self.error("no machine declared")
        self.expect("machine")
        name = self.ident("machine name").text
        ctx = self.ctx
        ctx.strict = True
        taken = {}

        def declare(tok: Tok, kind: str):
            if tok.text.endswith("'"):
                self.error(f"{kind} name {tok.text!r} must not be primed", tok)
            if tok.text in taken:
                self.error(f"{kind} {tok.text!r} already declared as {taken[tok.text]}", tok)
            taken[tok.text] = kind

        atoms_ = []
        if self.accept("atoms"):
            while True:
                t = self.ident("atom name")
                declare(t, "atom")
                atoms_.append(t.text)
                ctx.atoms[t.text] = atom(t.text)
                if not self.accept(","):
                    break
        consts = []
        if self.accept("constants"):
            while True:
                t = self.ident("constant name")
                declare(t, "constant")
                self.expect("=")
                at = self.tok
                v = self.term()
                if not isinstance(v, Lit):
                    self.error("constant value must be a literal", at)
                consts.append((t.text, v.value))
                ctx.constants[t.text] = v.value
                if not self.accept(","):
                    break
        self.expect("variables")
        vars_ = []
        while True:
            t = self.ident("variable name")
            declare(t, "variable")
            vars_.append(t.text)
            if not self.accept(","):
                break
        ctx.variables = []  # init sees only primed variables
        init_tok = self.expect("init")
        self.scope = [v + "'" for v in vars_]
        init = self.actions(vars_, end_tok=init_tok)
        assigned = {a.var for a in init}
        for v in vars_:
            if v not in assigned:
                self.error(f"variable {v!r} is not initialised", init_tok)
        self.scope = []
        ctx.variables = vars_
        events = []
        while self.at("event"):
            self.advance()
            t = self.ident("event name")
            declare(t, "event")
            events.append(self.event_body(t.text, vars_))
        formulas = []
        if self.accept("formulas"):
            while self.tok.kind == "ident" and self.tok.text not in RESERVED:
                t = self.advance()
                declare(t, "formula")
                self.expect(":")
                f = self.formula()
                self.expect(";")
                formulas.append((t.text, f))
                ctx.formulas[t.text] = f
        self.expect_eof()
        return SourceSpec(name, tuple(atoms_), tuple(consts), tuple(vars_), tuple(init),
                          tuple(events), tuple(formulas))

    def event_body(self, name: str, vars_: List[str]) -> EventDef:
        params = []
        if self.accept("any"):
            while True:
                t = self.ident("parameter name")
                if t.text in vars_ or t.text in self.ctx.constants or t.text in self.ctx.atoms:
                    self.error(f"parameter {t.text!r} shadows a declared name", t)
                if t.text in [p.name for p in params]:
                    self.error(f"parameter {t.text!r} declared twice", t)
                if not self.at("from"):
                    self.error(f"parameter {t.text!r} needs a finite domain ('from <term>')")
                self.advance()
                dom = self.term()
                params.append(Param(t.text, dom))
                self.scope.append(t.text)
                if not self.accept(","):
                    break
        guard = TRUE
        if self.accept("where"):
            guard = self.formula()
        then_tok = self.expect("then")
        self.scope += [v + "'" for v in vars_]
        acts = self.actions(vars_, end_tok=then_tok)
        self.scope = []
        return EventDef(name, tuple(params), guard, tuple(acts))

    def actions(self, vars_: List[str], end_tok: Tok) -> List[Assign]:
        acts: List[Assign] = []
        if self.accept("skip"):
            self.expect("end")
            return acts
        while not self.at("end"):
            t = self.tok
            if t.kind != "ident" or t.text in RESERVED:
                self.error(f"expected an assignment, found {self.describe(t)}")
            self.advance()
            if t.text not in vars_:
                self.error(f"assignment to undeclared variable {t.text!r}", t)
            if t.text in [a.var for a in acts]:
                self.error(f"variable {t.text!r} assigned twice", t)
            op = self.tok
            if self.accept(":="):
                acts.append(Assign(t.text, ":=", expr=self.term()))
            elif self.accept(":in"):
                acts.append(Assign(t.text, ":in", expr=self.term()))
            elif self.accept(":|"):
                pred = self.formula()
                if not self.at("from"):
                    self.error(f"':|' assignment to {t.text!r} needs a candidate domain ('from <term>')")
                self.advance()
                acts.append(Assign(t.text, ":|", pred=pred, domain=self.term()))
            else:
                self.error(f"expected ':=', ':in' or ':|', found {self.describe(op)}")
            if not self.accept(";"):
                break
        self.expect("end")
        return acts


def _context_for(spec: Optional[SourceSpec]) -> _Context:
    if spec is None:
        return _Context()
    return _Context(
        strict=True,
        atoms={a: atom(a) for a in spec.atoms},
        constants=dict(spec.constants),
        variables=list(spec.variables),
        formulas=dict(spec.formulas),
    )


def parse_machine(text: str) -> SourceSpec:
    return Parser(text).machine()


def parse_temporal(text: str, spec: Optional[SourceSpec] = None) -> Temporal:
    p = Parser(text, _context_for(spec))
    if p.tok.kind == "eof":
        p.error("empty formula")
    return p.temporal_top()


def parse_formula(text: str, spec: Optional[SourceSpec] = None) -> Formula:
    p = Parser(text, _context_for(spec))
    f = p.formula()
    p.expect_eof()
    return f


def parse_term(text: str, spec: Optional[SourceSpec] = None) -> Term:
    p = Parser(text, _context_for(spec))
    t = p.term()
    p.expect_eof()
    return t


def parse_formula_file(text: str, spec: Optional[SourceSpec] = None) -> List[Tuple[str, Temporal]]:
    """One `name : formula` per non-blank line; `//` comments allowed."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("//", 1)[0]
        if not line.strip():
            continue
        name, sep, body = line.partition(":")
        name = name.strip()
        if not sep or not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
            raise ParseError([Diagnostic(lineno, 1, "expected 'name : formula'")])
        try:
            out.append((name, parse_temporal(body, spec)))
        except ParseError as e:
            offset = len(name) + 1 + (len(line) - len(name) - 1 - len(body))
            raise ParseError([Diagnostic(lineno, d.col + offset, d.message, d.severity)
                              for d in e.diagnostics]) from None
    return out


# -- printer ----------------------------------------------------------------

def print_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Lit):
        return format_hf(t.value)
    if isinstance(t, Call):
        if BUILTINS.get(t.op) == 0:
            return t.op
        return f"{t.op}(" + ", ".join(print_term(a) for a in t.args) + ")"
    if isinstance(t, SetOf):
        return "{" + ", ".join(print_term(a) for a in t.items) + "}"
    raise TypeError(f"not a term: {t!r}")


_PREC = {Implies: 1, Or: 2, And: 3, Not: 4}


def _prec(f: Formula) -> int:
    if isinstance(f, (Forall, Exists)):
        return 0
    if isinstance(f, Not) and isinstance(f.body, Eq):
        return 5
    return _PREC.get(type(f), 5)


def print_formula(f: Formula, min_prec: int = 0) -> str:
    s = _print_formula(f)
    return f"({s})" if _prec(f) < min_prec else s


def _print_formula(f: Formula) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Member):
        return f"{print_term(f.left)} in {print_term(f.right)}"
    if isinstance(f, Eq):
        return f"{print_term(f.left)} = {print_term(f.right)}"
    if isinstance(f, Lt):
        return f"{print_term(f.left)} < {print_term(f.right)}"
    if isinstance(f, Le):
        return f"{print_term(f.left)} <= {print_term(f.right)}"
    if isinstance(f, Not):
        if isinstance(f.body, Eq):
            return f"{print_term(f.body.left)} != {print_term(f.body.right)}"
        return "!" + print_formula(f.body, 4)
    if isinstance(f, And):
        return f"{print_formula(f.left, 3)} & {print_formula(f.right, 4)}"
    if isinstance(f, Or):
        return f"{print_formula(f.left, 2)} | {print_formula(f.right, 3)}"
    if isinstance(f, Implies):
        return f"{print_formula(f.left, 2)} -> {print_formula(f.right, 1)}"
    if isinstance(f, (Forall, Exists)):
        q = "forall" if isinstance(f, Forall) else "exists"
        return f"{q} {f.var} in {print_term(f.bound)} . {print_formula(f.body)}"
    raise TypeError(f"not a formula: {f!r}")


def print_temporal(f: Temporal) -> str:
    if isinstance(f, State):
        return print_formula(f.formula)
    if isinstance(f, Always):
        return f"[] ({print_temporal(f.body)})"
    if isinstance(f, AlwaysEventually):
        return f"[] <> ({print_temporal(f.body)})"
    if isinstance(f, EventuallyAlways):
        return f"<> [] ({print_temporal(f.body)})"
    if isinstance(f, Progress):
        return f"[] ({print_formula(f.antecedent, 2)} -> <> ({print_temporal(f.body)}))"
    raise TypeError(f"not a temporal formula: {f!r}")


def print_assign(a: Assign) -> str:
    if a.kind == ":|":
        return f"{a.var} :| {print_formula(a.pred)} from {print_term(a.domain)}"
    return f"{a.var} {a.kind} {print_term(a.expr)}"


def _print_actions(acts) -> List[str]:
    if not acts:
        return ["  skip"]
    lines = ["  " + print_assign(a) + ";" for a in acts]
    lines[-1] = lines[-1][:-1]
    return lines


def print_machine(spec: SourceSpec) -> str:
    out = [f"machine {spec.name}"]
    if spec.atoms:
        out.append("atoms " + ", ".join(spec.atoms))
    if spec.constants:
        out.append("constants " + ", ".join(f"{n} = {format_hf(v)}" for n, v in spec.constants))
    out.append("variables " + ", ".join(spec.variables))
    out.append("init")
    out += _print_actions(spec.init)
    out.append("end")
    for ev in spec.events:
        out.append(f"event {ev.name}")
        if ev.params:
            out.append("  any " + ", ".join(f"{p.name} from {print_term(p.domain)}" for p in ev.params))
        if ev.guard != TRUE:
            out.append(f"  where {print_formula(ev.guard)}")
        out.append("then")
        out += _print_actions(ev.actions)
        out.append("end")
    if spec.formulas:
        out.append("formulas")
        for n, f in spec.formulas:
            out.append(f"  {n} : {print_formula(f)};")
    return "\n".join(out) + "\n"
