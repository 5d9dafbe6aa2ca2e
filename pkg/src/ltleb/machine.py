"""Elaborated machines and their operational semantics.

Every assignment is elaborated to the before-after form ``v :| P from D``:
``v := E`` becomes ``v' = E`` over ``{E}`` and ``v :in E`` becomes ``v' in E``
over ``E``. A successor is obtained by choosing, for each assigned variable, a
candidate from its domain so that all before-after predicates hold together.
"""
from __future__ import annotations

import json
from functools import lru_cache
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .fol import EvalError, eval_formula, eval_term
from .hfset import EMPTY, HF, atoms as hf_atoms, format_hf
from .syntax import (
    TRUE, Assign, Eq, EventDef, Exists, Formula, Member, Not, Param, SourceSpec, Term,
    Var, conj, free_vars, primed, set_of, term_vars,
)

DEFAULT_NODE_BUDGET = 100_000

State = Tuple[HF, ...]
Binding = Tuple[Tuple[str, HF], ...]


class MachineError(ValueError):
    pass


class ActionInfeasible(MachineError):
    pass


@dataclass(frozen=True)
class Event:
    name: str
    params: Tuple[Param, ...]
    guard: Formula
    actions: Tuple[Assign, ...]  # all of kind ':|'

    @property
    def assigned(self) -> Tuple[str, ...]:
        return tuple(a.var for a in self.actions)


@dataclass(frozen=True)
class Machine:
    name: str
    atoms: Tuple[str, ...]
    constants: Tuple[Tuple[str, HF], ...]
    variables: Tuple[str, ...]
    init: Event
    events: Tuple[Event, ...]
    formulas: Tuple[Tuple[str, Formula], ...] = ()
    extended: bool = False
    ext_event: Optional[str] = None

    @property
    def atom_set(self) -> HF:
        return hf_atoms(self.atoms)

    def event(self, name: str) -> Event:
        for e in self.events:
            if e.name == name:
                return e
        raise KeyError(name)

    def formula(self, name: str) -> Formula:
        return dict(self.formulas)[name]


# -- elaboration ------------------------------------------------------------

def elaborate_assign(a: Assign) -> Assign:
    v = Var(primed(a.var))
    if a.kind == ":=":
        return Assign(a.var, ":|", pred=Eq(v, a.expr), domain=set_of([a.expr]))
    if a.kind == ":in":
        return Assign(a.var, ":|", pred=Member(v, a.expr), domain=a.expr)
    return a


def sugar_assign(a: Assign) -> Assign:
    """Inverse of elaborate_assign where the shape allows it."""
    v = Var(primed(a.var))
    if a.kind != ":|":
        return a
    if isinstance(a.pred, Eq) and a.pred.left == v and a.domain == set_of([a.pred.right]) \
            and primed(a.var) not in term_vars(a.pred.right):
        return Assign(a.var, ":=", expr=a.pred.right)
    if isinstance(a.pred, Member) and a.pred.left == v and a.domain == a.pred.right \
            and primed(a.var) not in term_vars(a.pred.right):
        return Assign(a.var, ":in", expr=a.pred.right)
    return a


def elaborate(spec: SourceSpec) -> Machine:
    def ev(d: EventDef) -> Event:
        return Event(d.name, d.params, d.guard, tuple(elaborate_assign(a) for a in d.actions))

    init = ev(EventDef("init", (), TRUE, spec.init))
    return Machine(spec.name, spec.atoms, spec.constants, spec.variables, init,
                   tuple(ev(d) for d in spec.events), spec.formulas)


def to_source(m: Machine) -> SourceSpec:
    def d(e: Event) -> EventDef:
        return EventDef(e.name, e.params, e.guard, tuple(sugar_assign(a) for a in e.actions))

    return SourceSpec(m.name, m.atoms, m.constants, m.variables,
                      tuple(sugar_assign(a) for a in m.init.actions),
                      tuple(d(e) for e in m.events), m.formulas)


def load_machine(text: str) -> Machine:
    from .speclang import parse_machine
    return elaborate(parse_machine(text))


# -- semantics --------------------------------------------------------------

def state_env(m: Machine, state: State) -> Dict[str, HF]:
    return dict(zip(m.variables, state))


def _domain_elems(t: Term, env, atoms, what: str) -> Tuple[HF, ...]:
    d = eval_term(t, env, atoms)
    if d.is_atom:
        raise EvalError(f"{what}: domain evaluates to an atom ({d.atom})")
    return d.elems


def _bindings(params: Sequence[Param], env, atoms) -> Iterator[dict]:
    if not params:
        yield {}
        return
    p, rest = params[0], params[1:]
    for x in _domain_elems(p.domain, env, atoms, f"parameter {p.name}"):
        env2 = dict(env)
        env2[p.name] = x
        for b in _bindings(rest, env2, atoms):
            out = {p.name: x}
            out.update(b)
            yield out


def enabled(m: Machine, state: State) -> List[Tuple[Event, Binding]]:
    env = state_env(m, state)
    atoms = m.atom_set
    out = []
    for e in m.events:
        for b in _bindings(e.params, env, atoms):
            env2 = dict(env)
            env2.update(b)
            if eval_formula(e.guard, env2, atoms):
                out.append((e, tuple((p.name, b[p.name]) for p in e.params)))
    return out


def _after_values(e: Event, env, atoms) -> List[Dict[str, HF]]:
    """All assignments of primed values satisfying the before-after predicates."""
    acts = e.actions
    names = [primed(a.var) for a in acts]
    domains = [_domain_elems(a.domain, env, atoms, f"{e.name}: candidates for {a.var}")
               for a in acts]
    # check each predicate as soon as the primed variables it mentions are chosen
    pos = {n: i for i, n in enumerate(names)}
    ready: List[List[Formula]] = [[] for _ in acts]
    for a in acts:
        need = [pos[v] for v in free_vars(a.pred) if v in pos]
        ready[max(need, default=0)].append(a.pred)
    results = []
    cur = dict(env)

    def go(k):
        if k == len(acts):
            results.append({n: cur[n] for n in names})
            return
        for x in domains[k]:
            cur[names[k]] = x
            if all(eval_formula(p, cur, atoms) for p in ready[k]):
                go(k + 1)
        cur.pop(names[k], None)

    go(0)
    return results


def _apply(m: Machine, state: State, after: Dict[str, HF]) -> State:
    return tuple(after.get(primed(v), x) for v, x in zip(m.variables, state))


def successors(m: Machine, state: State) -> List[Tuple[Event, Binding, State]]:
    env = state_env(m, state)
    atoms = m.atom_set
    out, seen = [], set()
    for e, b in enabled(m, state):
        env2 = dict(env)
        env2.update(b)
        afters = _after_values(e, env2, atoms)
        if not afters:
            raise ActionInfeasible(
                f"action infeasible: event {e.name!r} is enabled at "
                f"{format_state(m, state)} but no after-state satisfies its action")
        for a in afters:
            s2 = _apply(m, state, a)
            key = (e.name, b, s2)
            if key not in seen:
                seen.add(key)
                out.append((e, b, s2))
    return out


def deadlocked(m: Machine, state: State) -> bool:
    return not enabled(m, state)


def initial_states(m: Machine) -> List[State]:
    blank = tuple(EMPTY for _ in m.variables)
    afters = _after_values(m.init, {}, m.atom_set)
    out = []
    for a in afters:
        s = _apply(m, blank, a)
        if s not in out:
            out.append(s)
    if not out:
        raise MachineError("no initial state: the init action is unsatisfiable")
    return out


def trivial_extension(m: Machine) -> Machine:
    """Add a stuttering event enabled exactly when every other event is disabled."""
    if m.extended:
        return m
    names = {e.name for e in m.events}
    name, k = "ext", 1
    while name in names:
        name, k = f"ext_{k}", k + 1
    parts = []
    for e in m.events:
        g = e.guard
        for p in reversed(e.params):
            g = Exists(p.name, p.domain, g)
        parts.append(Not(g))
    ext = Event(name, (), conj(parts), ())
    return replace(m, events=m.events + (ext,), extended=True, ext_event=name)


def format_state(m: Machine, state: State) -> str:
    return "(" + ", ".join(f"{v}={format_hf(x)}" for v, x in zip(m.variables, state)) + ")"


# -- state graph ------------------------------------------------------------

@dataclass(frozen=True)
class Edge:
    src: int
    event: str
    binding: Binding
    dst: int


@dataclass
class StateGraph:
    machine: Machine
    nodes: List[State]
    initial: List[int]
    edges: List[Edge]
    complete: bool
    budget: int
    out: List[List[Edge]] = field(default_factory=list)
    _sat: dict = field(default_factory=dict, repr=False)
    _val: dict = field(default_factory=dict, repr=False)
    _succ: list = field(default_factory=list, repr=False)
    words: dict = field(default_factory=dict, repr=False)  # trace-word sets by (depth, budget)

    def __post_init__(self):
        self.out = [[] for _ in self.nodes]
        for e in self.edges:
            self.out[e.src].append(e)

    @property
    def variables(self):
        return self.machine.variables

    def env(self, i: int) -> Dict[str, HF]:
        return state_env(self.machine, self.nodes[i])

    def sat(self, phi: Formula) -> Tuple[bool, ...]:
        r = self._sat.get(phi)
        if r is None:
            atoms = self.machine.atom_set
            r = tuple(eval_formula(phi, self.env(i), atoms) for i in range(len(self.nodes)))
            self._sat[phi] = r
        return r

    def holds(self, i: int, phi: Formula) -> bool:
        return self.sat(phi)[i]

    def values(self, t: Term) -> Tuple[HF, ...]:
        r = self._val.get(t)
        if r is None:
            atoms = self.machine.atom_set
            r = tuple(eval_term(t, self.env(i), atoms) for i in range(len(self.nodes)))
            self._val[t] = r
        return r

    def term_value(self, i: int, t: Term) -> HF:
        return self.values(t)[i]

    def succ(self, i: int) -> List[int]:
        if not self._succ:
            self._succ = [list(dict.fromkeys(e.dst for e in es)) for es in self.out]
        return self._succ[i]

    def deadlocked_nodes(self) -> List[int]:
        return [i for i in range(len(self.nodes)) if not self.out[i]]

    def state_json(self, i: int) -> dict:
        return {v: format_hf(x) for v, x in zip(self.variables, self.nodes[i])}

    def format_node(self, i: int) -> str:
        return format_state(self.machine, self.nodes[i])

    def to_json(self) -> dict:
        return {
            "machine": self.machine.name,
            "variables": list(self.variables),
            "complete": self.complete,
            "truncated": not self.complete,
            "budget": self.budget,
            "nodes": [{"id": i, "state": self.state_json(i)} for i in range(len(self.nodes))],
            "initial": list(self.initial),
            "edges": [{"src": e.src, "event": e.event,
                       "binding": {k: format_hf(v) for k, v in e.binding}, "dst": e.dst}
                      for e in self.edges],
        }

    def to_dot(self) -> str:
        lines = [f"digraph {json.dumps(self.machine.name)} {{"]
        init = set(self.initial)
        for i in range(len(self.nodes)):
            shape = "doublecircle" if i in init else "ellipse"
            lines.append(f"  n{i} [label={json.dumps(self.format_node(i))}, shape={shape}];")
        for e in self.edges:
            lab = e.event
            if e.binding:
                lab += "(" + ", ".join(f"{k}={format_hf(v)}" for k, v in e.binding) + ")"
            lines.append(f"  n{e.src} -> n{e.dst} [label={json.dumps(lab)}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_graph(m: Machine, budget: int = DEFAULT_NODE_BUDGET) -> StateGraph:
    """Breadth-first closure of the initial states; truncated if over budget.

    Graphs are cached per (machine, budget); callers must treat them as read-only.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    return _build_graph(m, budget)


@lru_cache(maxsize=64)
def _build_graph(m: Machine, budget: int) -> StateGraph:
    nodes: List[State] = []
    index: Dict[State, int] = {}
    edges: List[Edge] = []
    complete = True

    def add(s: State) -> Optional[int]:
        nonlocal complete
        i = index.get(s)
        if i is not None:
            return i
        if len(nodes) >= budget:
            complete = False
            return None
        index[s] = len(nodes)
        nodes.append(s)
        return index[s]

    initial = []
    for s in initial_states(m):
        i = add(s)
        if i is not None and i not in initial:
            initial.append(i)
    queue = deque(initial)
    while queue:
        i = queue.popleft()
        for e, b, s2 in successors(m, nodes[i]):
            known = s2 in index
            j = add(s2)
            if j is None:
                continue
            edges.append(Edge(i, e.name, b, j))
            if not known:
                queue.append(j)
    return StateGraph(m, nodes, initial, edges, complete, budget)


def simulate(m: Machine, steps: int, rng) -> Tuple[List[State], List[Tuple[str, Binding]], str]:
    """One random run; returns states, labels and how it ended."""
    states = [rng.choice(initial_states(m))]
    labels = []
    for _ in range(steps):
        succ = successors(m, states[-1])
        if not succ:
            return states, labels, "deadlock"
        e, b, s2 = succ[rng.randrange(len(succ))]
        states.append(s2)
        labels.append((e.name, b))
    return states, labels, "steps"
