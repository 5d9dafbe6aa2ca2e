"""Ground-truth checking of fragment formulas on complete state graphs.

Two independent procedures are provided:

* :func:`holds_bruteforce` enumerates lassos (stem + cycle) and evaluates the
  formula on each induced ultimately periodic trace with :func:`eval_on_lasso`.
* :func:`holds_fast` compiles the negated formula into a reachability /
  fair-cycle query answered with strongly connected components.

Both expect the graph of a trivially extended machine (no deadlocks), so every
trace is infinite.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

from .syntax import (
    FALSE, TRUE, Always, AlwaysEventually, And, EventuallyAlways, Formula, Not,
    Progress, State, Temporal, neg,
)

DEFAULT_LASSO_BUDGET = 10**6

HOLDS, FAILS, INDETERMINATE = "holds", "fails", "indeterminate"


@dataclass(frozen=True)
class Lasso:
    """stem[0] (or cycle[0] if the stem is empty) is initial; the cycle repeats forever."""
    stem: Tuple[int, ...]
    cycle: Tuple[int, ...]

    @property
    def nodes(self) -> Tuple[int, ...]:
        return self.stem + self.cycle

    def valid_in(self, graph) -> bool:
        seq = self.nodes
        if not self.cycle or seq[0] not in graph.initial:
            return False
        for a, b in zip(seq, seq[1:]):
            if b not in graph.succ(a):
                return False
        return self.cycle[0] in graph.succ(self.cycle[-1])

    def to_json(self, graph) -> dict:
        def step(a, b):
            for e in graph.out[a]:
                if e.dst == b:
                    return {"event": e.event, "binding": {k: str(v) for k, v in e.binding}}
            return None

        seq = self.nodes + (self.cycle[0],)
        return {
            "stem": [graph.state_json(i) for i in self.stem],
            "cycle": [graph.state_json(i) for i in self.cycle],
            "steps": [step(a, b) for a, b in zip(seq, seq[1:])],
        }

    def format(self, graph) -> str:
        seq = self.nodes + (self.cycle[0],)
        lines = []
        for pos, (a, b) in enumerate(zip(seq, seq[1:])):
            mark = "  " if pos < len(self.stem) else "* "
            ev = next((e for e in graph.out[a] if e.dst == b), None)
            lab = ev.event if ev else "?"
            if ev and ev.binding:
                lab += "(" + ", ".join(f"{k}={v}" for k, v in ev.binding) + ")"
            lines.append(f"{mark}{graph.format_node(a)} --{lab}-->")
        lines.append(f"* back to {graph.format_node(self.cycle[0])}  (* marks the cycle)")
        return "\n".join(lines)


@dataclass(frozen=True)
class Verdict:
    value: str
    counterexample: Optional[Lasso] = None
    reason: str = ""
    method: str = ""

    @property
    def holds(self) -> bool:
        return self.value == HOLDS

    def to_json(self, graph, formula_text: str = "") -> dict:
        out = {"formula": formula_text, "verdict": self.value, "method": self.method}
        if self.reason:
            out["reason"] = self.reason
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample.to_json(graph)
        return out


class NotExtendedError(ValueError):
    pass


def _precheck(graph) -> Optional[Verdict]:
    if not graph.complete:
        return Verdict(INDETERMINATE, reason=f"state graph truncated at {len(graph.nodes)} nodes")
    if graph.deadlocked_nodes():
        raise NotExtendedError("graph has deadlocked states; use the trivial extension")
    return None


# -- lasso semantics --------------------------------------------------------

def state_leaves(f: Temporal) -> List[Formula]:
    """State formulas whose truth values the temporal formula depends on."""
    out = []
    while not isinstance(f, State):
        if isinstance(f, Progress):
            out.append(f.antecedent)
        f = f.body
    out.append(f.formula)
    return out


def count_progress(f: Temporal) -> int:
    n = 0
    while not isinstance(f, State):
        n += isinstance(f, Progress)
        f = f.body
    return n


def stem_multiplicity(f: Temporal) -> int:
    """How often a node may repeat in an enumerated stem.

    A violation of a formula without Progress is a reachable bad node or a
    reachable bad cycle, both witnessed by a simple stem. Negating Progress
    adds one reach phase (get to an antecedent state) before the final cycle
    search, and the second path segment may revisit nodes of the first, so
    stems need each node at most twice. Deeper Progress nesting only adds
    recurrence constraints on the final cycle, not further reach phases.
    """
    return 2 if count_progress(f) else 1


def eval_on_lasso(formula: Temporal, lasso: Lasso, holds: Callable[[int, Formula], bool]) -> bool:
    """Exact satisfaction at position 0 of stem . cycle^omega.

    `holds(node, phi)` gives the truth of a state formula at a node (a
    StateGraph's bound method `holds` fits).
    """
    seq = lasso.nodes
    s, n = len(lasso.stem), len(seq)

    def later(vec, agg) -> List[bool]:
        """agg (all/any) of vec over the positions reachable from each position."""
        loop = agg(vec[s:])
        out = [loop] * n
        acc = loop
        for p in range(s - 1, -1, -1):
            acc = agg((vec[p], acc))
            out[p] = acc
        return out

    def ev(f) -> List[bool]:
        if isinstance(f, State):
            return [holds(x, f.formula) for x in seq]
        inner = ev(f.body)
        if isinstance(f, Always):
            return later(inner, all)
        if isinstance(f, AlwaysEventually):
            v = any(inner[s:])
            return [v] * n
        if isinstance(f, EventuallyAlways):
            v = all(inner[s:])
            return [v] * n
        if isinstance(f, Progress):
            ant = [holds(x, f.antecedent) for x in seq]
            dia = later(inner, any)
            ok = [(not a) or d for a, d in zip(ant, dia)]
            return later(ok, all)
        raise TypeError(f"not a temporal formula: {f!r}")

    return ev(formula)[0]


# -- brute force ------------------------------------------------------------

class _Quotient:
    """Bisimulation quotient of a graph w.r.t. a set of state formulas."""

    def __init__(self, graph, phis: Sequence[Formula]):
        self.graph = graph
        self.phis = list(phis)
        n = len(graph.nodes)
        labels = [tuple(graph.holds(i, p) for p in self.phis) for i in range(n)]
        block = self._refine(graph, labels)
        self.block_of = block
        nb = max(block) + 1 if block else 0
        self.members: List[List[int]] = [[] for _ in range(nb)]
        for i in range(n):
            self.members[block[i]].append(i)
        self.label = [labels[m[0]] for m in self.members]
        self.succ: List[List[int]] = [
            sorted({block[j] for j in graph.succ(m[0])}) for m in self.members]
        self.initial = sorted({block[i] for i in graph.initial})

    @staticmethod
    def _refine(graph, labels) -> List[int]:
        n = len(labels)
        # blocks numbered by first occurrence in node order: deterministic
        def renumber(keys):
            ids: Dict = {}
            return [ids.setdefault(k, len(ids)) for k in keys]

        block = renumber(labels)
        while True:
            keys = [(block[i], tuple(sorted({block[j] for j in graph.succ(i)}))) for i in range(n)]
            nb = renumber(keys)
            if max(nb, default=-1) == max(block, default=-1):
                return nb
            block = nb

    def holds(self, b: int, phi: Formula) -> bool:
        return self.label[b][self.phis.index(phi)]

    def lift(self, lasso: Lasso) -> Lasso:
        g = self.graph
        head = lasso.stem + lasso.cycle[:1]
        cur = min(i for i in g.initial if self.block_of[i] == head[0])
        path = [cur]

        def step(target):
            nonlocal cur
            cur = min(j for j in g.succ(cur) if self.block_of[j] == target)
            path.append(cur)

        for b in head[1:]:
            step(b)
        # path[-1] is the concrete node at the first cycle position
        seen = {cur: len(path) - 1}
        while True:
            for b in lasso.cycle[1:] + lasso.cycle[:1]:
                step(b)
            if cur in seen:
                k = seen[cur]
                return Lasso(tuple(path[:k]), tuple(path[k:-1]))
            seen[cur] = len(path) - 1


class LassoBudgetExceeded(Exception):
    pass


def _simple_cycles_from(succ, u) -> List[Tuple[int, ...]]:
    out = []
    path = [u]
    on = {u}

    def dfs(x):
        for y in succ[x]:
            if y == u:
                out.append(tuple(path))
            elif y not in on:
                on.add(y)
                path.append(y)
                dfs(y)
                path.pop()
                on.discard(y)

    dfs(u)
    return out


def enumerate_lassos(succ, initial, k: int, budget: int):
    """Yield lassos with stem node multiplicity <= k and simple cycles.

    The stem ends just before the cycle's first node; enumeration is depth
    first with successors in increasing order.
    """
    cycles = {}
    count = 0
    counts: Dict[int, int] = {}
    path: List[int] = []

    def dfs(u):
        nonlocal count
        path.append(u)
        counts[u] = counts.get(u, 0) + 1
        if u not in cycles:
            cycles[u] = _simple_cycles_from(succ, u)
        for c in cycles[u]:
            count += 1
            if count > budget:
                raise LassoBudgetExceeded
            yield Lasso(tuple(path[:-1]), c)
        for v in succ[u]:
            if counts.get(v, 0) < k:
                yield from dfs(v)
        counts[u] -= 1
        path.pop()

    for i in initial:
        yield from dfs(i)


def _canon_key(l: Lasso):
    return (len(l.stem) + len(l.cycle), l.stem, l.cycle)


def holds_bruteforce(graph, formula: Temporal, lasso_budget: int = DEFAULT_LASSO_BUDGET) -> Verdict:
    pre = _precheck(graph)
    if pre:
        return pre
    phis = list(dict.fromkeys(state_leaves(formula)))
    q = _Quotient(graph, phis)
    k = stem_multiplicity(formula)
    memo: Dict[tuple, bool] = {}
    worst = None
    try:
        for l in enumerate_lassos(q.succ, q.initial, k, lasso_budget):
            word = (tuple(q.label[b] for b in l.stem), tuple(q.label[b] for b in l.cycle))
            ok = memo.get(word)
            if ok is None:
                ok = memo[word] = eval_on_lasso(formula, l, q.holds)
            if not ok and (worst is None or _canon_key(l) < _canon_key(worst)):
                worst = l
    except LassoBudgetExceeded:
        return Verdict(INDETERMINATE, reason=f"lasso budget {lasso_budget} exceeded",
                       method="bruteforce")
    if worst is None:
        return Verdict(HOLDS, method="bruteforce")
    return Verdict(FAILS, q.lift(worst), method="bruteforce")


# -- graph algorithms -------------------------------------------------------

def sccs(nodes: Sequence[int], succ: Callable[[int], Sequence[int]]) -> List[List[int]]:
    """Tarjan's algorithm (iterative) restricted to `nodes`."""
    allowed = set(nodes)
    index: Dict[int, int] = {}
    low: Dict[int, int] = {}
    on_stack = set()
    stack: List[int] = []
    out: List[List[int]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter([y for y in succ(root) if y in allowed]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter([y for y in succ(w) if y in allowed])))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(sorted(comp))
    return out


def nontrivial(comp: Sequence[int], succ) -> bool:
    return len(comp) > 1 or comp[0] in succ(comp[0])


def _bfs_path(graph, sources: Sequence[int], inside: Callable[[int], bool],
              targets: Callable[[int], bool]) -> Optional[List[int]]:
    """Shortest path from a source to a target, all nodes satisfying `inside`."""
    prev: Dict[int, Optional[int]] = {}
    queue = deque()
    for s in sources:
        if inside(s) and s not in prev:
            prev[s] = None
            queue.append(s)
    while queue:
        x = queue.popleft()
        if targets(x):
            path = [x]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        for y in graph.succ(x):
            if y not in prev and inside(y):
                prev[y] = x
                queue.append(y)
    return None


# -- fast checking ----------------------------------------------------------

@dataclass(frozen=True)
class Query:
    """Existence of a violating path.

    stages: (R, A): from the current node, follow R-nodes (current node
    included) to an A-node. final (R, C, Bs): follow R-nodes to a cycle inside
    C & R that visits every B in Bs.
    """
    stages: Tuple[Tuple[Formula, Formula], ...]
    final: Tuple[Formula, Formula, Tuple[Formula, ...]]


def normalize(f: Temporal) -> Temporal:
    """Rewrite with LTL equivalences valid on infinite traces.

    []F == F for temporal F; []<>[]F == <>[]F; []<>[]<>F == []<>F;
    <>[][]F == <>[]F; <>[][]<>F == []<>F; []<>[](p -> <>F) == <>[](p -> <>F);
    [](p -> <><>[]F) == [](p -> <>[]F).
    """
    if isinstance(f, State):
        return f
    b = normalize(f.body)
    if isinstance(f, Always):
        return b if not isinstance(b, State) else Always(b)
    if isinstance(f, (AlwaysEventually, EventuallyAlways)):
        if isinstance(b, State):
            return type(f)(b)
        if isinstance(b, Always):
            return EventuallyAlways(b.body) if isinstance(b.body, State) else \
                normalize(EventuallyAlways(b.body))
        if isinstance(b, (AlwaysEventually, EventuallyAlways)):
            return b
        if isinstance(b, Progress):
            return EventuallyAlways(b)
    if isinstance(f, Progress):
        if isinstance(b, EventuallyAlways):
            b = Always(b.body) if isinstance(b.body, State) else b
        return Progress(f.antecedent, b)
    raise TypeError(f"not a temporal formula: {f!r}")


def compile_negation(f: Temporal) -> Optional[Query]:
    """Query for the negation of a normalized formula, or None if unsupported."""
    T = TRUE
    if isinstance(f, State):
        s = f.formula
        return Query(((neg(s), neg(s)),), (T, T, ()))
    b = f.body
    if isinstance(f, Always) and isinstance(b, State):
        return Query(((T, neg(b.formula)),), (T, T, ()))
    if isinstance(f, AlwaysEventually) and isinstance(b, State):
        return Query((), (T, neg(b.formula), ()))
    if isinstance(f, EventuallyAlways):
        if isinstance(b, State):
            return Query((), (T, T, (neg(b.formula),)))
        if isinstance(b, Progress) and isinstance(b.body, State):
            ny = neg(b.body.formula)
            return Query((), (T, ny, (b.antecedent,)))
        return None
    if isinstance(f, Progress):
        phi = f.antecedent
        if isinstance(b, State):
            ny = neg(b.formula)
            return Query(((T, And(phi, ny)),), (ny, ny, ()))
        inner = b.body
        if not isinstance(inner, State):
            return None
        ny = neg(inner.formula)
        if isinstance(b, (Always, EventuallyAlways)):
            return Query(((T, phi),), (T, T, (ny,)))
        if isinstance(b, AlwaysEventually):
            return Query(((T, phi),), (T, ny, ()))
        if isinstance(b, Progress):
            return Query(((T, phi),), (T, ny, (b.antecedent,)))
    return None


def _fair_cycle_nodes(graph, inside: Callable[[int], bool], bs: Sequence[Formula]):
    """Nodes of nontrivial SCCs of G[inside] meeting every B, with the SCC list."""
    nodes = [i for i in range(len(graph.nodes)) if inside(i)]
    comps = [c for c in sccs(nodes, graph.succ)
             if nontrivial(c, graph.succ) and all(any(graph.holds(x, b) for x in c) for b in bs)]
    comps.sort()
    return comps


def _backward(graph, inside: Callable[[int], bool], targets: set) -> set:
    pred: Dict[int, List[int]] = {}
    for e in graph.edges:
        pred.setdefault(e.dst, []).append(e.src)
    win = {t for t in targets if inside(t)}
    queue = deque(win)
    while queue:
        x = queue.popleft()
        for y in pred.get(x, ()):
            if y not in win and inside(y):
                win.add(y)
                queue.append(y)
    return win


def run_query(graph, q: Query) -> Optional[Lasso]:
    """A violating lasso if the query is satisfiable, else None."""
    def sat(phi):
        v = graph.sat(phi)
        return lambda i: v[i]

    R, C, Bs = q.final
    r_in, c_in = sat(R), sat(C)
    comps = _fair_cycle_nodes(graph, lambda i: r_in(i) and c_in(i), Bs)
    comp_of = {x: ci for ci, c in enumerate(comps) for x in c}
    wins = [_backward(graph, r_in, set(comp_of))]
    for R_i, A_i in reversed(q.stages):
        a_in = sat(A_i)
        nxt = wins[0]
        wins.insert(0, _backward(graph, sat(R_i), {x for x in nxt if a_in(x)}))
    starts = [i for i in graph.initial if i in wins[0]]
    if not starts:
        return None
    # forward construction along the winning sets
    path = [starts[0]]
    for k, (R_i, A_i) in enumerate(q.stages):
        a_in, target = sat(A_i), wins[k + 1]
        seg = _bfs_path(graph, [path[-1]], sat(R_i), lambda x: a_in(x) and x in target)
        path += seg[1:]
    seg = _bfs_path(graph, [path[-1]], r_in, lambda x: x in comp_of)
    path += seg[1:]
    entry = path[-1]
    comp = set(comps[comp_of[entry]])
    inside = lambda x: x in comp  # noqa: E731
    cyc = [entry]
    for b in Bs:
        bv = graph.sat(b)
        if any(bv[x] for x in cyc):
            continue
        seg = _bfs_path(graph, [cyc[-1]], inside, lambda x: bv[x])
        cyc += seg[1:]
    # close the cycle back to entry with at least one step
    back = None
    for y in graph.succ(cyc[-1]):
        if y in comp:
            seg = _bfs_path(graph, [y], inside, lambda x: x == entry)
            if seg is not None and (back is None or len(seg) < len(back)):
                back = seg
    cyc += back[:-1]
    return Lasso(tuple(path[:-1]), tuple(cyc))


def holds_fast(graph, formula: Temporal, lasso_budget: int = DEFAULT_LASSO_BUDGET) -> Verdict:
    pre = _precheck(graph)
    if pre:
        return pre
    q = compile_negation(normalize(formula))
    if q is None:
        v = holds_bruteforce(graph, formula, lasso_budget)
        return Verdict(v.value, v.counterexample, v.reason, "fast:fallback-bruteforce")
    cex = run_query(graph, q)
    if cex is None:
        return Verdict(HOLDS, method="fast")
    return Verdict(FAILS, cex, method="fast")


def holds(graph, formula: Temporal, lasso_budget: int = DEFAULT_LASSO_BUDGET) -> Verdict:
    return holds_fast(graph, formula, lasso_budget)


# -- convergence, divergence, tail-homogeneity --------------------------------

def _cycle_lasso(graph, comp: Sequence[int]) -> Lasso:
    cs = set(comp)
    entry_path = _bfs_path(graph, graph.initial, lambda x: True, lambda x: x in cs)
    entry = entry_path[-1]
    back = None
    for y in graph.succ(entry):
        if y in cs:
            seg = _bfs_path(graph, [y], lambda x: x in cs, lambda x: x == entry)
            if seg is not None and (back is None or len(seg) < len(back)):
                back = seg
    return Lasso(tuple(entry_path[:-1]), (entry,) + tuple(back[:-1]))


def check_conv(graph, phi: Formula) -> Verdict:
    """conv(phi): no reachable cycle lies entirely in phi-states."""
    pre = _precheck(graph)
    if pre:
        return pre
    v = graph.sat(phi)
    comps = [c for c in sccs([i for i in range(len(graph.nodes)) if v[i]], graph.succ)
             if nontrivial(c, graph.succ)]
    if not comps:
        return Verdict(HOLDS, method="scc")
    return Verdict(FAILS, _cycle_lasso(graph, min(comps)), method="scc")


def check_div(graph, phi: Formula) -> Verdict:
    """div(phi): no reachable cycle contains a !phi-state."""
    pre = _precheck(graph)
    if pre:
        return pre
    v = graph.sat(phi)
    comps = [c for c in sccs(list(range(len(graph.nodes))), graph.succ)
             if nontrivial(c, graph.succ) and not all(v[x] for x in c)]
    if not comps:
        return Verdict(HOLDS, method="scc")
    comp = min(comps)
    bad = min(x for x in comp if not v[x])
    # rotate the cycle so the witness visits the !phi state
    l = _cycle_lasso(graph, comp)
    if bad not in l.cycle:
        sub = Lasso(l.stem, l.cycle)
        cyc = _bfs_path(graph, [l.cycle[0]], lambda x: x in set(comp), lambda x: x == bad)
        back = _bfs_path(graph, [y for y in graph.succ(bad) if y in set(comp)],
                         lambda x: x in set(comp), lambda x: x == l.cycle[0])
        l = Lasso(sub.stem, tuple(cyc) + tuple(back[:-1]))
    return Verdict(FAILS, l, method="scc")


def check_conv_finite(graph, phi: Formula) -> Verdict:
    """conv(phi) for a machine whose traces may be finite.

    A finite trace ending in a deadlocked phi-state keeps phi on its whole
    remaining suffix, so it counts as a violation just like a phi-cycle.
    """
    if not graph.complete:
        return Verdict(INDETERMINATE, reason="state graph truncated")
    v = graph.sat(phi)
    comps = [c for c in sccs([i for i in range(len(graph.nodes)) if v[i]], graph.succ)
             if nontrivial(c, graph.succ)]
    if comps:
        return Verdict(FAILS, _cycle_lasso(graph, min(comps)), method="scc-finite")
    dead = [i for i in graph.deadlocked_nodes() if v[i]]
    if dead:
        return Verdict(FAILS, reason=f"finite trace ends in phi-state {graph.format_node(dead[0])}",
                       method="scc-finite")
    return Verdict(HOLDS, method="scc-finite")


CONV_SIDE, DIV_SIDE, BOTH, NEITHER = "conv-side", "div-side", "both", "neither"


def tail_homogeneous(graph, phi: Formula) -> str:
    """Classify by which of conv(!phi), div(!phi) holds on the extended graph."""
    c, d = check_conv(graph, neg(phi)), check_div(graph, neg(phi))
    for v in (c, d):
        if v.value == INDETERMINATE:
            return INDETERMINATE
    if c.holds and d.holds:
        return BOTH
    if c.holds:
        return CONV_SIDE
    if d.holds:
        return DIV_SIDE
    return NEITHER
