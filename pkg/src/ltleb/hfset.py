"""Hereditarily finite sets over a finite atom set.

Values are immutable and canonical: the elements of a set are kept sorted by a
structural key, so two sets are equal exactly when their representations are.
"""
from __future__ import annotations

from typing import Iterable, Optional, Sequence

DEFAULT_NODE_BUDGET = 10**6
_node_budget = DEFAULT_NODE_BUDGET


class HFError(ValueError):
    """Domain error raised by set operators (e.g. an atom where a set is needed)."""


class HFBudgetError(HFError):
    pass


def set_node_budget(n: int) -> None:
    global _node_budget
    if n < 1:
        raise ValueError("node budget must be positive")
    _node_budget = n


def node_budget() -> int:
    return _node_budget


class HF:
    """An atom or a finite set of HF values.

    Do not call the constructor directly; use :func:`atom` and :func:`hfset`.
    """

    __slots__ = ("atom", "elems", "key", "size", "_hash", "_tc")

    def __init__(self, atom_name: Optional[str], elems: tuple, key: tuple, size: int):
        self.atom = atom_name
        self.elems = elems
        self.key = key
        self.size = size
        if atom_name is not None:
            self._hash = hash(key)
        else:
            self._hash = hash((1, tuple(e._hash for e in elems)))
        self._tc = None

    @property
    def is_atom(self) -> bool:
        return self.atom is not None

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, HF):
            return NotImplemented
        return self._hash == other._hash and self.key == other.key

    def __hash__(self):
        return self._hash

    def __lt__(self, other: "HF") -> bool:
        # canonical total order, not the TC order
        return self.key < other.key

    def __len__(self) -> int:
        return len(self.elems)

    def __iter__(self):
        return iter(self.elems)

    def __contains__(self, x) -> bool:
        return x in self.elems

    def __repr__(self) -> str:
        return f"HF({format_hf(self)})"

    def __str__(self) -> str:
        return format_hf(self)

    def tc(self) -> frozenset:
        """Transitive closure; atoms have none."""
        if self._tc is None:
            acc = set()
            for e in self.elems:
                acc.add(e)
                acc |= e.tc()
            self._tc = frozenset(acc)
        return self._tc


def atom(name: str) -> HF:
    if not name:
        raise HFError("atom name must be nonempty")
    return HF(name, (), (0, name), 1)


def hfset(items: Iterable[HF] = ()) -> HF:
    uniq = {}
    for x in items:
        if not isinstance(x, HF):
            raise TypeError(f"not an HF value: {x!r}")
        uniq[x] = x
    elems = tuple(sorted(uniq.values(), key=lambda e: e.key))
    size = 1 + sum(e.size for e in elems)
    if size > _node_budget:
        raise HFBudgetError(f"set representation exceeds node budget ({_node_budget})")
    return HF(None, elems, (1, tuple(e.key for e in elems)), size)


EMPTY = hfset()


def empty() -> HF:
    return EMPTY


def _need_set(x: HF, op: str) -> None:
    if x.is_atom:
        raise HFError(f"{op}: argument is an atom ({x.atom})")


def atoms(names: Iterable[str]) -> HF:
    return hfset(atom(n) for n in names)


def elements(x: HF) -> list:
    _need_set(x, "elements")
    return list(x.elems)


def member(x: HF, y: HF) -> bool:
    return (not y.is_atom) and x in y.elems


def subset(x: HF, y: HF) -> bool:
    _need_set(x, "subset")
    _need_set(y, "subset")
    return set(x.elems) <= set(y.elems)


def big_union(x: HF) -> HF:
    _need_set(x, "BigUnion")
    out = []
    for e in x.elems:
        if not e.is_atom:
            out.extend(e.elems)
    return hfset(out)


def the_unique(x: HF) -> HF:
    _need_set(x, "TheUnique")
    return x.elems[0] if len(x.elems) == 1 else EMPTY


def pair(x: HF, y: HF) -> HF:
    return hfset((x, y))


def union(x: HF, y: HF) -> HF:
    _need_set(x, "union")
    _need_set(y, "union")
    return hfset(x.elems + y.elems)


def intersection(x: HF, y: HF) -> HF:
    _need_set(x, "inter")
    _need_set(y, "inter")
    ys = set(y.elems)
    return hfset(e for e in x.elems if e in ys)


def difference(x: HF, y: HF) -> HF:
    _need_set(x, "diff")
    _need_set(y, "diff")
    ys = set(y.elems)
    return hfset(e for e in x.elems if e not in ys)


def transitive_closure(x: HF) -> HF:
    return hfset(x.tc())


def leq(x: HF, y: HF) -> bool:
    return x.tc() <= y.tc()


def lt(x: HF, y: HF) -> bool:
    return x.tc() < y.tc()


# -- naturals ---------------------------------------------------------------

_VN_CACHE = [EMPTY]


def von_neumann(n: int) -> HF:
    if n < 0:
        raise ValueError("von Neumann naturals are nonnegative")
    while len(_VN_CACHE) <= n:
        prev = _VN_CACHE[-1]
        _VN_CACHE.append(hfset(prev.elems + (prev,)))
    return _VN_CACHE[n]


def as_natural(x: HF) -> Optional[int]:
    """Inverse of von_neumann; None if x is not an ordinal."""
    if x.is_atom:
        return None
    n = len(x.elems)
    if n >= len(_VN_CACHE) and n > 64:
        # an ordinal n has tree size 2**n; it could not have been built
        return None
    try:
        return n if von_neumann(n) == x else None
    except HFBudgetError:
        return None


# -- tuples -----------------------------------------------------------------

def kpair(x: HF, y: HF) -> HF:
    """Kuratowski pair {{x}, {x, y}}."""
    return hfset((hfset((x,)), hfset((x, y))))


def kpair_parts(p: HF) -> Optional[tuple]:
    if p.is_atom or not 1 <= len(p.elems) <= 2:
        return None
    if any(e.is_atom for e in p.elems):
        return None
    if len(p.elems) == 1:
        only = p.elems[0]
        if len(only.elems) != 1:
            return None
        return only.elems[0], only.elems[0]
    a, b = p.elems
    if len(a.elems) == 2 and len(b.elems) == 1:
        a, b = b, a
    if len(a.elems) != 1 or len(b.elems) != 2:
        return None
    x = a.elems[0]
    if x not in b.elems:
        return None
    y = b.elems[0] if b.elems[1] == x else b.elems[1]
    return x, y


def fst(p: HF) -> HF:
    parts = kpair_parts(p)
    return parts[0] if parts else EMPTY


def snd(p: HF) -> HF:
    parts = kpair_parts(p)
    return parts[1] if parts else EMPTY


def encode_tuple(xs: Sequence[HF]) -> HF:
    if not xs:
        return EMPTY
    if len(xs) == 1:
        return xs[0]
    return kpair(xs[0], encode_tuple(xs[1:]))


def decode_tuple(x: HF, arity: int) -> Optional[list]:
    if arity == 0:
        return [] if x == EMPTY else None
    if arity == 1:
        return [x]
    parts = kpair_parts(x)
    if parts is None:
        return None
    rest = decode_tuple(parts[1], arity - 1)
    return None if rest is None else [parts[0]] + rest


# Lists are length-prefixed cons chains: <len, <e1, <e2, ... <ek, {}>>>>.

def encode_list(xs: Sequence[HF]) -> HF:
    chain = EMPTY
    for x in reversed(xs):
        chain = kpair(x, chain)
    return kpair(von_neumann(len(xs)), chain)


def decode_list(x: HF) -> Optional[list]:
    parts = kpair_parts(x)
    if parts is None:
        return None
    n = as_natural(parts[0])
    if n is None:
        return None
    out, chain = [], parts[1]
    for _ in range(n):
        cell = kpair_parts(chain)
        if cell is None:
            return None
        out.append(cell[0])
        chain = cell[1]
    return out if chain == EMPTY else None


def cardinality(x: HF) -> HF:
    _need_set(x, "card")
    return von_neumann(len(x.elems))


def nat_plus(x: HF, y: HF) -> HF:
    a, b = as_natural(x), as_natural(y)
    if a is None or b is None:
        raise HFError("plus: arguments must be naturals")
    return von_neumann(a + b)


# -- printing ---------------------------------------------------------------

def format_hf(x: HF) -> str:
    """Literal syntax: atoms bare, ordinals >= 1 as numerals, else {e1, ...}."""
    if x.is_atom:
        return x.atom
    if not x.elems:
        return "{}"
    n = _ordinal_len(x)
    if n is not None:
        return str(n)
    return "{" + ", ".join(format_hf(e) for e in x.elems) + "}"


def _ordinal_len(x: HF) -> Optional[int]:
    n = len(x.elems)
    if n < len(_VN_CACHE) or n <= 64:
        try:
            return n if von_neumann(n) == x else None
        except HFBudgetError:
            return None
    return None
