"""Value shapes: intervals, string sets, set shapes and recursive data shapes.

Data shapes live in a process-wide, append-only production table.  Every
production is stored in minimal form and keyed by its canonical structure, so a
nonterminal name always denotes the same set of values and two names are equal
exactly when their (trimmed, minimised) grammars coincide.  Shapes handed out
by this module are therefore plain immutable values; the "ambient grammar" of
the textbook presentation is the table itself.
"""
from __future__ import annotations

import itertools
import math
import threading
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Union

from .ast import (
    INT, STR, VALUE, VOID, AdtT, DataEnv, IntT, SetT, StrT, TypeExpr, ValueT, VoidT,
)
from .concrete import ConsV, IntV, SetV, StrV, Value

INF = math.inf
STR_LIMIT = 8
FOLD_DEPTH = 2
THRESHOLDS = (0, 1)


class Shape:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Bot(Shape):
    def __repr__(self) -> str:
        return "Bot"


@dataclass(frozen=True, slots=True)
class Top(Shape):
    def __repr__(self) -> str:
        return "Top"


@dataclass(frozen=True, slots=True)
class IntS(Shape):
    lo: float
    hi: float


@dataclass(frozen=True, slots=True)
class StrS(Shape):
    consts: Optional[frozenset]  # None: any string


@dataclass(frozen=True, slots=True)
class SetS(Shape):
    elem: Shape
    lo: float
    hi: float


@dataclass(frozen=True, slots=True)
class DataS(Shape):
    """Constructor choice; only appears as a production body or builder input."""

    adt: str
    choices: tuple  # ((ctor, (Shape, ...)), ...) sorted by ctor


@dataclass(frozen=True, slots=True)
class Ref(Shape):
    name: str


@dataclass(frozen=True, slots=True)
class CardSeq:
    """A homogeneous sequence abstraction: element shape plus length interval."""

    elem: Shape
    lo: float
    hi: float


BOT, TOP = Bot(), Top()
ANY_INT = IntS(-INF, INF)
ANY_STR = StrS(None)
EMPTY_SET = SetS(BOT, 0, 0)


# -- construction helpers ----------------------------------------------------

def int_shape(lo: float, hi: float) -> Shape:
    return BOT if lo > hi else IntS(lo, hi)


def str_shape(consts: Optional[Iterable[str]] = None) -> Shape:
    if consts is None:
        return ANY_STR
    cs = frozenset(consts)
    if not cs:
        return BOT
    return ANY_STR if len(cs) > STR_LIMIT else StrS(cs)


def set_shape(elem: Shape, lo: float, hi: float) -> Shape:
    lo = max(lo, 0)
    if lo > hi or lo == INF:
        return BOT
    if hi == 0 or elem == BOT:
        return EMPTY_SET if lo == 0 else BOT
    return SetS(elem, lo, hi)


def card_seq(elem: Shape, lo: float, hi: float) -> Optional[CardSeq]:
    s = set_shape(elem, lo, hi)
    if s == BOT:
        return None
    return CardSeq(s.elem, s.lo, s.hi)


def _is_local(name: str) -> bool:
    return name[:1] in ("#", "~")


def _has_local(s: Shape) -> bool:
    if isinstance(s, Ref):
        return _is_local(s.name)
    if isinstance(s, SetS):
        return _has_local(s.elem)
    return isinstance(s, DataS)


# -- production table --------------------------------------------------------

class _Table:
    def __init__(self) -> None:
        self.bodies: dict[str, DataS] = {}
        self.by_key: dict[tuple, str] = {}
        self.lock = threading.RLock()

    def intern(self, key: tuple) -> tuple[str, bool]:
        with self.lock:
            name = self.by_key.get(key)
            if name is not None:
                return name, False
            name = f"_n{len(self.by_key)}"
            self.by_key[key] = name
            return name, True


_TABLE = _Table()


def production(ref: Ref) -> DataS:
    return _TABLE.bodies[ref.name]


def alternatives(s: Shape) -> tuple:
    """Constructor choices of a data shape; empty for other shapes."""
    if isinstance(s, Ref):
        return production(s).choices
    if isinstance(s, DataS):
        return s.choices
    return ()


def adt_of(s: Shape) -> Optional[str]:
    if isinstance(s, Ref):
        return production(s).adt
    if isinstance(s, DataS):
        return s.adt
    return None


def constructors(s: Shape) -> list[str]:
    return [k for k, _ in alternatives(s)]


# -- builder and canonicalisation -------------------------------------------

class _Builder:
    """Accumulates fresh equations and turns them into canonical shapes."""

    def __init__(self) -> None:
        self.eqs: dict[str, DataS] = {}
        self.nfa: dict[str, list[DataS]] = {}
        self.memo: dict = {}
        self.count = 0

    def fresh(self) -> str:
        self.count += 1
        return f"#{self.count}"

    def bodies(self, s: Shape) -> list[DataS]:
        if isinstance(s, DataS):
            return [s]
        name = s.name
        if name in self.nfa:
            return self.nfa[name]
        if name in self.eqs:
            return [self.eqs[name]]
        return [_TABLE.bodies[name]]

    def body(self, s: Shape) -> DataS:
        bs = self.bodies(s)
        if len(bs) == 1:
            return bs[0]
        merged = self._join_data(frozenset(bs))
        return self.eqs[merged.name]

    # joins of arbitrary finite families

    def join_all(self, items: Iterable[Shape]) -> Shape:
        group = frozenset(s for s in items if s != BOT)
        if not group:
            return BOT
        if len(group) == 1:
            (only,) = group
            if not _has_local(only):
                return only
        if TOP in group:
            return TOP
        kinds = {type(s) for s in group}
        if kinds <= {Ref, DataS}:
            return self._join_data(group)
        if len(kinds) > 1:
            return TOP
        kind = kinds.pop()
        if kind is IntS:
            return IntS(min(s.lo for s in group), max(s.hi for s in group))
        if kind is StrS:
            if any(s.consts is None for s in group):
                return ANY_STR
            return str_shape(frozenset().union(*(s.consts for s in group)))
        elem = self.join_all(s.elem for s in group)
        return set_shape(elem, min(s.lo for s in group), max(s.hi for s in group))

    def _join_data(self, group: frozenset) -> Shape:
        if group in self.memo:
            return Ref(self.memo[group])
        bodies = [b for s in group for b in self.bodies(s)]
        adts = {b.adt for b in bodies}
        if len(adts) > 1:
            return TOP
        name = self.fresh()
        self.memo[group] = name
        merged: dict[str, list[tuple]] = {}
        for b in bodies:
            for k, args in b.choices:
                merged.setdefault(k, []).append(args)
        choices = []
        for k in sorted(merged):
            rows = merged[k]
            choices.append((k, tuple(self.join_all(r[i] for r in rows) for i in range(len(rows[0])))))
        self.eqs[name] = DataS(adts.pop(), tuple(choices))
        return Ref(name)

    # meets

    def meet(self, x: Shape, y: Shape) -> Shape:
        if x == y and not _has_local(x):
            return x
        if x == BOT or y == BOT:
            return BOT
        if x == TOP:
            return y
        if y == TOP:
            return x
        xd, yd = isinstance(x, (Ref, DataS)), isinstance(y, (Ref, DataS))
        if xd and yd:
            key = ("meet", x, y)
            if key in self.memo:
                return Ref(self.memo[key])
            bx, by = self.body(x), self.body(y)
            if bx.adt != by.adt:
                return BOT
            name = self.fresh()
            self.memo[key] = name
            ys = dict(by.choices)
            choices = []
            for k, args in bx.choices:
                if k in ys:
                    choices.append((k, tuple(self.meet(a, b) for a, b in zip(args, ys[k]))))
            self.eqs[name] = DataS(bx.adt, tuple(choices))
            return Ref(name)
        if type(x) is not type(y):
            return BOT
        if isinstance(x, IntS):
            return int_shape(max(x.lo, y.lo), min(x.hi, y.hi))
        if isinstance(x, StrS):
            if x.consts is None:
                return y
            if y.consts is None:
                return x
            return str_shape(x.consts & y.consts)
        return set_shape(self.meet(x.elem, y.elem), max(x.lo, y.lo), min(x.hi, y.hi))

    # widening product: x is the previous iterate, y the new one

    def widen(self, x: Shape, y: Shape) -> Shape:
        if x == y and not _has_local(x):
            return x
        if y == BOT:
            return x
        if x == BOT:
            return y
        if x == TOP or y == TOP:
            return TOP
        xd, yd = isinstance(x, (Ref, DataS)), isinstance(y, (Ref, DataS))
        if xd and yd:
            key = ("widen", x, y)
            if key in self.memo:
                return Ref(self.memo[key])
            bx, by = self.body(x), self.body(y)
            if bx.adt != by.adt:
                return TOP
            name = self.fresh()
            self.memo[key] = name
            xs, ys = dict(bx.choices), dict(by.choices)
            choices = []
            for k in sorted(set(xs) | set(ys)):
                if k in xs and k in ys:
                    choices.append((k, tuple(self.widen(a, b) for a, b in zip(xs[k], ys[k]))))
                else:
                    choices.append((k, xs.get(k, ys.get(k))))
            self.eqs[name] = DataS(bx.adt, tuple(choices))
            return Ref(name)
        if type(x) is not type(y):
            return TOP
        if isinstance(x, IntS):
            lo, hi = widen_bounds(x.lo, x.hi, y.lo, y.hi)
            return IntS(lo, hi)
        if isinstance(x, StrS):
            return self.join_all((x, y))
        lo, hi = widen_bounds(x.lo, x.hi, y.lo, y.hi)
        return set_shape(self.widen(x.elem, y.elem), max(lo, 0), hi)

    # canonical form

    def finish(self, root: Shape) -> Shape:
        if not _has_local(root):
            return root
        g = _Graph(self)
        top_term = g.term(root)
        return g.canonical(top_term)


class _Graph:
    """Data nodes reachable from a root, trimmed, minimised and interned."""

    def __init__(self, builder: _Builder):
        self.builder = builder
        self.ids: dict = {}
        self.nodes: list = []  # (adt, ((ctor, (term, ...)), ...))
        self.globals: dict[int, str] = {}

    def node(self, s: Shape) -> int:
        key = s if isinstance(s, DataS) else s.name
        i = self.ids.get(key)
        if i is not None:
            return i
        i = len(self.nodes)
        self.ids[key] = i
        self.nodes.append(None)
        if isinstance(s, Ref) and not _is_local(s.name):
            self.globals[i] = s.name
        b = self.builder.body(s)
        self.nodes[i] = (b.adt, tuple((k, tuple(self.term(a) for a in args)) for k, args in b.choices))
        return i

    def term(self, s: Shape) -> tuple:
        if isinstance(s, (Ref, DataS)):
            return ("d", self.node(s))
        if isinstance(s, SetS):
            return ("s", self.term(s.elem), s.lo, s.hi)
        return ("l", s)

    def canonical(self, root: tuple) -> Shape:
        n = len(self.nodes)
        live = [False] * n

        def alive(t: tuple) -> bool:
            if t[0] == "d":
                return live[t[1]]
            if t[0] == "s":
                return t[2] == 0 or alive(t[1])
            return t[1] != BOT

        changed = True
        while changed:
            changed = False
            for i, (_, choices) in enumerate(self.nodes):
                if not live[i] and any(all(alive(t) for t in args) for _, args in choices):
                    live[i] = True
                    changed = True

        def prune(t: tuple) -> tuple:
            if t[0] == "s":
                inner = prune(t[1])
                if t[3] == 0 or inner == ("l", BOT):
                    return ("s", ("l", BOT), 0, 0) if t[2] == 0 else ("l", BOT)
                return ("s", inner, t[2], t[3])
            if t[0] == "d" and not live[t[1]]:
                return ("l", BOT)
            return t

        pruned = []
        for i, (adt, choices) in enumerate(self.nodes):
            if not live[i]:
                pruned.append(None)
                continue
            keep = []
            for k, args in choices:
                if all(alive(t) for t in args):
                    keep.append((k, tuple(prune(t) for t in args)))
            pruned.append((adt, tuple(keep)))
        root = prune(root)

        # Moore-style partition refinement over live nodes
        cls = {i: 0 for i in range(n) if live[i]}

        def tsig(t: tuple):
            if t[0] == "d":
                return ("d", cls[t[1]])
            if t[0] == "s":
                return ("s", tsig(t[1]), t[2], t[3])
            return t

        count = 1
        while True:
            sigs = {i: (cls[i], pruned[i][0], tuple((k, tuple(tsig(t) for t in args))
                                                    for k, args in pruned[i][1])) for i in cls}
            numbering: dict = {}
            new = {i: numbering.setdefault(sigs[i], len(numbering)) for i in sorted(cls)}
            cls = new
            if len(numbering) == count:
                break
            count = len(numbering)

        members: dict[int, list[int]] = {}
        for i, c in cls.items():
            members.setdefault(c, []).append(i)
        rep = {c: ms[0] for c, ms in members.items()}

        def shape_sig(c: int):
            adt, choices = pruned[rep[c]]
            return adt, tuple((k, tuple(tsig(t) for t in args)) for k, args in choices)

        names: dict[int, str] = {}
        for c, ms in members.items():
            for i in ms:
                if i in self.globals:
                    names[c] = self.globals[i]
                    break

        def key_of(c: int) -> tuple:
            order = {c: 0}
            queue = [c]
            parts = []
            while queue:
                cur = queue.pop(0)
                adt, choices = pruned[rep[cur]]

                def local(t: tuple):
                    if t[0] == "d":
                        j = cls[t[1]]
                        if j not in order:
                            order[j] = len(order)
                            queue.append(j)
                        return ("d", order[j])
                    if t[0] == "s":
                        return ("s", local(t[1]), t[2], t[3])
                    return t

                parts.append((adt, tuple((k, tuple(local(t) for t in args)) for k, args in choices)))
            return tuple(parts)

        fresh: list[int] = []
        for c in members:
            if c not in names:
                name, is_new = _TABLE.intern(key_of(c))
                names[c] = name
                if is_new:
                    fresh.append(c)

        def to_shape(t: tuple) -> Shape:
            if t[0] == "d":
                return Ref(names[cls[t[1]]])
            if t[0] == "s":
                return set_shape(to_shape(t[1]), t[2], t[3])
            return t[1]

        with _TABLE.lock:
            for c in fresh:
                adt, choices = pruned[rep[c]]
                if names[c] not in _TABLE.bodies:
                    _TABLE.bodies[names[c]] = DataS(
                        adt, tuple((k, tuple(to_shape(t) for t in args)) for k, args in choices))
        return to_shape(root)


def data(adt: str, choices) -> Shape:
    """Build a data shape from a mapping (or pairs) ctor -> argument shapes."""
    items = choices.items() if isinstance(choices, dict) else choices
    b = _Builder()
    body = DataS(adt, tuple(sorted((k, tuple(args)) for k, args in items)))
    return b.finish(body) if body.choices else BOT


def cons(ctor: str, *args: Shape, adt: str) -> Shape:
    return data(adt, {ctor: args})


def solve_equations(eqs: dict, roots: Iterable[str]) -> dict[str, Shape]:
    """Canonicalise a system of mutually recursive productions.

    A body is a DataS or a list of DataS alternatives to be joined.  Bodies refer to each other through ``Ref(name)`` with the same
    names used as keys; names already present in the production table are
    read from there.
    """
    b = _Builder()
    rename = {n: f"#{n}" for n in eqs}

    def sub(s: Shape) -> Shape:
        if isinstance(s, Ref) and s.name in rename:
            return Ref(rename[s.name])
        if isinstance(s, SetS):
            return SetS(sub(s.elem), s.lo, s.hi)
        if isinstance(s, DataS):
            return DataS(s.adt, tuple((k, tuple(sub(a) for a in args)) for k, args in s.choices))
        return s

    for n, body in eqs.items():
        if isinstance(body, list):
            b.nfa[rename[n]] = [sub(x) for x in body]
        else:
            b.eqs[rename[n]] = sub(body)
    return {r: b.finish(Ref(rename[r])) for r in roots}


# -- full types --------------------------------------------------------------

def full_shape(t: TypeExpr, env: Optional[DataEnv] = None) -> Shape:
    """The shape denoting every value of type t."""
    if isinstance(t, VoidT):
        return BOT
    if isinstance(t, ValueT):
        return TOP
    if isinstance(t, IntT):
        return ANY_INT
    if isinstance(t, StrT):
        return ANY_STR
    if isinstance(t, SetT):
        return set_shape(full_shape(t.elem, env), 0, INF)
    if env is None:
        raise ValueError("data declarations needed for an algebraic type")
    cache = env.cache.setdefault("full", {})
    if t.name not in cache:
        eqs = {}
        for adt, decl in env.adts.items():
            eqs[adt] = DataS(adt, tuple(sorted(
                (c.name, tuple(_full_term(p.type) for p in c.params)) for c in decl.constructors)))
        cache.update(solve_equations(eqs, list(env.adts)))
    return cache[t.name]


def _full_term(t: TypeExpr) -> Shape:
    if isinstance(t, AdtT):
        return Ref(t.name)
    if isinstance(t, SetT):
        return SetS(_full_term(t.elem), 0, INF)
    return full_shape(t)


def shape_type(s: Shape) -> TypeExpr:
    if s == BOT:
        return VOID
    if isinstance(s, IntS):
        return INT
    if isinstance(s, StrS):
        return STR
    if isinstance(s, SetS):
        return SetT(shape_type(s.elem))
    if isinstance(s, (Ref, DataS)):
        return AdtT(adt_of(s))
    return VALUE


# -- lattice operations ------------------------------------------------------

@lru_cache(maxsize=1 << 18)
def leq(a: Shape, b: Shape) -> bool:
    """Inclusion, decided by a coinductive simulation."""
    return _leq(a, b, set())


def _leq(a: Shape, b: Shape, assumed: set) -> bool:
    if a == b or a == BOT or b == TOP:
        return True
    if a == TOP or b == BOT:
        return False
    if isinstance(a, Ref) and isinstance(b, Ref):
        if (a.name, b.name) in assumed:
            return True
        assumed.add((a.name, b.name))
        ba, bb = production(a), production(b)
        if ba.adt != bb.adt:
            return False
        bs = dict(bb.choices)
        for k, args in ba.choices:
            if k not in bs or not all(_leq(x, y, assumed) for x, y in zip(args, bs[k])):
                return False
        return True
    if type(a) is not type(b):
        return False
    if isinstance(a, IntS):
        return b.lo <= a.lo and a.hi <= b.hi
    if isinstance(a, StrS):
        return b.consts is None or (a.consts is not None and a.consts <= b.consts)
    if isinstance(a, SetS):
        return b.lo <= a.lo and a.hi <= b.hi and _leq(a.elem, b.elem, assumed)
    return False


def equivalent(a: Shape, b: Shape) -> bool:
    return leq(a, b) and leq(b, a)


@lru_cache(maxsize=1 << 18)
def join(a: Shape, b: Shape) -> Shape:
    if a == b or b == BOT:
        return a
    if a == BOT:
        return b
    bld = _Builder()
    return bld.finish(bld.join_all((a, b)))


def join_all(items: Iterable[Shape]) -> Shape:
    out = BOT
    for s in items:
        out = join(out, s)
    return out


@lru_cache(maxsize=1 << 18)
def meet(a: Shape, b: Shape) -> Shape:
    if a == b:
        return a
    bld = _Builder()
    return bld.finish(bld.meet(a, b))


def widen_bounds(lo1: float, hi1: float, lo2: float, hi2: float) -> tuple[float, float]:
    """Interval widening with thresholds; unstable bounds jump outward."""
    if lo2 >= lo1:
        lo = lo1
    else:
        below = [t for t in THRESHOLDS if t <= lo2]
        lo = max(below) if below else -INF
    if hi2 <= hi1:
        hi = hi1
    else:
        above = [t for t in THRESHOLDS if t >= hi2]
        hi = min(above) if above else INF
    return lo, hi


@lru_cache(maxsize=1 << 16)
def widen(a: Shape, b: Shape) -> Shape:
    """Upper bound of a and b that stabilises ascending chains."""
    if leq(b, a):
        return a
    bld = _Builder()
    w = bld.finish(bld.widen(a, b))
    for _ in range(16):
        merges = _fold_candidates(w)
        if not merges:
            break
        w = _apply_folds(w, merges)
    return w


def _root_refs(s: Shape) -> list[str]:
    if isinstance(s, Ref):
        return [s.name]
    if isinstance(s, SetS):
        return _root_refs(s.elem)
    return []


def _child_refs(name: str) -> list[str]:
    out = []
    for _, args in _TABLE.bodies[name].choices:
        for a in args:
            out.extend(_root_refs(a))
    return out


@lru_cache(maxsize=None)
def plain_signature(name: str) -> tuple:
    b = _TABLE.bodies[name]
    return b.adt, frozenset(k for k, _ in b.choices)


@lru_cache(maxsize=None)
def deep_signature(name: str) -> tuple:
    """Constructor set plus a one-level summary of each argument."""
    b = _TABLE.bodies[name]

    def arg(s: Shape):
        if isinstance(s, Ref):
            sub = _TABLE.bodies[s.name]
            return "rec" if sub.adt == b.adt else plain_signature(s.name)
        if isinstance(s, SetS):
            return ("set", arg(s.elem))
        return type(s).__name__

    return b.adt, tuple((k, tuple(arg(a) for a in args)) for k, args in b.choices)


def _fold_candidates(root: Shape) -> dict[str, str]:
    merges: dict[str, str] = {}
    seen: set[str] = set()
    queue: deque = deque()
    for r in _root_refs(root):
        if r not in seen:
            seen.add(r)
            queue.append((r, 0, ()))
    while queue:
        name, depth, chain = queue.popleft()
        for anc in reversed(chain):
            if plain_signature(anc) == plain_signature(name) and (
                    depth > FOLD_DEPTH or deep_signature(anc) == deep_signature(name)):
                merges[name] = anc
                break
        for child in _child_refs(name):
            if child not in seen:
                seen.add(child)
                queue.append((child, depth + 1, chain + (name,)))
    return merges


def _apply_folds(root: Shape, merges: dict[str, str]) -> Shape:
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        while parent.get(x, x) != x:
            x = parent[x]
        return x

    for n, a in merges.items():
        ra, rn = find(a), find(n)
        if ra != rn:
            parent[rn] = ra
    reachable: set[str] = set()
    stack = _root_refs(root)
    while stack:
        x = stack.pop()
        if x in reachable:
            continue
        reachable.add(x)
        stack.extend(_child_refs(x))

    def sub(s: Shape) -> Shape:
        if isinstance(s, Ref) and s.name in reachable:
            return Ref("~" + find(s.name))
        if isinstance(s, SetS):
            return SetS(sub(s.elem), s.lo, s.hi)
        return s

    bld = _Builder()
    for x in reachable:
        b = _TABLE.bodies[x]
        bld.nfa.setdefault("~" + find(x), []).append(
            DataS(b.adt, tuple((k, tuple(sub(a) for a in args)) for k, args in b.choices)))
    return bld.finish(bld.join_all((sub(root),)))


# -- refinement operators ----------------------------------------------------

def exclude(a: Shape, ctor: str) -> Shape:
    """Remove one constructor alternative; other shapes are returned unchanged."""
    if not isinstance(a, Ref):
        return a
    b = production(a)
    rest = tuple((k, args) for k, args in b.choices if k != ctor)
    if len(rest) == len(b.choices):
        return a
    return data(b.adt, rest) if rest else BOT


def single(a: Shape, ctor: str) -> Shape:
    """Restrict a data shape to one constructor alternative."""
    for k, args in alternatives(a):
        if k == ctor:
            return data(adt_of(a), {k: args})
    return BOT


def rel_complement(a: Shape, b: Shape) -> Shape:
    """Sound over-approximation of the values of a that are not in b."""
    return _relc(a, b, 6)


def _relc(a: Shape, b: Shape, fuel: int) -> Shape:
    if a == BOT or leq(a, b):
        return BOT
    if b == BOT or a == TOP or fuel <= 0:
        return a
    if isinstance(a, IntS) and isinstance(b, IntS):
        lo, hi = a.lo, a.hi
        if b.lo <= lo <= b.hi:
            lo = b.hi + 1
        if b.lo <= hi <= b.hi:
            hi = b.lo - 1
        return int_shape(lo, hi)
    if isinstance(a, StrS) and isinstance(b, StrS):
        if a.consts is None:
            return a
        return str_shape(a.consts - b.consts) if b.consts is not None else BOT
    if isinstance(a, SetS) and isinstance(b, SetS):
        if leq(a.elem, b.elem):
            lo, hi = a.lo, a.hi
            if b.lo <= lo <= b.hi:
                lo = b.hi + 1
            if b.lo <= hi <= b.hi:
                hi = b.lo - 1
            return set_shape(a.elem, lo, hi)
        return a
    if isinstance(a, Ref) and isinstance(b, Ref):
        ba, bb = production(a), production(b)
        if ba.adt != bb.adt:
            return a
        bs = dict(bb.choices)
        out = []
        for k, args in ba.choices:
            if k not in bs:
                out.append((k, args))
                continue
            open_ = [i for i, (x, y) in enumerate(zip(args, bs[k])) if not leq(x, y)]
            if not open_:
                continue
            if len(open_) == 1:
                i = open_[0]
                rest = _relc(args[i], bs[k][i], fuel - 1)
                if rest != BOT:
                    out.append((k, args[:i] + (rest,) + args[i + 1:]))
                continue
            out.append((k, args))
        return data(ba.adt, out) if out else BOT
    return a


def abstract_eq(a: Shape, b: Shape) -> Optional[Shape]:
    m = meet(a, b)
    return None if m == BOT else m


def is_singleton(s: Shape) -> bool:
    """True when s denotes exactly one value."""
    if isinstance(s, IntS):
        return s.lo == s.hi
    if isinstance(s, StrS):
        return s.consts is not None and len(s.consts) == 1
    if isinstance(s, SetS):
        return s == EMPTY_SET
    if isinstance(s, Ref):
        return _singleton_ref(s.name, frozenset())
    return False


def _singleton_ref(name: str, seen: frozenset) -> bool:
    if name in seen:
        return False
    b = _TABLE.bodies[name]
    if len(b.choices) != 1:
        return False
    for a in b.choices[0][1]:
        if isinstance(a, Ref):
            if not _singleton_ref(a.name, seen | {name}):
                return False
        elif not is_singleton(a):
            return False
    return True


def abstract_neq(a: Shape, b: Shape) -> set[tuple[Shape, Shape]]:
    """Pairs (a', b') covering every pair of distinct values from a and b."""
    m = meet(a, b)
    out: set[tuple[Shape, Shape]] = set()
    if m == BOT:
        out.add((a, b))
        return out
    ra = rel_complement(a, m)
    if ra != BOT:
        out.add((ra, b))
    rb = rel_complement(b, m)
    if rb != BOT:
        out.add((a, rb))
    if not is_singleton(m):
        # two different values may both lie in the overlap
        out.add((m, m))
    return out


# -- type-directed splitting -------------------------------------------------

SUCCESS, ERROR = "success", "error"


def unfold(a: Shape, t: TypeExpr, env: Optional[DataEnv] = None) -> list[tuple[str, Optional[Shape]]]:
    """Split a into refinements of type t, plus an error outcome if a may lie outside t."""
    if a == BOT:
        return []
    if isinstance(t, ValueT):
        return [(SUCCESS, a)]
    if isinstance(t, VoidT):
        return [(ERROR, None)]
    if isinstance(t, AdtT):
        if isinstance(a, Ref):
            if production(a).adt != t.name:
                return [(ERROR, None)]
            return [(SUCCESS, single(a, k)) for k in constructors(a)]
        if a == TOP:
            full = full_shape(t, env)
            return [(SUCCESS, single(full, k)) for k in constructors(full)] + [(ERROR, None)]
        return [(ERROR, None)]
    if isinstance(t, SetT):
        if isinstance(a, SetS):
            inner = meet(a.elem, full_shape(t.elem, env))
            out = []
            refined = set_shape(inner, a.lo, a.hi)
            if refined != BOT:
                out.append((SUCCESS, refined))
            if not leq(a.elem, full_shape(t.elem, env)):
                out.append((ERROR, None))
            return out
        if a == TOP:
            return [(SUCCESS, full_shape(t, env)), (ERROR, None)]
        return [(ERROR, None)]
    base = full_shape(t)
    if a == TOP:
        return [(SUCCESS, base), (ERROR, None)]
    if type(a) is type(base):
        return [(SUCCESS, a)]
    return [(ERROR, None)]


def refine_to_type(a: Shape, t: TypeExpr, env: Optional[DataEnv]) -> tuple[Shape, bool]:
    """(part of a inside t, whether some of a lies outside t)."""
    full = full_shape(t, env)
    return meet(a, full), not leq(a, full)


def children(a: Shape, env: Optional[DataEnv] = None) -> list[tuple[Shape, Union[tuple, CardSeq]]]:
    """Per-alternative decomposition into (refined shape, children)."""
    if a == BOT:
        return []
    if isinstance(a, Ref):
        return [(single(a, k), args) for k, args in alternatives(a)]
    if isinstance(a, SetS):
        return [(a, CardSeq(a.elem, a.lo, a.hi))]
    if a == TOP:
        out: list = [(set_shape(TOP, 0, INF), CardSeq(TOP, 0, INF)), (ANY_INT, ()), (ANY_STR, ())]
        if env is not None:
            for adt in env.adts:
                full = full_shape(AdtT(adt), env)
                out.extend((single(full, k), args) for k, args in alternatives(full))
        return out
    return [(a, ())]


def reconstruct(refined: Shape, kids, env: Optional[DataEnv] = None) -> list[tuple[str, Optional[Shape]]]:
    """Rebuild a node from traversed children; error when a child breaks its declared type."""
    if isinstance(kids, CardSeq):
        s = set_shape(kids.elem, kids.lo, kids.hi)
        return [] if s == BOT else [(SUCCESS, s)]
    if not kids:
        return [(SUCCESS, refined)]
    if any(k == BOT for k in kids):
        return []
    (ctor, _), = alternatives(refined)
    params = env.param_types(ctor) if env is not None else (VALUE,) * len(kids)
    inside, outside = [], False
    for kid, pt in zip(kids, params):
        m, out = refine_to_type(kid, pt, env)
        inside.append(m)
        outside |= out
    res: list = []
    if all(m != BOT for m in inside):
        res.append((SUCCESS, data(adt_of(refined), {ctor: tuple(inside)})))
    if outside:
        res.append((ERROR, None))
    return res


# -- concretisation ----------------------------------------------------------

STR_SAMPLES = ("a", "b")


def int_samples(lo: float, hi: float) -> list[int]:
    """All integers of small finite intervals, a fixed sample of larger ones."""
    if lo > hi:
        return []
    if lo != -INF and hi != INF and hi - lo <= 5:
        return list(range(int(lo), int(hi) + 1))
    cands = {-2, -1, 0, 1, 2}
    for x in (lo, lo + 1, hi - 1, hi):
        if x not in (INF, -INF):
            cands.add(int(x))
    return sorted(c for c in cands if lo <= c <= hi)


def concretize_bounded(a: Shape, depth: int, width: int, env: Optional[DataEnv] = None) -> frozenset:
    """Values of a up to the given tree depth and set width.

    Exact for finite base shapes; unbounded integer and string shapes contribute
    a fixed finite sample.
    """
    memo: dict = {}

    def go(s: Shape, d: int) -> frozenset:
        if d <= 0 or s == BOT:
            return frozenset()
        key = (s, d)
        if key in memo:
            return memo[key]
        memo[key] = frozenset()
        if isinstance(s, IntS):
            out = frozenset(IntV(i) for i in int_samples(s.lo, s.hi))
        elif isinstance(s, StrS):
            out = frozenset(StrV(x) for x in (sorted(s.consts) if s.consts is not None else STR_SAMPLES))
        elif isinstance(s, SetS):
            elems = sorted(go(s.elem, d - 1), key=_vkey)
            out_l = []
            top = min(s.hi, width, len(elems))
            for n in range(int(s.lo), int(top) + 1):
                out_l.extend(SetV(frozenset(c)) for c in itertools.combinations(elems, n))
            out = frozenset(out_l)
        elif isinstance(s, Ref):
            out_l = []
            for k, args in alternatives(s):
                pools = [go(x, d - 1) for x in args]
                out_l.extend(ConsV(k, tuple(p)) for p in itertools.product(*pools))
            out = frozenset(out_l)
        else:  # Top
            parts = [go(ANY_INT, d), go(ANY_STR, d), go(set_shape(TOP, 0, INF), d)]
            if env is not None:
                parts += [go(full_shape(AdtT(n), env), d) for n in env.adts]
            out = frozenset().union(*parts)
        memo[key] = out
        return out

    return go(a, depth)


def _vkey(v: Value):
    from .concrete import order_key
    return order_key(v)


def member(v: Value, s: Shape) -> bool:
    if s == TOP:
        return True
    if s == BOT:
        return False
    if isinstance(s, IntS):
        return isinstance(v, IntV) and s.lo <= v.value <= s.hi
    if isinstance(s, StrS):
        return isinstance(v, StrV) and (s.consts is None or v.value in s.consts)
    if isinstance(s, SetS):
        return (isinstance(v, SetV) and s.lo <= len(v.elems) <= s.hi
                and all(member(e, s.elem) for e in v.elems))
    if isinstance(s, (Ref, DataS)):
        if not isinstance(v, ConsV):
            return False
        for k, args in alternatives(s):
            if k == v.ctor and len(args) == len(v.args):
                return all(member(x, y) for x, y in zip(v.args, args))
        return False
    return False


def member_seq(vs, s) -> bool:
    """Membership for children representations (tuples or CardSeq)."""
    if isinstance(s, CardSeq):
        return s.lo <= len(vs) <= s.hi and all(member(v, s.elem) for v in vs)
    return len(vs) == len(s) and all(member(v, x) for v, x in zip(vs, s))


# -- rendering ---------------------------------------------------------------

def _fmt_bound(x: float) -> str:
    if x == INF:
        return "inf"
    if x == -INF:
        return "-inf"
    return str(int(x))


def _on_cycle(name: str) -> bool:
    stack, seen = list(_child_refs(name)), set()
    while stack:
        x = stack.pop()
        if x == name:
            return True
        if x not in seen:
            seen.add(x)
            stack.extend(_child_refs(x))
    return False


class Renderer:
    """Prints shapes in `.shape` syntax with stable nonterminal names.

    ``known`` maps shapes to names the reader already has (full data types,
    user nonterminals); other recursive or multi-choice nodes get the data type
    name plus a numeric suffix in first-use order.
    """

    def __init__(self, known: Optional[dict] = None):
        self.known = dict(known or {})
        self.names: dict[str, str] = {}
        self.order: list[str] = []
        self.counter: dict[str, int] = {}
        self.taken = set(self.known.values())

    def name_of(self, ref: Ref) -> str:
        if ref.name not in self.names:
            adt = production(ref).adt
            while True:
                n = self.counter.get(adt, 0) + 1
                self.counter[adt] = n
                cand = f"{adt}{n}"
                if cand not in self.taken:
                    break
            self.taken.add(cand)
            self.names[ref.name] = cand
            self.order.append(ref.name)
        return self.names[ref.name]

    def term(self, s: Shape) -> str:
        if s in self.known:
            return self.known[s]
        if s == BOT:
            return "void"
        if s == TOP:
            return "value"
        if isinstance(s, IntS):
            return "int" if s == ANY_INT else f"int[{_fmt_bound(s.lo)};{_fmt_bound(s.hi)}]"
        if isinstance(s, StrS):
            if s.consts is None:
                return "str"
            return "str{" + ",".join(_quote(c) for c in sorted(s.consts)) + "}"
        if isinstance(s, SetS):
            return "{" + self.term(s.elem) + "}" + f"[{_fmt_bound(s.lo)};{_fmt_bound(s.hi)}]"
        if isinstance(s, Ref):
            alts = alternatives(s)
            if len(alts) == 1 and not _on_cycle(s.name):
                return self.alt(alts[0])
            return self.name_of(s)
        raise TypeError(f"cannot render {s!r}")

    def alt(self, choice: tuple) -> str:
        k, args = choice
        return f"{k}({', '.join(self.term(a) for a in args)})"

    def root(self, s: Shape) -> str:
        """Top-level term; a non-recursive union is spelled out with `|`."""
        if s in self.known:
            return self.known[s]
        if isinstance(s, Ref) and not _on_cycle(s.name):
            return " | ".join(self.alt(c) for c in alternatives(s))
        return self.term(s)

    def productions(self) -> list[tuple[str, str, list[str]]]:
        """(name, data type, alternatives) for every generated nonterminal, in naming order."""
        out = []
        i = 0
        while i < len(self.order):
            ref = Ref(self.order[i])
            alts = [self.alt(c) for c in alternatives(ref)]
            out.append((self.names[ref.name], production(ref).adt, alts))
            i += 1
        return out


def _quote(c: str) -> str:
    return '"' + c.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render(s: Shape, known: Optional[dict] = None) -> str:
    """Root term followed by the refine declarations it uses."""
    r = Renderer(known)
    head = r.root(s)
    lines = [head]
    for name, adt, alts in r.productions():
        lines.append(f"refine {name} of {adt} = {' | '.join(alts)};")
    return "\n".join(lines)


def render_inline(s) -> str:
    if isinstance(s, CardSeq):
        return f"⟨{render_inline(s.elem)},[{_fmt_bound(s.lo)};{_fmt_bound(s.hi)}]⟩"
    if isinstance(s, tuple):
        return "(" + ", ".join(render_inline(x) for x in s) + ")"
    return render(s).replace("\n", " where ")


def render_json(s: Shape, known: Optional[dict] = None) -> dict:
    r = Renderer(known)
    head = r.root(s)
    return {"root": head,
            "nonterminals": {name: {"of": adt, "alternatives": alts}
                             for name, adt, alts in r.productions()}}
