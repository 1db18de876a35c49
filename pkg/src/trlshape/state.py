"""Abstract stores, result sets and binding merges."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Union

from . import shapes as S
from .shapes import BOT, TOP, CardSeq, Shape

SUCCESS, FAIL, ERROR = "success", "fail", "error"
RES_TYPES = (SUCCESS, FAIL, ERROR)

Entry = tuple  # (maybe_unassigned: bool, shape)
_MISSING: Entry = (True, TOP)


@dataclass(frozen=True)
class Store:
    """Variables mapped to (maybe unassigned, shape); absent names are (True, Top)."""

    entries: tuple = ()
    bottom: bool = False

    @staticmethod
    def of(mapping: Mapping[str, Entry]) -> "Store":
        return Store._normal(dict(mapping))

    @staticmethod
    def _normal(d: dict) -> "Store":
        for flag, s in d.values():
            if not flag and s == BOT:
                return BOTTOM_STORE
        return Store(tuple(sorted((k, v) for k, v in d.items() if v != _MISSING)))

    def get(self, name: str) -> Entry:
        for k, v in self.entries:
            if k == name:
                return v
        return _MISSING

    def as_dict(self) -> dict:
        return dict(self.entries)

    def set(self, name: str, flag: bool, shape: Shape) -> "Store":
        if self.bottom:
            return self
        d = self.as_dict()
        d[name] = (flag, shape)
        return Store._normal(d)

    def without(self, names: Iterable[str]) -> "Store":
        if self.bottom:
            return self
        drop = set(names)
        return Store(tuple((k, v) for k, v in self.entries if k not in drop))

    def names(self) -> set[str]:
        return {k for k, _ in self.entries}

    def __str__(self) -> str:
        if self.bottom:
            return "⊥"
        return "[" + ", ".join(f"{k}↦({'tt' if f else 'ff'},{S.render_inline(s)})"
                               for k, (f, s) in self.entries) + "]"


BOTTOM_STORE = Store((), True)
EMPTY_STORE = Store()


def _pointwise(a: Store, b: Store, f) -> Store:
    da, db = a.as_dict(), b.as_dict()
    return Store._normal({k: f(da.get(k, _MISSING), db.get(k, _MISSING)) for k in set(da) | set(db)})


def store_join(a: Store, b: Store) -> Store:
    if a.bottom:
        return b
    if b.bottom:
        return a
    return _pointwise(a, b, lambda x, y: (x[0] or y[0], S.join(x[1], y[1])))


def store_meet(a: Store, b: Store) -> Store:
    if a.bottom or b.bottom:
        return BOTTOM_STORE
    return _pointwise(a, b, lambda x, y: (x[0] and y[0], S.meet(x[1], y[1])))


def store_widen(a: Store, b: Store) -> Store:
    if a.bottom:
        return b
    if b.bottom:
        return a
    return _pointwise(a, b, lambda x, y: (x[0] or y[0], S.widen(x[1], y[1])))


def store_leq(a: Store, b: Store) -> bool:
    if a.bottom:
        return True
    if b.bottom:
        return False
    da, db = a.as_dict(), b.as_dict()
    for k in set(da) | set(db):
        fa, sa = da.get(k, _MISSING)
        fb, sb = db.get(k, _MISSING)
        if (fa and not fb) or not S.leq(sa, sb):
            return False
    return True


# -- values carried by result entries ---------------------------------------

ResVal = Union[None, Shape, tuple, CardSeq]


def val_join(a: ResVal, b: ResVal) -> ResVal:
    if a is None:
        return b
    if b is None:
        return a
    if isinstance(a, tuple) and isinstance(b, tuple) and len(a) == len(b):
        return tuple(S.join(x, y) for x, y in zip(a, b))
    if isinstance(a, CardSeq) and isinstance(b, CardSeq):
        return CardSeq(S.join(a.elem, b.elem), min(a.lo, b.lo), max(a.hi, b.hi))
    if isinstance(a, Shape) and isinstance(b, Shape):
        return S.join(a, b)
    raise TypeError(f"cannot join result values {a!r} and {b!r}")


def val_widen(a: ResVal, b: ResVal) -> ResVal:
    if a is None:
        return b
    if b is None:
        return a
    if isinstance(a, tuple) and isinstance(b, tuple) and len(a) == len(b):
        return tuple(S.widen(x, y) for x, y in zip(a, b))
    if isinstance(a, CardSeq) and isinstance(b, CardSeq):
        lo, hi = S.widen_bounds(a.lo, a.hi, b.lo, b.hi)
        return CardSeq(S.widen(a.elem, b.elem), max(lo, 0), hi)
    return S.widen(a, b)


def val_leq(a: ResVal, b: ResVal) -> bool:
    if a is None:
        return True
    if b is None:
        return False
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(S.leq(x, y) for x, y in zip(a, b))
    if isinstance(a, CardSeq) and isinstance(b, CardSeq):
        return b.lo <= a.lo and a.hi <= b.hi and (a.hi == 0 or S.leq(a.elem, b.elem))
    if isinstance(a, Shape) and isinstance(b, Shape):
        return S.leq(a, b)
    return False


def _is_empty(v: ResVal) -> bool:
    if isinstance(v, Shape):
        return v == BOT
    if isinstance(v, tuple):
        return any(x == BOT for x in v)
    return False


@dataclass(frozen=True)
class ResultSet:
    """Partial map from result type to (value, store)."""

    entries: tuple = ()  # sorted ((restype, (value, store)), ...)

    @staticmethod
    def of(mapping: Mapping[str, tuple]) -> "ResultSet":
        keep = {}
        for k, (v, st) in mapping.items():
            if st.bottom or (k != ERROR and _is_empty(v)):
                continue
            keep[k] = (None if k == ERROR else v, st)
        return ResultSet(tuple(sorted(keep.items(), key=lambda kv: RES_TYPES.index(kv[0]))))

    @staticmethod
    def single(restype: str, value: ResVal, store: Store) -> "ResultSet":
        return ResultSet.of({restype: (value, store)})

    def get(self, restype: str) -> Optional[tuple]:
        for k, v in self.entries:
            if k == restype:
                return v
        return None

    def __contains__(self, restype: str) -> bool:
        return self.get(restype) is not None

    def keys(self) -> list[str]:
        return [k for k, _ in self.entries]

    def as_dict(self) -> dict:
        return dict(self.entries)

    def value(self, restype: str) -> ResVal:
        e = self.get(restype)
        return None if e is None else e[0]

    def store(self, restype: str) -> Store:
        e = self.get(restype)
        return BOTTOM_STORE if e is None else e[1]

    def __str__(self) -> str:
        parts = []
        for k, (v, st) in self.entries:
            shown = "·" if v is None else (S.render_inline(v) if isinstance(v, Shape) else str(v))
            parts.append(f"{k}↦⟨{shown}, {st}⟩")
        return "[" + ", ".join(parts) + "]"


EMPTY_RESULT = ResultSet()


def _combine(a: ResultSet, b: ResultSet, vf, sf) -> ResultSet:
    da, db = a.as_dict(), b.as_dict()
    out = {}
    for k in set(da) | set(db):
        if k in da and k in db:
            out[k] = (vf(da[k][0], db[k][0]), sf(da[k][1], db[k][1]))
        else:
            out[k] = da.get(k) or db.get(k)
    return ResultSet.of(out)


def result_join(a: ResultSet, b: ResultSet) -> ResultSet:
    return _combine(a, b, val_join, store_join)


def result_join_all(items: Iterable[ResultSet]) -> ResultSet:
    out = EMPTY_RESULT
    for r in items:
        out = result_join(out, r)
    return out


def result_widen(a: ResultSet, b: ResultSet) -> ResultSet:
    return _combine(a, b, val_widen, store_widen)


def result_leq(a: ResultSet, b: ResultSet) -> bool:
    db = b.as_dict()
    for k, (v, st) in a.entries:
        if k not in db:
            return False
        if not val_leq(v, db[k][0]) or not store_leq(st, db[k][1]):
            return False
    return True


def result_equiv(a: ResultSet, b: ResultSet) -> bool:
    return result_leq(a, b) and result_leq(b, a)


def map_stores(r: ResultSet, f) -> ResultSet:
    return ResultSet.of({k: (v, f(st)) for k, (v, st) in r.entries})


# -- binding environments ----------------------------------------------------

Binding = Optional[dict]


def merge_bindings(envs: Iterable[Binding]) -> Binding:
    """Pointwise meet of binding environments; None when any is absent or conflicting."""
    out: dict = {}
    for env in envs:
        if env is None:
            return None
        for x, s in env.items():
            if x in out:
                m = S.meet(out[x], s)
                if m == BOT:
                    return None
                out[x] = m
            else:
                if s == BOT:
                    return None
                out[x] = s
    return out
