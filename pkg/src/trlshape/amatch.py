"""Abstract pattern matching that refines the matched shape and the store."""
from __future__ import annotations

import itertools
from typing import NamedTuple, Optional

from . import shapes as S
from .ast import AdtT, DataEnv, PCons, PSet, PVar, Pattern, Plain, Star, pattern_vars
from .shapes import BOT, TOP, CardSeq, Shape
from .state import Binding, Store, store_join

OUTCOME_CAP = 64


class Outcome(NamedTuple):
    store: Store
    shape: Shape
    binding: Binding  # None: the match failed


def _merge_pair(a: dict, b: dict) -> tuple[Optional[dict], bool]:
    """Merged binding (None on certain conflict) and whether equality may fail."""
    out = dict(a)
    risky = False
    for x, s in b.items():
        if x in out:
            m = S.meet(out[x], s)
            if m == BOT:
                return None, True
            if not (out[x] == s and S.is_singleton(s)):
                risky = True
            out[x] = m
        else:
            out[x] = s
    return out, risky


def _binding_join(a: dict, b: dict) -> dict:
    return {x: S.join(a.get(x, BOT), b.get(x, BOT)) for x in set(a) | set(b)}


def collapse(outs: list[Outcome], cap: int = OUTCOME_CAP) -> list[Outcome]:
    """Join excess outcomes into one success and one failure outcome."""
    seen, uniq = set(), []
    for o in outs:
        key = (o.store, o.shape, None if o.binding is None else frozenset(o.binding.items()))
        if key not in seen:
            seen.add(key)
            uniq.append(o)
    outs = uniq
    if len(outs) <= cap:
        return outs
    res = []
    for ok in (True, False):
        group = [o for o in outs if (o.binding is not None) == ok]
        if not group:
            continue
        st, sh, b = group[0]
        for o in group[1:]:
            st = store_join(st, o.store)
            sh = S.join(sh, o.shape)
            if ok:
                b = _binding_join(b, o.binding)
        res.append(Outcome(st, sh, b))
    return res


class Matcher:
    def __init__(self, env: DataEnv):
        self.env = env

    def amatch(self, p: Pattern, a: Shape, store: Store) -> list[Outcome]:
        if a == BOT or store.bottom:
            return []
        if isinstance(p, PVar):
            return self._var(p.name, a, store)
        if isinstance(p, PCons):
            return collapse(self._cons(p, a, store))
        return collapse(self._set(p, a, store))

    def _var(self, x: str, a: Shape, store: Store) -> list[Outcome]:
        flag, vx = store.get(x)
        outs = []
        if vx != BOT:
            m = S.meet(vx, a)
            if m != BOT:
                outs.append(Outcome(store.set(x, False, m), m, {}))
            for va, vx2 in S.abstract_neq(a, vx):
                outs.append(Outcome(store.set(x, False, vx2), va, None))
        if flag:
            outs.append(Outcome(store.set(x, True, BOT), a, {x: a}))
        return outs

    def _cons(self, p: PCons, a: Shape, store: Store) -> list[Outcome]:
        adt = self.env.adt_of(p.ctor)
        outs: list[Outcome] = []
        for kind, sh in S.unfold(a, AdtT(adt), self.env):
            if kind == S.ERROR:
                outs.append(Outcome(store, a, None))
                continue
            ((k, args),) = S.alternatives(sh)
            if k != p.ctor:
                continue
            outs.extend(self._args(p, adt, args, store))
        rest = S.exclude(a, p.ctor) if isinstance(a, S.Ref) else (a if a == TOP else BOT)
        if rest != BOT:
            outs.append(Outcome(store, rest, None))
        return outs

    def _args(self, p: PCons, adt: str, args: tuple, store: Store) -> list[Outcome]:
        outs: list[Outcome] = []
        partial = [(store, (), {})]
        n = len(args)
        for i in range(n):
            nxt = []
            for st, done, env in partial:
                for o in self.amatch(p.args[i], args[i], st):
                    shape_args = done + (o.shape,) + args[i + 1:]
                    if o.binding is None:
                        outs.append(Outcome(o.store, S.data(adt, {p.ctor: shape_args}), None))
                        continue
                    merged, risky = _merge_pair(env, o.binding)
                    if risky:
                        outs.append(Outcome(o.store, S.data(adt, {p.ctor: shape_args}), None))
                    if merged is not None:
                        nxt.append((o.store, done + (o.shape,), merged))
            partial = collapse_partial(nxt)
        for st, done, env in partial:
            sh = S.data(adt, {p.ctor: done})
            if sh != BOT and not st.bottom:
                outs.append(Outcome(st, sh, env))
        return [o for o in outs if o.shape != BOT and not o.store.bottom]

    def _set(self, p: PSet, a: Shape, store: Store) -> list[Outcome]:
        if a == TOP:
            seq = CardSeq(TOP, 0, S.INF)
            outs = [Outcome(store, TOP, None)]
        elif isinstance(a, S.SetS):
            seq = CardSeq(a.elem, a.lo, a.hi)
            outs = []
        else:
            return [Outcome(store, a, None)]
        succ, may_fail = self.amatch_star(p.elems, seq, store)
        for st, rs, env in succ:
            lo, hi = max(rs.lo, seq.lo), min(rs.hi, seq.hi)
            sh = S.set_shape(rs.elem, lo, hi)
            if sh != BOT:
                outs.append(Outcome(st, sh, env))
        if may_fail and a != TOP:
            outs.append(Outcome(store, a, None))
        return outs

    def amatch_star(self, ps: tuple, seq: CardSeq, store: Store) -> tuple[list, bool]:
        """Successful (store, refined sequence, binding) triples and whether failure is possible."""
        if store.bottom:
            return [], False
        if not ps:
            ok = [(store, CardSeq(BOT, 0, 0), {})] if seq.lo == 0 else []
            return ok, seq.hi > 0
        head, rest = ps[0], ps[1:]
        if isinstance(head, Plain):
            return self._star_plain(head.pattern, rest, seq, store)
        return self._star_var(head.name, rest, seq, store)

    def _star_plain(self, p: Pattern, rest: tuple, seq: CardSeq, store: Store):
        may_fail = seq.lo == 0
        if seq.hi == 0 or seq.elem == BOT:
            return [], True
        out = []
        for o in self.amatch(p, seq.elem, store):
            if o.binding is None:
                may_fail = True
                continue
            tail = CardSeq(seq.elem, max(seq.lo - 1, 0), seq.hi - 1)
            succ, fails = self.amatch_star(rest, tail, o.store)
            may_fail |= fails
            for st, rs, env in succ:
                merged, risky = _merge_pair(o.binding, env)
                may_fail |= risky
                if merged is None:
                    continue
                lo = max(rs.lo + 1, seq.lo)
                hi = min(rs.hi + 1, seq.hi)
                if lo <= hi:
                    out.append((st, CardSeq(S.join(o.shape, rs.elem), lo, hi), merged))
        return _collapse_seq(out), may_fail

    def _star_var(self, x: str, rest: tuple, seq: CardSeq, store: Store):
        flag, vx = store.get(x)
        out = []
        may_fail = False
        if vx != BOT:
            # an already bound star variable: the set must contain it
            may_fail = True
            succ, fails = self.amatch_star(rest, CardSeq(seq.elem, 0, seq.hi), store)
            for st, rs, env in succ:
                out.append((st, seq, env))
        if flag:
            lo, hi = seq.lo, seq.hi
            splits = {(0, 0), (0, hi), (lo, hi)}
            st0 = store.set(x, True, BOT)
            for l2, u2 in sorted(splits):
                bound = S.set_shape(seq.elem, l2, u2)
                if bound == BOT:
                    continue
                tail = CardSeq(seq.elem if hi - l2 > 0 else BOT, max(lo - u2, 0), hi - l2)
                succ, fails = self.amatch_star(rest, tail, st0)
                may_fail |= fails
                for st, rs, env in succ:
                    merged, risky = _merge_pair({x: bound}, env)
                    may_fail |= risky
                    if merged is None:
                        continue
                    elem = S.join(bound.elem if u2 > 0 else BOT, rs.elem)
                    tot_lo = max(l2 + rs.lo, lo)
                    tot_hi = min(u2 + rs.hi, hi)
                    if tot_lo <= tot_hi:
                        out.append((st, CardSeq(elem, tot_lo, tot_hi), merged))
        return _collapse_seq(out), may_fail

    def may_match(self, a: Shape, p: Pattern) -> bool:
        store = Store.of({x: (True, BOT) for x in pattern_vars(p)})
        return any(o.binding is not None for o in self.amatch(p, a, store))


def collapse_partial(items: list) -> list:
    items = list(dict.fromkeys((st, done, tuple(sorted(env.items(), key=lambda kv: kv[0])))
                               for st, done, env in items))
    items = [(st, done, dict(env)) for st, done, env in items]
    if len(items) <= OUTCOME_CAP:
        return items
    st, done, env = items[0]
    for st2, done2, env2 in items[1:]:
        st = store_join(st, st2)
        done = tuple(S.join(x, y) for x, y in zip(done, done2))
        env = _binding_join(env, env2)
    return [(st, done, env)]


def _collapse_seq(items: list) -> list:
    if len(items) <= OUTCOME_CAP:
        return items
    st, rs, env = items[0]
    for st2, rs2, env2 in items[1:]:
        st = store_join(st, st2)
        rs = CardSeq(S.join(rs.elem, rs2.elem), min(rs.lo, rs2.lo), max(rs.hi, rs2.hi))
        env = _binding_join(env, env2)
    return [(st, rs, env)]


def amatch(p: Pattern, a: Shape, store: Store, env: DataEnv) -> list[Outcome]:
    return Matcher(env).amatch(p, a, store)


def may_match(a: Shape, p: Pattern, env: DataEnv) -> bool:
    return Matcher(env).may_match(a, p)
