"""Abstract evaluator with bottom-up traversals, solve loops and memoised recursion."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from . import shapes as S
from .amatch import Matcher
from .ast import (
    VALUE, Assign, Call, Case, Cons, Expr, Fail, Program, Seq, SetLit, SetT, Solve,
    TypeExpr, Var, Visit, local_vars,
)
from .shapes import BOT, TOP, CardSeq, Shape
from .state import (
    EMPTY_RESULT, EMPTY_STORE, ERROR, FAIL, SUCCESS, ResultSet, Store, result_join,
    result_join_all, result_leq, result_widen, store_join, store_leq, store_widen,
)

DEFAULT_BUDGET = 1000
KEY_SET_DEPTH = 2


class AnalysisBudgetExceeded(Exception):
    pass


def partition_key(t: TypeExpr, depth: int = KEY_SET_DEPTH) -> TypeExpr:
    """The type with set nesting below `depth` levels replaced by value."""
    if isinstance(t, SetT):
        return SetT(partition_key(t.elem, depth - 1)) if depth > 0 else VALUE
    return t


@dataclass
class MemoEntry:
    input: object
    output: ResultSet


@dataclass
class InputOps:
    leq: Callable
    join: Callable
    widen: Callable
    bottom: object


def _tuple_ops() -> InputOps:
    return InputOps(
        leq=lambda a, b: len(a) == len(b) and all(S.leq(x, y) for x, y in zip(a, b)),
        join=lambda a, b: b if a is None else tuple(S.join(x, y) for x, y in zip(a, b)),
        widen=lambda a, b: b if a is None else tuple(S.widen(x, y) for x, y in zip(a, b)),
        bottom=None,
    )


def _visit_ops() -> InputOps:
    return InputOps(
        leq=lambda a, b: S.leq(a[0], b[0]) and store_leq(a[1], b[1]),
        join=lambda a, b: b if a is None else (S.join(a[0], b[0]), store_join(a[1], b[1])),
        widen=lambda a, b: b if a is None else (S.widen(a[0], b[0]), store_widen(a[1], b[1])),
        bottom=None,
    )


CALL_OPS, VISIT_OPS = _tuple_ops(), _visit_ops()


@dataclass
class Stats:
    rounds: dict = field(default_factory=dict)
    solve_rounds: int = 0


class Analyzer:
    def __init__(self, program: Program, budget: int = DEFAULT_BUDGET):
        self.program = program
        self.env = program.decls
        self.budget = budget
        self.matcher = Matcher(self.env)
        self.tables: dict = {}
        self.stats = Stats()
        self._ftypes = {f.name: self._types_of(f) for f in program.functions}

    def _types_of(self, f) -> dict:
        types = self.program.global_types()
        types.update({p.name: p.type for p in f.params})
        return types

    def full(self, t: TypeExpr) -> Shape:
        return S.full_shape(t, self.env)

    # -- expressions ---------------------------------------------------------

    def aeval(self, e: Expr, st: Store, types: dict) -> ResultSet:
        if st.bottom:
            return EMPTY_RESULT
        if isinstance(e, Var):
            flag, s = st.get(e.name)
            out = {}
            if s != BOT:
                out[SUCCESS] = (s, st)
            if flag:
                out[ERROR] = (None, st)
            return ResultSet.of(out)
        if isinstance(e, Assign):
            return self._bind_success(self.aeval(e.value, st, types),
                                      lambda v, s2: self._assign(e.name, v, s2, types))
        if isinstance(e, Seq):
            return self._bind_success(self.aeval(e.first, st, types),
                                      lambda v, s2: self.aeval(e.second, s2, types))
        if isinstance(e, Cons):
            return self._bind_success(self.aeval_seq(e.args, st, types),
                                      lambda vs, s2: self._construct(e.ctor, vs, s2))
        if isinstance(e, SetLit):
            def build(vs, s2):
                elem = S.join_all(vs)
                return ResultSet.single(SUCCESS, S.set_shape(elem, 0, len(vs)), s2)
            return self._bind_success(self.aeval_seq(e.elems, st, types), build)
        if isinstance(e, Fail):
            return ResultSet.single(FAIL, None, st)
        if isinstance(e, Visit):
            return self._bind_success(self.aeval(e.subject, st, types),
                                      lambda v, s2: self._visit_expr(e, v, s2, types))
        if isinstance(e, Solve):
            return self.asolve(e, st, types)
        if isinstance(e, Call):
            def call(vs, s2):
                r = self.acall(e.func, vs)
                return ResultSet.of({k: (v, s2) for k, (v, _) in r.entries})
            return self._bind_success(self.aeval_seq(e.args, st, types), call)
        raise TypeError(f"not an expression: {e!r}")

    @staticmethod
    def _bind_success(r: ResultSet, k) -> ResultSet:
        """Feed the success entry to k; other entries pass through."""
        rest = ResultSet(tuple(kv for kv in r.entries if kv[0] != SUCCESS))
        ok = r.get(SUCCESS)
        if ok is None:
            return rest
        return result_join(rest, k(*ok))

    def _assign(self, x: str, v: Shape, st: Store, types: dict) -> ResultSet:
        full = self.full(types.get(x, VALUE))
        out = {}
        m = S.meet(v, full)
        if m != BOT:
            out[SUCCESS] = (m, st.set(x, False, m))
        if not S.leq(v, full):
            out[ERROR] = (None, st)
        return ResultSet.of(out)

    def _construct(self, ctor: str, vs: tuple, st: Store) -> ResultSet:
        adt = self.env.adt_of(ctor)
        out = {}
        inside, outside = [], False
        for v, t in zip(vs, self.env.param_types(ctor)):
            m, bad = S.refine_to_type(v, t, self.env)
            inside.append(m)
            outside |= bad
        if all(m != BOT for m in inside):
            out[SUCCESS] = (S.data(adt, {ctor: tuple(inside)}), st)
        if outside:
            out[ERROR] = (None, st)
        return ResultSet.of(out)

    def aeval_seq(self, es, st: Store, types: dict) -> ResultSet:
        acc = ResultSet.single(SUCCESS, (), st)
        for e in es:
            acc = self._bind_success(
                acc, lambda vs, s2, e=e: self._bind_success(
                    self.aeval(e, s2, types),
                    lambda v, s3, vs=vs: ResultSet.single(SUCCESS, vs + (v,), s3)))
        return acc

    # -- solve -----------------------------------------------------------------

    def asolve(self, e: Solve, st: Store, types: dict) -> ResultSet:
        inv = st
        for _ in range(self.budget):
            self.stats.solve_rounds += 1
            r = self.aeval(e.body, inv, types)
            nxt = store_widen(inv, store_join(inv, r.store(SUCCESS)))
            if store_leq(nxt, inv):
                return r
            inv = nxt
        raise AnalysisBudgetExceeded(f"solve loop did not stabilise within {self.budget} rounds")

    # -- calls -----------------------------------------------------------------

    def acall(self, fname: str, vs: tuple) -> ResultSet:
        f = self.program.function(fname)
        inside, outside = [], False
        for v, p in zip(vs, f.params):
            m, bad = S.refine_to_type(v, p.type, self.env)
            inside.append(m)
            outside |= bad
        out = ResultSet.single(ERROR, None, EMPTY_STORE) if outside else EMPTY_RESULT
        if all(m != BOT for m in inside):
            args = tuple(inside)
            key = tuple(partition_key(S.shape_type(a)) for a in args)
            r = self.memo_fixpoint(("call", fname), key, args, CALL_OPS,
                                   lambda inp: self._call_body(fname, inp, globals_top=False))
            out = result_join(out, r)
        return out

    def entry_store(self, fname: str, args: tuple, globals_top: bool) -> Store:
        f = self.program.function(fname)
        d = {x: (True, BOT) for x in local_vars(f.body)}
        for g in self.program.globals:
            d[g.name] = (True, TOP if globals_top else BOT)
        for p, a in zip(f.params, args):
            d[p.name] = (False, a)
        return Store.of(d)

    def _call_body(self, fname: str, args: tuple, globals_top: bool) -> ResultSet:
        f = self.program.function(fname)
        r = self.aeval(f.body, self.entry_store(fname, args, globals_top), self._ftypes[fname])
        out = {}
        for k, (v, _) in r.entries:
            if k == SUCCESS:
                m, bad = S.refine_to_type(v, f.ret, self.env)
                if m != BOT:
                    out[SUCCESS] = (m, EMPTY_STORE)
                if bad:
                    out[ERROR] = (None, EMPTY_STORE)
            elif k == FAIL:
                out[FAIL] = (None, EMPTY_STORE)
            else:
                out[ERROR] = (None, EMPTY_STORE)
        return ResultSet.of(out)

    def analyze(self, fname: str, args: tuple) -> ResultSet:
        """Entry-point analysis: parameters bound, globals possibly unassigned."""
        f = self.program.function(fname)
        if len(args) != len(f.params):
            raise ValueError(f"function '{fname}' expects {len(f.params)} arguments")
        inside, outside = [], False
        for v, p in zip(args, f.params):
            m, bad = S.refine_to_type(v, p.type, self.env)
            inside.append(m)
            outside |= bad
        out = ResultSet.single(ERROR, None, EMPTY_STORE) if outside else EMPTY_RESULT
        if all(m != BOT for m in inside):
            out = result_join(out, self._call_body(fname, tuple(inside), globals_top=True))
        return out

    # -- memoisation -----------------------------------------------------------

    def memo_fixpoint(self, site, key, inp, ops: InputOps, body) -> ResultSet:
        table = self.tables.setdefault(site, {})
        entry = table.get(key)
        if entry is not None and ops.leq(inp, entry.input):
            return entry.output
        old_in = entry.input if entry is not None else ops.bottom
        out = entry.output if entry is not None else EMPTY_RESULT
        cur = ops.widen(old_in, ops.join(old_in, inp))
        rounds = 0
        while True:
            rounds += 1
            self.stats.rounds[site] = self.stats.rounds.get(site, 0) + 1
            if rounds > self.budget:
                raise AnalysisBudgetExceeded(f"memoised fixpoint at {site[0]} exceeded {self.budget} rounds")
            table[key] = MemoEntry(cur, out)
            snapshot = {s: dict(t) for s, t in self.tables.items()}
            o = body(cur)
            grown = table[key].input
            if not ops.leq(grown, cur):
                # a nested call at this key widened the input
                cur = ops.widen(cur, ops.join(cur, grown))
                out = result_join(out, table[key].output)
                self._restore(snapshot, site, key)
                continue
            if result_leq(o, out):
                table[key] = MemoEntry(cur, out)
                return out
            out = result_widen(out, result_join(out, o))
            self._restore(snapshot, site, key)

    def _restore(self, snapshot: dict, site, key) -> None:
        """Drop results computed under a stale assumption for (site, key)."""
        mine = self.tables[site][key]
        for s, t in self.tables.items():
            t.clear()
            t.update(snapshot.get(s, {}))
        self.tables[site][key] = mine

    # -- traversal -------------------------------------------------------------

    def _visit_expr(self, v: Visit, a: Shape, st: Store, types: dict) -> ResultSet:
        r = self.avisit(v, a, st, types)
        out = {}
        for k, (val, s2) in r.entries:
            if k == ERROR:
                out[ERROR] = (None, s2)
            else:
                # an unchanged value is still a successful visit
                prev = out.get(SUCCESS)
                out[SUCCESS] = (val, s2) if prev is None else (S.join(prev[0], val), store_join(prev[1], s2))
        return ResultSet.of(out)

    def avisit(self, v: Visit, a: Shape, st: Store, types: dict) -> ResultSet:
        if a == BOT or st.bottom:
            return EMPTY_RESULT
        key = partition_key(S.shape_type(a))
        r = self.memo_fixpoint(("visit", id(v)), key, (a, st), VISIT_OPS,
                               lambda inp: self._visit_node(v, inp[0], inp[1], types))
        failed = r.get(FAIL)
        if failed is None:
            return r
        # a failed traversal returns its input unchanged, so widening losses can be cut back
        out = {k: e for k, e in r.entries if k != FAIL}
        kept = S.meet(failed[0], a)
        if kept != BOT:
            out[FAIL] = (kept, failed[1])
        return ResultSet.of(out)

    def _visit_node(self, v: Visit, a: Shape, st: Store, types: dict) -> ResultSet:
        parts = []
        for refined, kids in S.children(a, self.env):
            if isinstance(kids, CardSeq):
                rk = self._visit_set(v, kids, st, types)
            else:
                rk = self._visit_kids(v, kids, st, types)
            for k, (kv, s2) in rk.entries:
                if k == ERROR:
                    parts.append(ResultSet.single(ERROR, None, s2))
                    continue
                for kind, sh in S.reconstruct(refined, kv, self.env):
                    if kind == S.ERROR:
                        parts.append(ResultSet.single(ERROR, None, s2))
                        continue
                    rc = self.aeval_cases(v.cases, sh, s2, types)
                    if k == SUCCESS:
                        # children were rewritten, so the node counts as rewritten
                        rc = _fail_to_success(rc)
                    parts.append(rc)
        return result_join_all(parts)

    def _visit_kids(self, v: Visit, kids: tuple, st: Store, types: dict) -> ResultSet:
        acc = ResultSet.single(FAIL, (), st)
        for kid in kids:
            nxt = [ResultSet(tuple(kv for kv in acc.entries if kv[0] == ERROR))]
            for tag in (SUCCESS, FAIL):
                e = acc.get(tag)
                if e is None:
                    continue
                vs, s1 = e
                r = self.avisit(v, kid, s1, types)
                for rtag, (val, s2) in r.entries:
                    if rtag == ERROR:
                        nxt.append(ResultSet.single(ERROR, None, s2))
                    else:
                        combined = SUCCESS if SUCCESS in (tag, rtag) else FAIL
                        nxt.append(ResultSet.single(combined, vs + (val,), s2))
            acc = result_join_all(nxt)
        return acc

    def _visit_set(self, v: Visit, seq: CardSeq, st: Store, types: dict) -> ResultSet:
        out = []
        if seq.lo == 0:
            out.append(ResultSet.single(FAIL, CardSeq(BOT, 0, 0), st))
        if seq.hi > 0 and seq.elem != BOT:
            inv = st
            for _ in range(self.budget):
                r = self.avisit(v, seq.elem, inv, types)
                stores = [r.store(SUCCESS), r.store(FAIL)]
                nxt = store_widen(inv, store_join(inv, store_join(*stores)))
                if store_leq(nxt, inv):
                    break
                inv = nxt
            else:
                raise AnalysisBudgetExceeded("set traversal store did not stabilise")
            failed, done = r.get(FAIL), r.get(SUCCESS)
            if failed is not None:
                out.append(ResultSet.single(FAIL, CardSeq(failed[0], max(seq.lo, 1), seq.hi), failed[1]))
            if done is not None:
                elem = S.join(done[0], failed[0]) if failed is not None else done[0]
                sto = store_join(done[1], failed[1]) if failed is not None else done[1]
                # rewritten elements may coincide, so only one is guaranteed
                out.append(ResultSet.single(SUCCESS, CardSeq(elem, 1, seq.hi), sto))
            if ERROR in r:
                out.append(ResultSet.single(ERROR, None, r.store(ERROR)))
        return result_join_all(out)

    # -- cases -----------------------------------------------------------------

    def aeval_cases(self, cases: tuple[Case, ...], a: Shape, st: Store, types: dict) -> ResultSet:
        if a == BOT or st.bottom:
            return EMPTY_RESULT
        if not cases:
            return ResultSet.single(FAIL, a, st)
        case, rest = cases[0], cases[1:]
        results = []
        fail_shape, fail_store = BOT, None
        for o in self.matcher.amatch(case.pattern, a, st):
            if o.binding is None:
                fail_shape = S.join(fail_shape, o.shape)
                fail_store = o.store if fail_store is None else store_join(fail_store, o.store)
                continue
            inner = o.store
            for x, s in o.binding.items():
                inner = inner.set(x, False, s)
            r = self.aeval(case.body, inner, types)
            for k, (val, s2) in r.entries:
                if k == FAIL:
                    fail_shape = S.join(fail_shape, o.shape)
                    fail_store = o.store if fail_store is None else store_join(fail_store, o.store)
                    continue
                for x in o.binding:
                    flag, s = o.store.get(x)
                    s2 = s2.set(x, flag, s)
                results.append(ResultSet.single(k, val, s2))
        if fail_store is not None and fail_shape != BOT:
            results.append(self.aeval_cases(rest, fail_shape, fail_store, types))
        return result_join_all(results)


def _fail_to_success(r: ResultSet) -> ResultSet:
    out = {}
    for k, (v, st) in r.entries:
        if k == FAIL:
            k = SUCCESS
        prev = out.get(k)
        if prev is None:
            out[k] = (v, st)
        else:
            out[k] = (S.join(prev[0], v), store_join(prev[1], st))
    return ResultSet.of(out)


def analyze_function(program: Program, entry: str, args, budget: int = DEFAULT_BUDGET) -> ResultSet:
    return Analyzer(program, budget).analyze(entry, tuple(args))
