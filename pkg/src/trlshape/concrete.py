"""Reference interpreter: evaluation, backtracking matching, bottom-up visits, solve."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Union

from .ast import (
    AdtT, Assign, Call, Case, Cons, Expr, Fail, IntT, PCons, PSet, PVar, Pattern,
    Program, Seq, SetLit, SetT, Solve, Star, StrT, TypeExpr, ValueT, Var, Visit, VoidT,
)


# -- values ------------------------------------------------------------------

@dataclass(frozen=True)
class IntV:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class StrV:
    value: str

    def __str__(self) -> str:
        return '"' + self.value.replace("\\", "\\\\").replace('"', '\\"') + '"'


@dataclass(frozen=True)
class ConsV:
    ctor: str
    args: tuple["Value", ...] = ()

    def __str__(self) -> str:
        return f"{self.ctor}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class SetV:
    elems: frozenset = field(default_factory=frozenset)

    def ordered(self) -> list["Value"]:
        return sorted(self.elems, key=order_key)

    def __str__(self) -> str:
        return "{" + ", ".join(str(v) for v in self.ordered()) + "}"


Value = Union[IntV, StrV, ConsV, SetV]


def order_key(v: Value) -> tuple:
    """Total order: ints, then strings, then constructor terms, then sets."""
    if isinstance(v, IntV):
        return (0, v.value)
    if isinstance(v, StrV):
        return (1, v.value)
    if isinstance(v, ConsV):
        return (2, v.ctor, tuple(order_key(a) for a in v.args))
    return (3, tuple(sorted(order_key(e) for e in v.elems)))


def value_depth(v: Value) -> int:
    if isinstance(v, ConsV):
        return 1 + max((value_depth(a) for a in v.args), default=0)
    if isinstance(v, SetV):
        return 1 + max((value_depth(a) for a in v.elems), default=0)
    return 1


# -- evaluation --------------------------------------------------------------

class ResType(str, Enum):
    SUCCESS = "success"
    FAIL = "fail"
    ERROR = "error"


SUCCESS, FAIL, ERROR = ResType.SUCCESS, ResType.FAIL, ResType.ERROR

Store = dict  # identifier -> Value
Result = tuple  # (ResType, Optional[Value], Store)


class BudgetExceeded(Exception):
    pass


def has_type(v: Value, t: TypeExpr, program: Program) -> bool:
    if isinstance(t, ValueT):
        return True
    if isinstance(t, VoidT):
        return False
    if isinstance(t, IntT):
        return isinstance(v, IntV)
    if isinstance(t, StrT):
        return isinstance(v, StrV)
    if isinstance(t, SetT):
        return isinstance(v, SetV) and all(has_type(e, t.elem, program) for e in v.elems)
    return isinstance(v, ConsV) and program.decls.adt_of(v.ctor) == t.name


class Interpreter:
    """Concrete semantics with a global step budget."""

    def __init__(self, program: Program, budget: int = 10**6):
        self.program = program
        self.budget = budget
        self.steps = 0
        self.solve_iterations: list[int] = []

    def _tick(self) -> None:
        self.steps += 1
        if self.steps > self.budget:
            raise BudgetExceeded(f"step budget {self.budget} exhausted")

    # expressions

    def eval(self, e: Expr, store: Store, types: Optional[dict] = None) -> Result:
        types = types if types is not None else {}
        self._tick()
        if isinstance(e, Var):
            if e.name in store:
                return SUCCESS, store[e.name], store
            return ERROR, None, store
        if isinstance(e, Assign):
            t, v, st = self.eval(e.value, store, types)
            if t is not SUCCESS:
                return t, v, st
            if not has_type(v, types.get(e.name, ValueT()), self.program):
                return ERROR, None, st
            st = dict(st)
            st[e.name] = v
            return SUCCESS, v, st
        if isinstance(e, Seq):
            t, v, st = self.eval(e.first, store, types)
            if t is not SUCCESS:
                return t, v, st
            return self.eval(e.second, st, types)
        if isinstance(e, Cons):
            t, vs, st = self._eval_all(e.args, store, types)
            if t is not SUCCESS:
                return t, vs, st
            for v, pt in zip(vs, self.program.decls.param_types(e.ctor)):
                if not has_type(v, pt, self.program):
                    return ERROR, None, st
            return SUCCESS, ConsV(e.ctor, tuple(vs)), st
        if isinstance(e, SetLit):
            t, vs, st = self._eval_all(e.elems, store, types)
            if t is not SUCCESS:
                return t, vs, st
            return SUCCESS, SetV(frozenset(vs)), st
        if isinstance(e, Fail):
            return FAIL, None, store
        if isinstance(e, Visit):
            t, v, st = self.eval(e.subject, store, types)
            if t is not SUCCESS:
                return t, v, st
            t, v, st = self.visit_bottom_up(e.cases, v, st, types)
            if t is ERROR:
                return ERROR, None, st
            return SUCCESS, v, st
        if isinstance(e, Solve):
            return self.solve_eval(e.vars, e.body, store, types)
        if isinstance(e, Call):
            t, vs, st = self._eval_all(e.args, store, types)
            if t is not SUCCESS:
                return t, vs, st
            t, v = self.call(e.func, vs)
            return t, v, st
        raise TypeError(f"not an expression: {e!r}")

    def _eval_all(self, es, store: Store, types: dict):
        vals = []
        for a in es:
            t, v, store = self.eval(a, store, types)
            if t is not SUCCESS:
                return t, v, store
            vals.append(v)
        return SUCCESS, vals, store

    def call(self, name: str, args) -> tuple[ResType, Optional[Value]]:
        f = self.program.function(name)
        for v, p in zip(args, f.params):
            if not has_type(v, p.type, self.program):
                return ERROR, None
        types = self.program.global_types()
        types.update({p.name: p.type for p in f.params})
        store = {p.name: v for p, v in zip(f.params, args)}
        t, v, _ = self.eval(f.body, store, types)
        if t is SUCCESS and not has_type(v, f.ret, self.program):
            return ERROR, None
        return t, (v if t is SUCCESS else None)

    def solve_eval(self, names, body: Expr, store: Store, types: Optional[dict] = None) -> Result:
        types = types if types is not None else {}
        rounds = 0
        while True:
            self._tick()
            rounds += 1
            t, v, st = self.eval(body, store, types)
            if t is not SUCCESS or all(st.get(x) == store.get(x) for x in names):
                self.solve_iterations.append(rounds)
                return t, v, st
            store = st

    # traversal

    def visit_bottom_up(self, cases, v: Value, store: Store, types: Optional[dict] = None) -> Result:
        types = types if types is not None else {}
        self._tick()
        changed = False
        if isinstance(v, ConsV):
            kids = []
            for a, pt in zip(v.args, self.program.decls.param_types(v.ctor)):
                t, a2, store = self.visit_bottom_up(cases, a, store, types)
                if t is ERROR:
                    return ERROR, None, store
                if not has_type(a2, pt, self.program):
                    return ERROR, None, store
                changed |= t is SUCCESS
                kids.append(a2)
            rebuilt: Value = ConsV(v.ctor, tuple(kids))
        elif isinstance(v, SetV):
            kids = []
            for a in v.ordered():
                t, a2, store = self.visit_bottom_up(cases, a, store, types)
                if t is ERROR:
                    return ERROR, None, store
                changed |= t is SUCCESS
                kids.append(a2)
            rebuilt = SetV(frozenset(kids))
        else:
            rebuilt = v
        t, r, st = self.eval_cases(cases, rebuilt, store, types)
        if t is SUCCESS:
            return SUCCESS, r, st
        if t is ERROR:
            return ERROR, None, st
        return (SUCCESS if changed else FAIL), rebuilt, st

    def eval_cases(self, cases: tuple[Case, ...], v: Value, store: Store, types: dict) -> Result:
        for case in cases:
            for env in self.match(case.pattern, v, store):
                inner = dict(store)
                inner.update(env)
                t, r, st = self.eval(case.body, inner, types)
                if t is FAIL:
                    continue
                if env:
                    st = {x: w for x, w in st.items() if x not in env}
                return t, r, st
        return FAIL, None, store

    # matching

    def match(self, p: Pattern, v: Value, store: Store) -> Iterator[dict]:
        """All binding environments for fresh variables, each reported once."""
        seen = set()
        for env in self._match(p, v, store, {}):
            key = frozenset(env.items())
            if key not in seen:
                seen.add(key)
                yield env

    def _match(self, p: Pattern, v: Value, store: Store, env: dict) -> Iterator[dict]:
        self._tick()
        if isinstance(p, PVar):
            if p.name in store:
                if store[p.name] == v:
                    yield env
            elif p.name in env:
                if env[p.name] == v:
                    yield env
            else:
                yield {**env, p.name: v}
        elif isinstance(p, PCons):
            if isinstance(v, ConsV) and v.ctor == p.ctor and len(v.args) == len(p.args):
                yield from self._match_args(p.args, v.args, 0, store, env)
        elif isinstance(p, PSet):
            if isinstance(v, SetV):
                yield from self._match_set(p.elems, tuple(v.ordered()), store, env)

    def _match_args(self, ps, vs, i: int, store: Store, env: dict) -> Iterator[dict]:
        if i == len(ps):
            yield env
            return
        for env2 in self._match(ps[i], vs[i], store, env):
            yield from self._match_args(ps, vs, i + 1, store, env2)

    def _match_set(self, pats, remaining: tuple, store: Store, env: dict) -> Iterator[dict]:
        if not pats:
            if not remaining:
                yield env
            return
        head, rest = pats[0], pats[1:]
        if isinstance(head, Star):
            bound = store.get(head.name, env.get(head.name))
            if bound is not None:
                if isinstance(bound, SetV) and bound.elems <= frozenset(remaining):
                    left = tuple(e for e in remaining if e not in bound.elems)
                    yield from self._match_set(rest, left, store, env)
                return
            for size in range(len(remaining) + 1):
                for chosen in itertools.combinations(range(len(remaining)), size):
                    picked = frozenset(remaining[i] for i in chosen)
                    left = tuple(e for i, e in enumerate(remaining) if i not in chosen)
                    yield from self._match_set(rest, left, store, {**env, head.name: SetV(picked)})
        else:
            for i, e in enumerate(remaining):
                for env2 in self._match(head.pattern, e, store, env):
                    yield from self._match_set(rest, remaining[:i] + remaining[i + 1:], store, env2)


def run_function(program: Program, name: str, args, budget: int = 10**6) -> tuple[ResType, Optional[Value]]:
    try:
        return Interpreter(program, budget).call(name, list(args))
    except RecursionError:
        # values grew too deep to traverse: treat as a diverging run
        raise BudgetExceeded("value nesting exceeded the interpreter's recursion limit") from None
