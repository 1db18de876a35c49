"""Abstract syntax, types and static checks for the transformation language."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Union


class StaticError(Exception):
    """Ill-formed program: unknown names, arity mismatches, duplicates."""

    def __init__(self, message: str, span: "Optional[SourceSpan]" = None):
        self.message = message
        self.span = span
        super().__init__(f"{span}: {message}" if span else message)


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


# -- types -------------------------------------------------------------------

@dataclass(frozen=True)
class VoidT:
    def __str__(self) -> str:
        return "void"


@dataclass(frozen=True)
class ValueT:
    def __str__(self) -> str:
        return "value"


@dataclass(frozen=True)
class IntT:
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class StrT:
    def __str__(self) -> str:
        return "str"


@dataclass(frozen=True)
class SetT:
    elem: "TypeExpr"

    def __str__(self) -> str:
        return f"set<{self.elem}>"


@dataclass(frozen=True)
class AdtT:
    name: str

    def __str__(self) -> str:
        return self.name


TypeExpr = Union[VoidT, ValueT, IntT, StrT, SetT, AdtT]

VOID, VALUE, INT, STR = VoidT(), ValueT(), IntT(), StrT()


# -- declarations ------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    type: TypeExpr
    name: str


@dataclass(frozen=True)
class Constructor:
    name: str
    params: tuple[Param, ...]

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class DataDecl:
    name: str
    constructors: tuple[Constructor, ...]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


# -- expressions -------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Assign:
    name: str
    value: "Expr"
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Seq:
    first: "Expr"
    second: "Expr"
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Cons:
    ctor: str
    args: tuple["Expr", ...]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SetLit:
    elems: tuple["Expr", ...]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Fail:
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Case:
    pattern: "Pattern"
    body: "Expr"


@dataclass(frozen=True)
class Visit:
    """Bottom-up visit; analyses key their memo tables on the node identity."""

    subject: "Expr"
    cases: tuple[Case, ...]
    strategy: str = "bottom-up"
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Solve:
    vars: tuple[str, ...]
    body: "Expr"
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


Expr = Union[Var, Assign, Seq, Cons, SetLit, Fail, Visit, Solve, Call]


# -- patterns ----------------------------------------------------------------

@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PCons:
    ctor: str
    args: tuple["Pattern", ...]


@dataclass(frozen=True)
class Plain:
    pattern: "Pattern"


@dataclass(frozen=True)
class Star:
    name: str


StarPattern = Union[Plain, Star]


@dataclass(frozen=True)
class PSet:
    elems: tuple[StarPattern, ...]


Pattern = Union[PVar, PCons, PSet]


# -- program -----------------------------------------------------------------

@dataclass(frozen=True)
class Function:
    name: str
    ret: TypeExpr
    params: tuple[Param, ...]
    body: Expr
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Program:
    datadecls: tuple[DataDecl, ...] = ()
    globals: tuple[Param, ...] = ()
    functions: tuple[Function, ...] = ()

    @cached_property
    def decls(self) -> "DataEnv":
        return DataEnv(self.datadecls)

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise StaticError(f"unknown function '{name}'")

    def global_types(self) -> dict[str, TypeExpr]:
        return {g.name: g.type for g in self.globals}


class DataEnv:
    """Lookup tables over the data declarations of a program."""

    def __init__(self, datadecls: tuple[DataDecl, ...]):
        self.datadecls = datadecls
        self.adts: dict[str, DataDecl] = {}
        self.ctors: dict[str, tuple[str, Constructor]] = {}
        for d in datadecls:
            if d.name in self.adts:
                raise StaticError(f"data type '{d.name}' declared twice", d.span)
            self.adts[d.name] = d
            for c in d.constructors:
                if c.name in self.ctors:
                    raise StaticError(f"constructor '{c.name}' declared twice", d.span)
                self.ctors[c.name] = (d.name, c)
        # scratch space for caches owned by other modules (e.g. full shapes)
        self.cache: dict = {}

    def adt_of(self, ctor: str) -> str:
        return self.ctor(ctor)[0]

    def ctor(self, name: str) -> tuple[str, Constructor]:
        try:
            return self.ctors[name]
        except KeyError:
            raise StaticError(f"unknown constructor '{name}'") from None

    def param_types(self, ctor: str) -> tuple[TypeExpr, ...]:
        return tuple(p.type for p in self.ctor(ctor)[1].params)

    def constructors(self, adt: str) -> tuple[Constructor, ...]:
        try:
            return self.adts[adt].constructors
        except KeyError:
            raise StaticError(f"unknown data type '{adt}'") from None


# -- type relations ----------------------------------------------------------

def check_type(t: TypeExpr, env: Optional[DataEnv]) -> None:
    if isinstance(t, SetT):
        check_type(t.elem, env)
    elif isinstance(t, AdtT) and env is not None and t.name not in env.adts:
        raise StaticError(f"unknown data type '{t.name}'")


def subtype(t1: TypeExpr, t2: TypeExpr, env: Optional[DataEnv] = None) -> bool:
    check_type(t1, env)
    check_type(t2, env)
    return _sub(t1, t2)


def _sub(t1: TypeExpr, t2: TypeExpr) -> bool:
    if isinstance(t1, VoidT) or isinstance(t2, ValueT):
        return True
    if isinstance(t1, SetT) and isinstance(t2, SetT):
        return _sub(t1.elem, t2.elem)
    return t1 == t2


def type_meet(t1: TypeExpr, t2: TypeExpr) -> TypeExpr:
    """Greatest common subtype."""
    if isinstance(t1, ValueT):
        return t2
    if isinstance(t2, ValueT):
        return t1
    if isinstance(t1, SetT) and isinstance(t2, SetT):
        return SetT(type_meet(t1.elem, t2.elem))
    return t1 if t1 == t2 else VOID


def abstract_subtype(t1: TypeExpr, t2: TypeExpr, env: Optional[DataEnv] = None) -> bool:
    """True iff some non-void type lies below both."""
    check_type(t1, env)
    check_type(t2, env)
    return not isinstance(type_meet(t1, t2), VoidT)


# -- variables ---------------------------------------------------------------

def pattern_vars(p: Pattern) -> set[str]:
    out: set[str] = set()
    _collect(p, out)
    return out


def _collect(p: Pattern, out: set[str]) -> None:
    if isinstance(p, PVar):
        out.add(p.name)
    elif isinstance(p, PCons):
        for q in p.args:
            _collect(q, out)
    else:
        for s in p.elems:
            if isinstance(s, Star):
                out.add(s.name)
            else:
                _collect(s.pattern, out)


def subexprs(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, Assign):
        yield from subexprs(e.value)
    elif isinstance(e, Seq):
        yield from subexprs(e.first)
        yield from subexprs(e.second)
    elif isinstance(e, (Cons, SetLit, Call)):
        for a in (e.elems if isinstance(e, SetLit) else e.args):
            yield from subexprs(a)
    elif isinstance(e, Visit):
        yield from subexprs(e.subject)
        for c in e.cases:
            yield from subexprs(c.body)
    elif isinstance(e, Solve):
        yield from subexprs(e.body)


def local_vars(e: Expr) -> set[str]:
    """Variables assigned or bound by patterns anywhere inside e."""
    out: set[str] = set()
    for s in subexprs(e):
        if isinstance(s, Assign):
            out.add(s.name)
        elif isinstance(s, Visit):
            for c in s.cases:
                out |= pattern_vars(c.pattern)
    return out


# -- well-formedness ---------------------------------------------------------

def check_program(prog: Program) -> Program:
    env = prog.decls
    for d in prog.datadecls:
        for c in d.constructors:
            names = [p.name for p in c.params]
            if len(set(names)) != len(names):
                raise StaticError(f"duplicate parameter in constructor '{c.name}'", d.span)
            for p in c.params:
                _check_type_at(p.type, env, d.span)
    for g in prog.globals:
        _check_type_at(g.type, env, None)
    seen: set[str] = set()
    for f in prog.functions:
        if f.name in seen:
            raise StaticError(f"function '{f.name}' defined twice", f.span)
        seen.add(f.name)
        _check_type_at(f.ret, env, f.span)
        for p in f.params:
            _check_type_at(p.type, env, f.span)
    arities = {f.name: len(f.params) for f in prog.functions}
    for f in prog.functions:
        for e in subexprs(f.body):
            _check_expr(e, env, arities)
    return prog


def _check_type_at(t: TypeExpr, env: DataEnv, span) -> None:
    try:
        check_type(t, env)
    except StaticError as err:
        raise StaticError(err.message, span) from None


def _check_expr(e: Expr, env: DataEnv, arities: dict[str, int]) -> None:
    span = getattr(e, "span", None)
    if isinstance(e, Cons):
        if e.ctor not in env.ctors:
            raise StaticError(f"unknown constructor '{e.ctor}'", span)
        want = env.ctors[e.ctor][1].arity
        if want != len(e.args):
            raise StaticError(f"constructor '{e.ctor}' expects {want} arguments, got {len(e.args)}", span)
    elif isinstance(e, Call):
        if e.func not in arities:
            raise StaticError(f"unknown function '{e.func}'", span)
        if arities[e.func] != len(e.args):
            raise StaticError(f"function '{e.func}' expects {arities[e.func]} arguments", span)
    elif isinstance(e, Visit):
        if not e.cases:
            raise StaticError("visit needs at least one case", span)
        for c in e.cases:
            _check_pattern(c.pattern, env, span)


def _check_pattern(p: Pattern, env: DataEnv, span) -> None:
    if isinstance(p, PCons):
        if p.ctor not in env.ctors:
            raise StaticError(f"unknown constructor '{p.ctor}' in pattern", span)
        want = env.ctors[p.ctor][1].arity
        if want != len(p.args):
            raise StaticError(f"pattern '{p.ctor}' expects {want} arguments, got {len(p.args)}", span)
        for q in p.args:
            _check_pattern(q, env, span)
    elif isinstance(p, PSet):
        for s in p.elems:
            if isinstance(s, Plain):
                _check_pattern(s.pattern, env, span)
