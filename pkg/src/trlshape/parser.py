"""Surface syntax for programs (`.trl`) and refinement grammars (`.shape`)."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional

from . import shapes as S
from .ast import (
    INT, STR, VALUE, VOID, AdtT, Assign, Call, Case, Cons, Constructor, DataDecl, Expr, Fail,
    Function, PCons, Param, PSet, PVar, Pattern, Plain, Program, Seq, SetLit, SetT, Solve,
    SourceSpan, Star, StaticError, TypeExpr, Var, Visit, check_program,
)
from .shapes import DataS, Ref, Shape


class ParseError(StaticError):
    pass


KEYWORDS = {"data", "fun", "refine", "of", "visit", "bottom-up", "case", "solve", "fail"}

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+|//[^\n]*)
  | (?P<nl>\n)
  | (?P<kw_bu>bottom-up\b)
  | (?P<num>-?[0-9]+|-?inf\b)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<arrow>=>)
  | (?P<sym>[(){}\[\];,=|<>*])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # 'id', 'kw', 'num', 'str', 'sym', 'eof'
    text: str
    line: int
    col: int

    @property
    def end_col(self) -> int:
        return self.col + len(self.text)


def tokenize(text: str, file: str = "<input>") -> list[Token]:
    toks: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            col = pos - line_start + 1
            raise ParseError(f"unexpected character {text[pos]!r}",
                             SourceSpan(file, line, col, line, col + 1))
        kind = m.lastgroup
        val = m.group()
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ws":
            pass
        elif kind == "kw_bu":
            toks.append(Token("kw", val, line, col))
        elif kind == "id":
            toks.append(Token("kw" if val in KEYWORDS else "id", val, line, col))
        elif kind == "arrow":
            toks.append(Token("sym", val, line, col))
        else:
            toks.append(Token(kind, val, line, col))
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


def _unquote(s: str) -> str:
    return re.sub(r"\\(.)", r"\1", s[1:-1])


class _Parser:
    def __init__(self, text: str, file: str):
        self.file = file
        self.toks = tokenize(text, file)
        self.i = 0

    # token helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def span(self, start: Token, end: Optional[Token] = None) -> SourceSpan:
        end = end or self.toks[max(self.i - 1, 0)]
        return SourceSpan(self.file, start.line, start.col, end.line, end.end_col)

    def error(self, msg: str) -> ParseError:
        t = self.tok
        return ParseError(msg, SourceSpan(self.file, t.line, t.col, t.line, max(t.end_col, t.col + 1)))

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("sym", "kw")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            shown = self.tok.text or "end of input"
            raise self.error(f"expected '{text}' but found '{shown}'")
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> str:
        if self.tok.kind != "id":
            shown = self.tok.text or "end of input"
            raise self.error(f"expected an identifier but found '{shown}'")
        t = self.tok
        self.i += 1
        return t.text

    def sep_list(self, item, close: str, sep: str = ",") -> list:
        out = []
        if self.at(close):
            return out
        out.append(item())
        while self.accept(sep):
            out.append(item())
        return out

    # types

    def type_expr(self) -> TypeExpr:
        t = self.tok
        if t.kind != "id":
            raise self.error(f"expected a type but found '{t.text or 'end of input'}'")
        self.i += 1
        simple = {"void": VOID, "value": VALUE, "int": INT, "str": STR}
        if t.text in simple:
            return simple[t.text]
        if t.text == "set":
            self.expect("<")
            inner = self.type_expr()
            self.expect(">")
            return SetT(inner)
        return AdtT(t.text)

    def param(self) -> Param:
        t = self.type_expr()
        return Param(t, self.ident())

    # declarations

    def program(self) -> Program:
        datas, globs, funs = [], [], []
        while self.tok.kind != "eof":
            start = self.tok
            if self.accept("data"):
                name = self.ident()
                self.expect("=")
                ctors = [self.constructor()]
                while self.accept("|"):
                    ctors.append(self.constructor())
                self.expect(";")
                datas.append(DataDecl(name, tuple(ctors), self.span(start)))
            elif self.accept("fun"):
                ret = self.type_expr()
                name = self.ident()
                self.expect("(")
                params = self.sep_list(self.param, ")")
                self.expect(")")
                self.expect("=")
                body = self.expr()
                self.expect(";")
                funs.append(Function(name, ret, tuple(params), body, self.span(start)))
            else:
                globs.append(self.param())
                self.expect(";")
        return Program(tuple(datas), tuple(globs), tuple(funs))

    def constructor(self) -> Constructor:
        name = self.ident()
        self.expect("(")
        params = self.sep_list(self.param, ")")
        self.expect(")")
        return Constructor(name, tuple(params))

    # expressions

    def expr(self) -> Expr:
        start = self.tok
        if self.accept("fail"):
            return Fail(self.span(start))
        if self.at("bottom-up") or self.at("visit"):
            self.accept("bottom-up")
            self.expect("visit")
            self.expect("(")
            subject = self.expr()
            self.expect(")")
            self.expect("{")
            cases = []
            while self.accept("case"):
                pat = self.pattern()
                self.expect("=>")
                cases.append(Case(pat, self.expr()))
            self.expect("}")
            if not cases:
                raise ParseError("visit needs at least one case", self.span(start))
            return Visit(subject, tuple(cases), "bottom-up", self.span(start))
        if self.accept("solve"):
            self.expect("(")
            names = self.sep_list(self.ident, ")")
            self.expect(")")
            self.expect("{")
            body = self.seq_until("}")
            return Solve(tuple(names), body, self.span(start))
        if self.accept("{"):
            elems = self.sep_list(self.expr, "}")
            self.expect("}")
            return SetLit(tuple(elems), self.span(start))
        if self.accept("("):
            return self.seq_until(")")
        if self.tok.kind == "id":
            name = self.ident()
            if self.accept("("):
                args = self.sep_list(self.expr, ")")
                self.expect(")")
                # resolved to a constructor or a call once declarations are known
                return Call(name, tuple(args), self.span(start))
            if self.at("=") and not self.at("=>"):
                self.expect("=")
                return Assign(name, self.expr(), self.span(start))
            return Var(name, self.span(start))
        raise self.error(f"expected an expression but found '{self.tok.text or 'end of input'}'")

    def seq_until(self, close: str) -> Expr:
        items = [self.expr()]
        while self.accept(";"):
            if self.at(close):
                break
            items.append(self.expr())
        self.expect(close)
        out = items[-1]
        for e in reversed(items[:-1]):
            out = Seq(e, out)
        return out

    # patterns

    def pattern(self) -> Pattern:
        if self.accept("{"):
            elems = self.sep_list(self.star_pattern, "}")
            self.expect("}")
            return PSet(tuple(elems))
        name = self.ident()
        if self.accept("("):
            args = self.sep_list(self.pattern, ")")
            self.expect(")")
            return PCons(name, tuple(args))
        return PVar(name)

    def star_pattern(self):
        if self.accept("*"):
            return Star(self.ident())
        return Plain(self.pattern())


def _resolve(e: Expr, ctors: set) -> Expr:
    """Turn parsed applications of constructor names into constructor expressions."""
    if isinstance(e, Call):
        args = tuple(_resolve(a, ctors) for a in e.args)
        if e.func in ctors:
            return Cons(e.func, args, e.span)
        return Call(e.func, args, e.span)
    if isinstance(e, Assign):
        return Assign(e.name, _resolve(e.value, ctors), e.span)
    if isinstance(e, Seq):
        return Seq(_resolve(e.first, ctors), _resolve(e.second, ctors), e.span)
    if isinstance(e, SetLit):
        return SetLit(tuple(_resolve(a, ctors) for a in e.elems), e.span)
    if isinstance(e, Visit):
        return Visit(_resolve(e.subject, ctors),
                     tuple(Case(c.pattern, _resolve(c.body, ctors)) for c in e.cases),
                     e.strategy, e.span)
    if isinstance(e, Solve):
        return Solve(e.vars, _resolve(e.body, ctors), e.span)
    return e


def parse_program(text: str, file: str = "<input>", check: bool = True) -> Program:
    raw = _Parser(text, file).program()
    ctors = {c.name for d in raw.datadecls for c in d.constructors}
    prog = Program(raw.datadecls, raw.globals,
                   tuple(Function(f.name, f.ret, f.params, _resolve(f.body, ctors), f.span)
                         for f in raw.functions))
    return check_program(prog) if check else prog


# -- refinement grammars -----------------------------------------------------

@dataclass(frozen=True)
class RefinementDecl:
    name: str
    base: str
    alternatives: tuple  # ((ctor, (term, ...)), ...) with terms as parsed syntax
    span: Optional[SourceSpan] = None


class _ShapeParser(_Parser):
    def decls(self) -> list[RefinementDecl]:
        out = []
        while self.tok.kind != "eof":
            start = self.expect("refine")
            name = self.ident()
            self.expect("of")
            base = self.ident()
            self.expect("=")
            alts = [self.alternative()]
            while self.accept("|"):
                alts.append(self.alternative())
            self.expect(";")
            out.append(RefinementDecl(name, base, tuple(alts), self.span(start)))
        return out

    def alternative(self):
        start = self.tok
        name = self.ident()
        self.expect("(")
        args = self.sep_list(self.term, ")")
        self.expect(")")
        return (name, tuple(args), self.span(start))

    def bound(self) -> float:
        t = self.tok
        if t.kind != "num":
            raise self.error(f"expected a bound but found '{t.text or 'end of input'}'")
        self.i += 1
        if t.text == "inf":
            return math.inf
        if t.text == "-inf":
            return -math.inf
        return int(t.text)

    def term(self):
        """('int', lo, hi) | ('str', consts|None) | ('set', term, lo, hi) | ('value',) |
        ('void',) | ('name', n, span) | ('cons', k, (terms), span)."""
        start = self.tok
        if self.accept("{"):
            inner = self.term()
            self.expect("}")
            self.expect("[")
            lo = self.bound()
            self.expect(";")
            hi = self.bound()
            self.expect("]")
            return ("set", inner, lo, hi)
        name = self.ident()
        if name == "int":
            if self.accept("["):
                lo = self.bound()
                self.expect(";")
                hi = self.bound()
                self.expect("]")
                return ("int", lo, hi)
            return ("int", -math.inf, math.inf)
        if name == "str":
            if self.accept("{"):
                consts = []
                while self.tok.kind == "str":
                    consts.append(_unquote(self.tok.text))
                    self.i += 1
                    if not self.accept(","):
                        break
                self.expect("}")
                return ("str", frozenset(consts))
            return ("str", None)
        if name in ("value", "void"):
            return (name,)
        if self.accept("("):
            args = self.sep_list(self.term, ")")
            self.expect(")")
            return ("cons", name, tuple(args), self.span(start))
        return ("name", name, self.span(start))


def parse_refinement(text: str, program: Program, file: str = "<input>") -> list[RefinementDecl]:
    decls = _ShapeParser(text, file).decls()
    env = program.decls
    names = {d.name for d in decls}
    seen: set[str] = set()
    for d in decls:
        if d.name in seen:
            raise ParseError(f"nonterminal '{d.name}' declared twice", d.span)
        if d.name in env.adts:
            raise ParseError(f"nonterminal '{d.name}' shadows a data type", d.span)
        seen.add(d.name)
        if d.base not in env.adts:
            raise ParseError(f"unknown data type '{d.base}'", d.span)
        for ctor, args, span in d.alternatives:
            _check_cons(ctor, args, span, env, names, base=d.base)
    return decls


def _check_cons(ctor, args, span, env, names, base=None):
    if ctor not in env.ctors:
        raise ParseError(f"unknown constructor '{ctor}'", span)
    adt, c = env.ctors[ctor]
    if base is not None and adt != base:
        raise ParseError(f"constructor '{ctor}' does not belong to '{base}'", span)
    if c.arity != len(args):
        raise ParseError(f"constructor '{ctor}' expects {c.arity} arguments, got {len(args)}", span)
    for a in args:
        _check_term(a, env, names)


def _check_term(t, env, names):
    if t[0] == "set":
        _check_term(t[1], env, names)
    elif t[0] == "cons":
        _check_cons(t[1], t[2], t[3], env, names)
    elif t[0] == "name" and t[1] not in names and t[1] not in env.adts:
        raise ParseError(f"undeclared nonterminal '{t[1]}'", t[2])


class _TermBuilder:
    """Turns parsed shape terms into shapes, collecting anonymous productions."""

    def __init__(self, program: Program, local: set, named: Optional[dict] = None):
        self.env = program.decls
        self.local = local
        self.named = named or {}
        self.eqs: dict[str, list] = {}

    def term(self, t) -> Shape:
        kind = t[0]
        if kind == "int":
            return S.int_shape(t[1], t[2])
        if kind == "str":
            return S.str_shape(t[1])
        if kind == "set":
            return S.set_shape(self.term(t[1]), t[2], t[3])
        if kind == "value":
            return S.TOP
        if kind == "void":
            return S.BOT
        if kind == "name":
            if t[1] in self.local:
                return Ref(t[1])
            if t[1] in self.named:
                return self.named[t[1]]
            return S.full_shape(AdtT(t[1]), self.env)
        args = tuple(self.term(a) for a in t[2])
        anon = f"@{len(self.eqs)}"
        self.eqs[anon] = [DataS(self.env.adt_of(t[1]), ((t[1], args),))]
        return Ref(anon)


def build_shapes(decls: list[RefinementDecl], program: Program,
                 named: Optional[dict] = None) -> dict[str, Shape]:
    """Shapes for every declared nonterminal; data type names denote full types.

    Several alternatives with the same constructor are joined.
    """
    tb = _TermBuilder(program, {d.name for d in decls}, named)
    for d in decls:
        tb.eqs[d.name] = [DataS(d.base, ((ctor, tuple(tb.term(a) for a in args)),))
                          for ctor, args, _ in d.alternatives]
    return S.solve_equations(tb.eqs, [d.name for d in decls])


def parse_shapes(text: str, program: Program, file: str = "<input>",
                 named: Optional[dict] = None) -> dict[str, Shape]:
    return build_shapes(parse_refinement(text, program, file), program, named)


def parse_shape_term(text: str, program: Program, named: Optional[dict] = None) -> Shape:
    """A shape term such as `suc(Nat)` or `{int[0;3]}[1;2]`, or a `|`-union of terms."""
    p = _ShapeParser(text, "<term>")
    terms = [p.term()]
    while p.accept("|"):
        terms.append(p.term())
    if p.tok.kind != "eof":
        raise p.error(f"unexpected '{p.tok.text}' after shape term")
    named = named or {}
    for t in terms:
        _check_term(t, program.decls, set(named))
    tb = _TermBuilder(program, set(), named)
    roots = [tb.term(t) for t in terms]
    solved = S.solve_equations(tb.eqs, [r.name for r in roots if isinstance(r, Ref) and r.name in tb.eqs])
    return S.join_all(solved.get(r.name, r) if isinstance(r, Ref) else r for r in roots)


# -- pretty printing ---------------------------------------------------------

def pretty_type(t: TypeExpr) -> str:
    return str(t)


def pretty_pattern(p: Pattern) -> str:
    if isinstance(p, PVar):
        return p.name
    if isinstance(p, PCons):
        return f"{p.ctor}({', '.join(pretty_pattern(a) for a in p.args)})"
    parts = [("*" + s.name) if isinstance(s, Star) else pretty_pattern(s.pattern) for s in p.elems]
    return "{" + ", ".join(parts) + "}"


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def pretty_expr(e: Expr, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Assign):
        return f"{e.name} = {pretty_expr(e.value, indent)}"
    if isinstance(e, Seq):
        items = []
        cur: Expr = e
        while isinstance(cur, Seq):
            items.append(cur.first)
            cur = cur.second
        items.append(cur)
        return "(" + "; ".join(pretty_expr(x, indent) for x in items) + ")"
    if isinstance(e, (Cons, Call)):
        name = e.ctor if isinstance(e, Cons) else e.func
        return f"{name}({', '.join(pretty_expr(a, indent) for a in e.args)})"
    if isinstance(e, SetLit):
        return "{" + ", ".join(pretty_expr(a, indent) for a in e.elems) + "}"
    if isinstance(e, Fail):
        return "fail"
    if isinstance(e, Visit):
        inner = "  " * (indent + 1)
        cases = "".join(f"\n{inner}case {pretty_pattern(c.pattern)} => {pretty_expr(c.body, indent + 1)}"
                        for c in e.cases)
        return f"bottom-up visit({pretty_expr(e.subject, indent)}) {{{cases}\n{pad}}}"
    if isinstance(e, Solve):
        body = pretty_expr(e.body, indent + 1)
        if isinstance(e.body, Seq):
            body = body[1:-1]
        return f"solve({', '.join(e.vars)}) {{ {body} }}"
    raise TypeError(f"not an expression: {e!r}")


def pretty_program(prog: Program) -> str:
    lines = []
    for d in prog.datadecls:
        alts = " | ".join(f"{c.name}({', '.join(f'{p.type} {p.name}' for p in c.params)})"
                          for c in d.constructors)
        lines.append(f"data {d.name} = {alts};")
    for g in prog.globals:
        lines.append(f"{g.type} {g.name};")
    for f in prog.functions:
        params = ", ".join(f"{p.type} {p.name}" for p in f.params)
        lines.append(f"fun {f.ret} {f.name}({params}) =\n  {pretty_expr(f.body, 1)};")
    return "\n".join(lines) + ("\n" if lines else "")
