"""Shared test utilities: corpus loading, soundness checking, random programs."""
from __future__ import annotations

import random
from functools import lru_cache
from importlib import resources
from itertools import combinations, product

from trlshape import shapes as S
from trlshape.ainterp import Analyzer
from trlshape.ast import AdtT, Program
from trlshape.concrete import SUCCESS, BudgetExceeded, run_function
from trlshape.parser import parse_program, parse_shapes, pretty_program

CORPUS = resources.files("trlshape") / "corpus"
VISITORS = ["double", "groups", "pairs", "prune", "track", "broken"]


def corpus_text(name: str) -> str:
    return (CORPUS / name).read_text(encoding="utf-8")


def load(name: str) -> Program:
    return parse_program(corpus_text(f"{name}.trl"), f"{name}.trl")


def load_shapes(name: str, program: Program) -> dict:
    return parse_shapes(corpus_text(f"{name}.shape"), program, f"{name}.shape")


def full(program: Program, t) -> S.Shape:
    return S.full_shape(t, program.decls)


def inputs_for(program: Program, fname: str, depth: int = 4, width: int = 3, shapes=None):
    f = program.function(fname)
    pools = []
    for i, p in enumerate(f.params):
        s = shapes[i] if shapes else full(program, p.type)
        pools.append(sorted(S.concretize_bounded(s, depth, width, program.decls), key=str))
    return [tuple(c) for c in product(*pools)]


def soundness_violations(program: Program, fname: str, arg_shapes=None, depth: int = 4,
                         width: int = 3, step_budget: int = 5000, max_inputs=None):
    """Concrete runs whose outcome is not covered by the abstract result.

    Returns (violations, number of inputs checked, abstract result).
    """
    f = program.function(fname)
    shapes = tuple(arg_shapes) if arg_shapes else tuple(full(program, p.type) for p in f.params)
    res = Analyzer(program).analyze(fname, shapes)
    bad = []
    ins = inputs_for(program, fname, depth, width, shapes)
    if max_inputs is not None:
        ins = ins[:max_inputs]
    checked = 0
    for args in ins:
        try:
            t, v = run_function(program, fname, args, step_budget)
        except BudgetExceeded:
            continue
        checked += 1
        if t.value not in res:
            bad.append((args, t.value, v, "result type missing"))
        elif t is SUCCESS and not S.member(v, res.value("success")):
            bad.append((args, t.value, v, "value outside success shape"))
    return bad, checked, res


# -- random programs ---------------------------------------------------------

FAMILIES = {
    "T": "data T = a() | b(T x) | c(T x, T y);",
    "U": "data U = u() | w(set<U> xs);",
    "V": "data V = k(int i) | p(V a) | q(str s);",
}

CTORS = {
    "T": [("a", []), ("b", ["T"]), ("c", ["T", "T"])],
    "U": [("u", []), ("w", ["set<U>"])],
    "V": [("k", ["int"]), ("p", ["V"]), ("q", ["str"])],
}


class ProgramGenerator:
    """Random well-formed programs over one small data family."""

    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.fresh = 0

    def var(self) -> str:
        self.fresh += 1
        return f"v{self.fresh}"

    def pattern(self, fam: str, depth: int, bound: list) -> str:
        rng = self.rng
        if depth <= 0 or rng.random() < 0.3:
            if bound and rng.random() < 0.25:
                return rng.choice(bound)  # repeated variable: non-linear match
            x = self.var()
            bound.append(x)
            return x
        k, args = rng.choice(CTORS[fam])
        parts = []
        for t in args:
            if t == fam:
                parts.append(self.pattern(fam, depth - 1, bound))
            elif t.startswith("set<"):
                parts.append(self.set_pattern(fam, depth - 1, bound))
            else:
                x = self.var()
                bound.append(x)
                parts.append(x)
        return f"{k}({', '.join(parts)})"

    def set_pattern(self, fam: str, depth: int, bound: list) -> str:
        items = []
        for _ in range(self.rng.randint(0, 2)):
            if self.rng.random() < 0.4:
                x = self.var()
                bound.append(x)
                items.append("*" + x)
            else:
                items.append(self.pattern(fam, depth, bound))
        return "{" + ", ".join(items) + "}"

    def term(self, fam: str, depth: int, bound: list) -> str:
        rng = self.rng
        r = rng.random()
        if bound and (depth <= 0 or r < 0.35):
            return rng.choice(bound)
        if r < 0.4 and fam == "U":
            return "{" + ", ".join(self.term(fam, depth - 1, bound) for _ in range(rng.randint(0, 2))) + "}"
        choices = [c for c in CTORS[fam] if all(t == fam or t.startswith("set<") for t in c[1])]
        k, args = rng.choice(choices if depth <= 0 else CTORS[fam])
        parts = []
        for t in args:
            if t == fam or t.startswith("set<"):
                parts.append(self.term(fam, depth - 1, bound) if depth > 0 or t != fam
                             else rng.choice(bound) if bound else self.base(fam))
            else:
                parts.append(rng.choice(bound) if bound else self.base(fam))
        return f"{k}({', '.join(parts)})"

    def base(self, fam: str) -> str:
        return {"T": "a()", "U": "u()", "V": "q(s0)"}[fam]

    def body(self, fam: str, bound: list) -> str:
        r = self.rng.random()
        if r < 0.12:
            return "fail"
        if r < 0.2:
            return f"(acc = {self.term(fam, 1, bound)}; acc)"
        if r < 0.25:
            return "undefined_local"
        if r < 0.35:
            return f"entry({self.term(fam, 1, bound)})"
        return self.term(fam, 2, bound)

    def generate(self) -> tuple[str, str]:
        """(program text, entry function name)."""
        fam = self.rng.choice(sorted(FAMILIES))
        self.fresh = 0
        cases = []
        for _ in range(self.rng.randint(1, 3)):
            bound: list = []
            pat = self.pattern(fam, 2, bound)
            cases.append(f"    case {pat} => {self.body(fam, bound)}")
        visit = "bottom-up visit(x) {\n" + "\n".join(cases) + "\n  }"
        shape = self.rng.random()
        helper = ""
        if shape < 0.2:
            body = f"solve(x) {{ x = {visit} }}"
        elif shape < 0.35:
            body = f"(y = {visit}; y)"
        elif shape < 0.5:
            # the traversal lives in a helper that may also give up
            helper = (f"fun {fam} step({fam} x) =\n  (z = {visit}; "
                      f"bottom-up visit(z) {{ case {self.pattern(fam, 1, [])} => fail }});\n")
            helper = helper.replace("entry(", "step(")
            body = "step(step(x))"
        else:
            body = visit
        head = FAMILIES[fam] + ("\nstr s0;" if fam == "V" else "")
        text = f"{head}\n{helper}fun {fam} entry({fam} x) =\n  {body};\n"
        return text, "entry"


def generated_programs(n: int, seed: int = 2024):
    gen = ProgramGenerator(seed)
    out = []
    while len(out) < n:
        text, entry = gen.generate()
        out.append((parse_program(text, f"gen{len(out)}.trl"), entry, text))
    return out




# -- random shapes -----------------------------------------------------------

LATTICE_DECLS = "\n".join(FAMILIES.values()) + "\ndata Nat = zero() | suc(Nat pred);"
LATTICE_PROGRAM = parse_program(LATTICE_DECLS)
LATTICE_ENV = LATTICE_PROGRAM.decls
BOUNDS = [0, 1, 2, 3, S.INF]
INT_POINTS = [-S.INF, -2, -1, 0, 1, 2, S.INF]
STRS = ["a", "b", "c"]


class ShapeGenerator:
    """Random shapes: leaves and grammars with up to `max_nts` nonterminals."""

    def __init__(self, rng: random.Random, max_nts: int = 6):
        self.rng = rng
        self.max_nts = max_nts

    def interval(self):
        lo, hi = sorted(self.rng.sample(INT_POINTS, 2))
        if lo == hi or (lo == S.INF):
            return S.ANY_INT
        return S.int_shape(lo, hi)

    def strs(self):
        if self.rng.random() < 0.3:
            return S.ANY_STR
        return S.str_shape(self.rng.sample(STRS, self.rng.randint(1, 3)))

    def card(self):
        lo, hi = sorted(self.rng.choices(BOUNDS, k=2))
        return min(lo, 3), hi

    def leaf(self):
        r = self.rng.random()
        if r < 0.35:
            return self.interval()
        if r < 0.6:
            return self.strs()
        if r < 0.8:
            lo, hi = self.card()
            return S.set_shape(self.rng.choice([self.interval, self.strs])(), lo, hi)
        return self.rng.choice([S.BOT, S.TOP])

    def family(self) -> str:
        return self.rng.choice(["T", "U", "V", "Nat"])

    def grammar(self, adt: str):
        rng = self.rng
        n = rng.randint(1, self.max_nts)
        names = [f"G{i}" for i in range(n)]
        eqs = {}
        for nt in names:
            ctors = LATTICE_ENV.constructors(adt)
            chosen = rng.sample(list(ctors), rng.randint(1, len(ctors)))
            choices = []
            for c in sorted(chosen, key=lambda c: c.name):
                args = []
                for p in c.params:
                    args.append(self.arg(p.type, adt, names))
                choices.append((c.name, tuple(args)))
            eqs[nt] = S.DataS(adt, tuple(choices))
        root = rng.choice(names)
        return S.solve_equations(eqs, [root])[root]

    def arg(self, t, adt, names):
        from trlshape.ast import IntT, SetT, StrT
        if isinstance(t, IntT):
            return self.interval()
        if isinstance(t, StrT):
            return self.strs()
        if isinstance(t, SetT):
            lo, hi = self.card()
            return S.set_shape(self.arg(t.elem, adt, names), lo, hi)
        if self.rng.random() < 0.15:
            return S.full_shape(t, LATTICE_ENV)
        return S.Ref(self.rng.choice(names))

    def shape(self, adt=None):
        if adt is None and self.rng.random() < 0.25:
            return self.leaf()
        return self.grammar(adt or self.family())

    def pair(self):
        if self.rng.random() < 0.8:
            adt = self.family()
            return self.shape(adt), self.shape(adt)
        return self.shape(), self.shape()

    def tree(self, adt: str, depth: int):
        """A single-path random shape exactly `depth` constructors deep along one branch."""
        rng = self.rng
        ctors = LATTICE_ENV.constructors(adt)
        rec = [c for c in ctors if any(str(p.type) in (adt, f"set<{adt}>") for p in c.params)]
        c = rng.choice(rec if depth > 0 and rec else [c for c in ctors if c not in rec] or list(ctors))
        spine = [i for i, p in enumerate(c.params) if str(p.type) in (adt, f"set<{adt}>")]
        deep = rng.choice(spine) if spine else -1
        args = []
        for i, p in enumerate(c.params):
            ts = str(p.type)
            if ts in (adt, f"set<{adt}>"):
                inner = self.tree(adt, depth - 1) if i == deep and depth > 0 else self.grammar(adt)
                args.append(inner if ts == adt else S.set_shape(inner, 1, 1))
            else:
                args.append(self.arg(p.type, adt, []))
        return S.data(adt, {c.name: tuple(args)})


def value_universe(depth: int = 4, width: int = 2) -> list:
    """Every small value of the lattice families plus base and set samples."""
    from trlshape.concrete import IntV, SetV, StrV
    env = LATTICE_ENV
    vals = set()
    for adt in env.adts:
        vals |= S.concretize_bounded(S.full_shape(AdtT(adt), env), depth, width, env)
    base = {IntV(i) for i in (-3, -2, -1, 0, 1, 2, 3, 7)} | {StrV(s) for s in ("a", "b", "c", "z")}
    vals |= base
    small = sorted(base, key=repr)[:6]
    vals |= {SetV(frozenset(c)) for n in range(3) for c in combinations(small, n)}
    return sorted(vals, key=repr)


NAMES = [f"s{i}" for i in range(12)]


@lru_cache(maxsize=None)
def truncate(s: S.Shape, d: int) -> S.Shape:
    """The depth-d approximation of s; increasing in d, with s as its limit."""
    if d <= 0 or s == S.BOT:
        return S.BOT
    if isinstance(s, S.IntS):
        return S.int_shape(max(s.lo, -d), min(s.hi, d))
    if isinstance(s, S.StrS):
        pool = NAMES[:d] if s.consts is None else sorted(s.consts)[:d]
        return S.str_shape(pool)
    if isinstance(s, S.SetS):
        return S.set_shape(truncate(s.elem, d - 1), s.lo, min(s.hi, d))
    if isinstance(s, S.Ref):
        return S.data(S.adt_of(s), {k: tuple(truncate(x, d - 1) for x in args)
                                    for k, args in S.alternatives(s)})
    return s


def widening_chain(limit: S.Shape, steps: int = 30):
    """Last index at which the widened chain changed, and whether every bound held."""
    w = truncate(limit, 0)
    last, ok = 0, True
    for i in range(1, steps + 1):
        a = truncate(limit, i)
        w2 = S.widen(w, a)
        ok &= S.leq(a, w2) and S.leq(w, w2)
        if w2 != w:
            last = i
        w = w2
    return last, ok and S.leq(limit, w) or S.leq(truncate(limit, steps), w)
