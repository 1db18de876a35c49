"""Command-line driver: `trlshape analyze prog.trl --entry f --param x=Shape ...`."""
from __future__ import annotations

import argparse
import json
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from . import shapes as S
from .ainterp import DEFAULT_BUDGET, AnalysisBudgetExceeded, Analyzer
from .ast import AdtT, Program, StaticError
from .concrete import BudgetExceeded
from .parser import ParseError, parse_program, parse_shape_term, parse_shapes
from .state import ERROR, RES_TYPES, ResultSet

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


@dataclass
class AnalysisConfig:
    program: str
    entries: list[str]
    shapes: list[str] = field(default_factory=list)
    params: dict[str, str] = field(default_factory=dict)
    expects: list[str] = field(default_factory=list)
    checks: list[str] = field(default_factory=list)
    format: str = "pretty"
    budget: int = DEFAULT_BUDGET


@dataclass
class Verdict:
    property: str
    holds: bool
    witness: Optional[str] = None


@dataclass
class AnalysisReport:
    entry: str
    results: dict  # restype -> rendered grammar, or None for error entries
    verdicts: list[Verdict]
    millis: int
    iterations: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v.holds for v in self.verdicts)

    def to_json(self) -> dict:
        return {"entry": self.entry, "results": self.results,
                "verdicts": [asdict(v) for v in self.verdicts],
                "millis": self.millis, "iterations": self.iterations}

    @staticmethod
    def from_json(doc: dict) -> "AnalysisReport":
        return AnalysisReport(doc["entry"], doc["results"],
                              [Verdict(**v) for v in doc["verdicts"]],
                              doc["millis"], doc.get("iterations", {}))


# -- loading -----------------------------------------------------------------

class Workspace:
    """A parsed program with its named shapes."""

    def __init__(self, program: Program, named: dict[str, S.Shape]):
        self.program = program
        self.env = program.decls
        self.named = dict(named)
        for adt in self.env.adts:
            self.named.setdefault(adt, S.full_shape(AdtT(adt), self.env))
        self.adt_names = {S.full_shape(AdtT(a), self.env): a for a in self.env.adts}

    @staticmethod
    def load(program_path: str, shape_paths: list[str]) -> "Workspace":
        prog = parse_program(Path(program_path).read_text(encoding="utf-8"), program_path)
        named: dict = {}
        for p in shape_paths:
            named.update(parse_shapes(Path(p).read_text(encoding="utf-8"), prog, p, named))
        return Workspace(prog, named)

    def shape(self, text: str) -> S.Shape:
        text = text.strip()
        if text in self.named:
            return self.named[text]
        return parse_shape_term(text, self.program, self.named)

    def render(self, s: S.Shape) -> dict:
        return S.render_json(s, self.adt_names)


# -- properties --------------------------------------------------------------

def reachable_alternatives(s: S.Shape):
    """(ctor, args) for every constructor alternative reachable from s."""
    seen: set = set()
    stack = [s]
    while stack:
        x = stack.pop()
        if isinstance(x, S.SetS):
            stack.append(x.elem)
        elif isinstance(x, S.Ref) and x.name not in seen:
            seen.add(x.name)
            for k, args in S.alternatives(x):
                yield k, args
                stack.extend(args)


_UNREACHABLE = re.compile(r"^\s*unreachable\(\s*(\w+)\s*\)\s*$")
_ARGS = re.compile(r"^\s*args\(\s*(\w+)\s*\)\s*<=\s*(.+)$")


def check_property(inferred: S.Shape, check: str, ws: Workspace) -> Verdict:
    """`unreachable(k)` or `args(k)<=shape` over every alternative reachable from inferred."""
    r = S.Renderer(ws.adt_names)
    m = _UNREACHABLE.match(check)
    if m:
        k = m.group(1)
        _require_ctor(k, ws)
        for ctor, args in reachable_alternatives(inferred):
            if ctor == k:
                return Verdict(check, False, r.alt((ctor, args)))
        return Verdict(check, True)
    m = _ARGS.match(check)
    if m:
        k = m.group(1)
        _require_ctor(k, ws)
        bound = _shape_or_config_error(ws, m.group(2))
        for ctor, args in reachable_alternatives(inferred):
            if ctor == k and not all(S.leq(a, bound) for a in args):
                return Verdict(check, False, r.alt((ctor, args)))
        return Verdict(check, True)
    raise ConfigError(f"unrecognised check '{check}' (use unreachable(k) or args(k)<=shape)")


def _require_ctor(k: str, ws: Workspace) -> None:
    if k not in ws.env.ctors:
        raise ConfigError(f"unknown constructor '{k}'")


def _shape_or_config_error(ws: Workspace, text: str) -> S.Shape:
    try:
        return ws.shape(text)
    except StaticError as err:
        raise ConfigError(f"bad shape '{text}': {err}") from None


def check_expectation(results: ResultSet, expect: str, ws: Workspace) -> Verdict:
    if "<=" not in expect:
        raise ConfigError(f"expectation '{expect}' should look like success<=Shape")
    rt, rhs = (x.strip() for x in expect.split("<=", 1))
    if rt not in RES_TYPES:
        raise ConfigError(f"unknown result type '{rt}'")
    bound = _shape_or_config_error(ws, rhs)
    if rt not in results:
        return Verdict(expect, True)
    if rt == ERROR:
        ok = bound != S.BOT
        return Verdict(expect, ok, None if ok else "error")
    got = results.value(rt)
    if S.leq(got, bound):
        return Verdict(expect, True)
    return Verdict(expect, False, S.render(got, ws.adt_names).replace("\n", " "))


# -- running -----------------------------------------------------------------

def analyze_entry(ws: Workspace, entry: str, cfg: AnalysisConfig) -> tuple[AnalysisReport, ResultSet]:
    try:
        f = ws.program.function(entry)
    except StaticError:
        raise ConfigError(f"unknown entry function '{entry}'") from None
    args = []
    for p in f.params:
        if p.name in cfg.params:
            args.append(_shape_or_config_error(ws, cfg.params[p.name]))
        else:
            args.append(S.full_shape(p.type, ws.env))
    start = time.perf_counter()
    an = Analyzer(ws.program, cfg.budget)
    res = an.analyze(entry, tuple(args))
    millis = int((time.perf_counter() - start) * 1000)
    results = {k: (None if v is None else ws.render(v)) for k, (v, _) in res.entries}
    verdicts = [check_expectation(res, e, ws) for e in cfg.expects]
    if cfg.checks:
        target = res.value("success")
        for c in cfg.checks:
            verdicts.append(check_property(target if target is not None else S.BOT, c, ws))
    iterations = {f"{site[0]}:{site[1] if isinstance(site[1], str) else 'visit'}": n
                  for site, n in an.stats.rounds.items()}
    iterations["solve"] = an.stats.solve_rounds
    return AnalysisReport(entry, results, verdicts, millis, iterations), res


def format_pretty(rep: AnalysisReport) -> str:
    lines = [f"entry {rep.entry}  ({rep.millis} ms)"]
    for rt in RES_TYPES:
        if rt not in rep.results:
            continue
        g = rep.results[rt]
        if g is None:
            lines.append(f"  {rt}")
            continue
        lines.append(f"  {rt}: {g['root']}")
        for name, nt in g["nonterminals"].items():
            lines.append(f"    refine {name} of {nt['of']} = {' | '.join(nt['alternatives'])};")
    if not rep.results:
        lines.append("  (no results: the entry is unreachable for these inputs)")
    for v in rep.verdicts:
        tail = "" if v.holds else f" (witness: {v.witness})"
        lines.append(f"  {'holds' if v.holds else 'VIOLATED'}: {v.property}{tail}")
    return "\n".join(lines)


def run(cfg: AnalysisConfig, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        ws = Workspace.load(cfg.program, cfg.shapes)
        for e in cfg.entries:
            ws.program.function(e)
    except (StaticError, OSError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_CONFIG
    try:
        with ThreadPoolExecutor(max_workers=max(1, len(cfg.entries))) as pool:
            reports = [r for r, _ in pool.map(lambda e: analyze_entry(ws, e, cfg), cfg.entries)]
    except (ConfigError, StaticError, ValueError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_CONFIG
    except (AnalysisBudgetExceeded, BudgetExceeded) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_CONFIG
    if cfg.format == "json":
        docs = [r.to_json() for r in reports]
        json.dump(docs[0] if len(docs) == 1 else docs, out, indent=2)
        out.write("\n")
    else:
        out.write("\n\n".join(format_pretty(r) for r in reports) + "\n")
    return EXIT_OK if all(r.ok for r in reports) else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trlshape", description="Shape analysis for TRL programs.")
    sub = ap.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", help="infer result shapes of entry functions")
    a.add_argument("program")
    a.add_argument("--entry", action="append", required=True, help="function to analyze (repeatable)")
    a.add_argument("--shapes", action="append", default=[], help=".shape file with refinements")
    a.add_argument("--param", action="append", default=[], metavar="X=SHAPE",
                   help="input shape for parameter X (default: its full type)")
    a.add_argument("--expect", action="append", default=[], metavar="RT<=SHAPE")
    a.add_argument("--check", action="append", default=[],
                   metavar="PROP", help="unreachable(k) or args(k)<=SHAPE on the success shape")
    a.add_argument("--format", choices=("pretty", "json"), default="pretty")
    a.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="fixpoint round limit")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    params = {}
    for p in ns.param:
        if "=" not in p:
            print(f"error: --param expects X=SHAPE, got '{p}'", file=sys.stderr)
            return EXIT_CONFIG
        k, v = p.split("=", 1)
        params[k.strip()] = v
    cfg = AnalysisConfig(ns.program, ns.entry, ns.shapes, params, ns.expect, ns.check,
                         ns.format, ns.budget)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
