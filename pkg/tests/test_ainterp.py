import random

import pytest
from hypothesis import given, settings, strategies as st

from helpers import (
    VISITORS, ShapeGenerator, generated_programs, load, load_shapes,
    soundness_violations,
)
from trlshape import ainterp
from trlshape import shapes as S
from trlshape.ainterp import AnalysisBudgetExceeded, Analyzer, MemoEntry, analyze_function, partition_key
from trlshape.ast import VALUE, AdtT, Case, Fail, PVar, SetLit, SetT, Var, Visit, subexprs
from trlshape.parser import parse_program, parse_shape_term, parse_shapes
from trlshape.state import ERROR, FAIL, SUCCESS, ResultSet, Store, result_widen

SIMPLIFY = load("simplify")
ENV = SIMPLIFY.decls
NAT = S.full_shape(AdtT("Nat"), ENV)
EXPR = S.full_shape(AdtT("Expr"), ENV)
EXPR_OUT = load_shapes("expr", SIMPLIFY)["ExprOut"]
VISIT = SIMPLIFY.function("simplify").body


def sh(text):
    return parse_shape_term(text, SIMPLIFY)


def traverse(an, shape, visit=VISIT, fname="simplify"):
    st0 = an.entry_store(fname, (EXPR,), True)
    return an.avisit(visit, shape, st0, an._ftypes[fname])


# -- expressions --------------------------------------------------------------------

@pytest.mark.parametrize("flag, shape, want", [
    (False, S.BOT, {}),
    (False, "int[1;3]", {SUCCESS: "int[1;3]"}),
    (True, S.BOT, {ERROR: None}),
    (True, "int[1;3]", {SUCCESS: "int[1;3]", ERROR: None}),
])
def test_variable_lookup(flag, shape, want):
    shape = sh(shape) if isinstance(shape, str) else shape
    res = Analyzer(SIMPLIFY).aeval(Var("x"), Store.of({"x": (flag, shape)}), {})
    assert {k: v for k, (v, _) in res.entries} == {k: (sh(v) if v else v) for k, v in want.items()}


def test_set_literal():
    st0 = Store.of({"a": (False, sh("cst(Nat)")), "b": (False, sh("var(str)"))})
    res = Analyzer(SIMPLIFY).aeval(SetLit((Var("a"), Var("b"))), st0, {})
    assert res.keys() == [SUCCESS]
    assert res.value(SUCCESS) == S.set_shape(S.join(sh("cst(Nat)"), sh("var(str)")), 0, 2)


def test_fail_keeps_store():
    st0 = Store.of({"a": (False, NAT)})
    assert Analyzer(SIMPLIFY).aeval(Fail(), st0, {}) == ResultSet.single(FAIL, None, st0)


def test_identity_function():
    prog = parse_program("data Nat = zero() | suc(Nat pred); fun Nat f(Nat n) = n;")
    res = analyze_function(prog, "f", (parse_shape_term("zero()", prog),))
    assert res.keys() == [SUCCESS] and res.value(SUCCESS) == parse_shape_term("zero()", prog)


def test_assignment_type_error():
    prog = parse_program("""
    data Nat = zero() | suc(Nat pred);
    Nat g;
    fun Nat put(value v) = (g = v; zero());
    """)
    res = analyze_function(prog, "put", (S.TOP,))
    assert res.keys() == [SUCCESS, ERROR]
    res = analyze_function(prog, "put", (S.full_shape(AdtT("Nat"), prog.decls),))
    assert res.keys() == [SUCCESS]


def test_entry_argument_outside_parameter_type():
    prog = parse_program("data Nat = zero() | suc(Nat pred); fun Nat f(Nat n) = n;")
    assert analyze_function(prog, "f", (S.TOP,)).keys() == [SUCCESS, ERROR]
    with pytest.raises(ValueError):
        analyze_function(prog, "f", ())


# -- cases and traversals --------------------------------------------------------------

def test_cases_empty():
    an = Analyzer(SIMPLIFY)
    assert an.aeval_cases((), NAT, Store(), {}).as_dict() == {FAIL: (NAT, Store())}


def test_cases_refine_failures():
    an = Analyzer(SIMPLIFY)
    st0 = an.entry_store("simplify", (EXPR,), True)
    res = an.aeval_cases(VISIT.cases, sh("mult(cst(Nat), cst(Nat))"), st0, an._ftypes["simplify"])
    assert res.value(SUCCESS) == sh("cst(zero())")
    assert S.leq(res.value(SUCCESS), sh("cst(Nat)"))
    assert res.value(FAIL) == sh("mult(cst(suc(Nat)), cst(suc(Nat)))")


def test_case_body_fail_moves_on():
    an = Analyzer(SIMPLIFY)
    cases = (Case(PVar("x"), Fail()),)
    res = an.aeval_cases(cases, NAT, Store.of({"x": (True, S.BOT)}), {})
    assert res.keys() == [FAIL] and res.value(FAIL) == NAT


def test_nat_traversal_is_fail_nat():
    res = traverse(Analyzer(SIMPLIFY), NAT)
    assert res.keys() == [FAIL] and res.value(FAIL) == NAT


def test_nat_traversal_iterates_to_fixpoint(monkeypatch):
    seen = []

    def record(a, b):
        r = result_widen(a, b)
        seen.append(r.value(FAIL))
        return r

    monkeypatch.setattr(ainterp, "result_widen", record)
    traverse(Analyzer(SIMPLIFY), NAT)
    assert seen == [sh("zero()"), S.join(sh("zero()"), sh("suc(zero())")), NAT]


def test_unmatched_leaf_fails_unchanged():
    res = traverse(Analyzer(SIMPLIFY), sh("zero()"))
    assert res.as_dict().keys() == {FAIL} and res.value(FAIL) == sh("zero()")


def test_expr_traversal():
    res = traverse(Analyzer(SIMPLIFY), EXPR)
    assert S.equivalent(res.value(FAIL), EXPR_OUT)
    assert S.leq(res.value(SUCCESS), EXPR_OUT)
    assert ERROR not in res


def test_simplify_function():
    res = analyze_function(SIMPLIFY, "simplify", (EXPR,))
    assert res.keys() == [SUCCESS] and S.equivalent(res.value(SUCCESS), EXPR_OUT)


def test_nnf_function():
    prog = load("nnf")
    named = load_shapes("nnf", prog)
    res = analyze_function(prog, "nnf", (named["FIn"],))
    assert S.equivalent(res.value(SUCCESS), named["FOut"])


# -- memoisation --------------------------------------------------------------------------

def test_memo_hit_returns_stored_output():
    an = Analyzer(SIMPLIFY)
    stored = ResultSet.single(FAIL, sh("zero()"), Store())
    an.tables[("t", 0)] = {"k": MemoEntry(NAT, stored)}

    def never(_):
        raise AssertionError("body evaluated on a hit")

    ops = ainterp.InputOps(S.leq, lambda a, b: b if a is None else S.join(a, b),
                           lambda a, b: b if a is None else S.widen(a, b), None)
    assert an.memo_fixpoint(("t", 0), "k", sh("suc(Nat)"), ops, never) == stored


def test_memo_widens_from_bottom():
    an = Analyzer(SIMPLIFY)
    calls = []

    def body(inp):
        calls.append(inp)
        return ResultSet.single(SUCCESS, inp, Store())

    ops = ainterp.InputOps(S.leq, lambda a, b: b if a is None else S.join(a, b),
                           lambda a, b: b if a is None else S.widen(a, b), None)
    out = an.memo_fixpoint(("t", 1), "k", NAT, ops, body)
    assert calls[0] == NAT and out.value(SUCCESS) == NAT


def test_budget_exceeded_is_reported():
    an = Analyzer(SIMPLIFY, budget=1)
    with pytest.raises(AnalysisBudgetExceeded):
        traverse(an, NAT)


def test_partition_key_truncates_deep_sets():
    assert partition_key(SetT(SetT(SetT(AdtT("Nat"))))) == SetT(SetT(VALUE))
    assert partition_key(AdtT("Nat")) == AdtT("Nat")


def test_memo_fail_outputs_refine_inputs():
    an = Analyzer(SIMPLIFY)
    traverse(an, EXPR)
    for site, table in an.tables.items():
        for key, entry in table.items():
            shape, _ = entry.input
            fail = entry.output.value(FAIL)
            assert fail is None or S.leq(fail, shape), (site, key)


# -- soundness ----------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["simplify", *VISITORS])
def test_corpus_soundness(name):
    prog = load(name)
    for f in prog.functions:
        bad, checked, _ = soundness_violations(prog, f.name)
        assert checked > 0
        assert not bad, bad[:3]


def test_nnf_soundness_on_refined_input():
    prog = load("nnf")
    fin = load_shapes("nnf", prog)["FIn"]
    bad, checked, _ = soundness_violations(prog, "nnf", (fin,))
    assert checked > 0 and not bad


PROGRAMS = generated_programs(40, seed=777)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(PROGRAMS))
def test_generated_soundness(item):
    prog, entry, text = item
    bad, _, _ = soundness_violations(prog, entry, depth=3)
    assert not bad, (text, bad[:2])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(PROGRAMS))
def test_traversal_failure_refines_input(seed, item):
    prog, entry, _ = item
    visits = [e for e in subexprs(prog.function(entry).body) if isinstance(e, Visit)]
    if not visits:
        return
    f = prog.function(entry)
    # the generated programs declare the same families as the shape generator
    shape = ShapeGenerator(random.Random(seed), max_nts=3).shape(f.params[0].type.name)
    an = Analyzer(prog)
    st0 = an.entry_store(entry, (shape,), True)
    res = an.avisit(visits[0], shape, st0, an._ftypes[entry])
    if res.keys() == [FAIL]:
        assert S.leq(res.value(FAIL), shape)


def test_widened_traversal_failure_is_cut_back_to_input():
    prog = parse_program("data U = u() | w(set<U> xs);\n"
                         "fun U entry(U x) = bottom-up visit(x) { case u() => w({w(u())}) };\n")
    shape = parse_shapes("refine V of U = w({V}[0;3]);", prog)["V"]
    an = Analyzer(prog)
    visit = prog.function("entry").body
    res = an.avisit(visit, shape, an.entry_store("entry", (shape,), True), an._ftypes["entry"])
    assert res.keys() == [FAIL]
    assert S.equivalent(res.value(FAIL), shape)
