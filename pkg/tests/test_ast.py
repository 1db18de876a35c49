from itertools import product

import pytest
from hypothesis import given, strategies as st

from trlshape.ast import (
    INT, STR, VALUE, VOID, AdtT, PCons, PSet, PVar, Plain, SetT, Star, StaticError,
    abstract_subtype, check_program, pattern_vars, subtype, type_meet,
)
from trlshape.concrete import ConsV, IntV, SetV, StrV, has_type
from trlshape.parser import parse_program

PROG = parse_program("""
data Nat = zero() | suc(Nat pred);
data Expr = cst(Nat val) | var(str nm) | mult(Expr l, Expr r);
""")
ENV = PROG.decls
NAT, EXPR = AdtT("Nat"), AdtT("Expr")
BASE = [VOID, VALUE, INT, STR, NAT, EXPR]
ALPHABET = BASE + [SetT(t) for t in BASE] + [SetT(SetT(t)) for t in (INT, NAT, VALUE)]

# inhabitants used as the semantic oracle for subtyping
_atoms = [IntV(0), IntV(5), StrV("a"), ConsV("zero"), ConsV("suc", (ConsV("zero"),)),
          ConsV("var", (StrV("x"),)), ConsV("cst", (ConsV("zero"),))]
_sets = [SetV(frozenset()), *(SetV(frozenset({a})) for a in _atoms),
         SetV(frozenset({IntV(0), StrV("a")})), SetV(frozenset({ConsV("zero"), IntV(5)}))]
_nested = [SetV(frozenset({s})) for s in _sets] + [SetV(frozenset({_sets[1], _sets[4]}))]
POOL = _atoms + _sets + _nested


def inhabitants(t):
    return {v for v in POOL if has_type(v, t, PROG)}


types = st.sampled_from(ALPHABET)


def test_subtype_examples():
    assert subtype(VOID, NAT, ENV)
    assert subtype(NAT, NAT, ENV)
    assert subtype(SetT(INT), SetT(VALUE), ENV)
    assert not subtype(NAT, EXPR, ENV)
    assert subtype(NAT, VALUE, ENV)


def test_subtype_agrees_with_inhabitants():
    for t1, t2 in product(ALPHABET, ALPHABET):
        assert subtype(t1, t2, ENV) == (inhabitants(t1) <= inhabitants(t2)), (t1, t2)


def test_subtype_is_partial_order():
    for a, b, c in product(ALPHABET, repeat=3):
        assert subtype(a, a)
        if subtype(a, b) and subtype(b, a):
            assert a == b
        if subtype(a, b) and subtype(b, c):
            assert subtype(a, c)


def test_unknown_adt_is_static_error():
    with pytest.raises(StaticError):
        subtype(AdtT("Tree"), NAT, ENV)


def test_abstract_subtype_examples():
    assert abstract_subtype(NAT, VALUE, ENV)
    assert not abstract_subtype(NAT, EXPR, ENV)
    assert abstract_subtype(SetT(INT), SetT(INT), ENV)


def test_abstract_subtype_matches_enumeration():
    # some non-void type lies below both
    for t1, t2 in product(ALPHABET, ALPHABET):
        witness = any(t != VOID and subtype(t, t1) and subtype(t, t2) for t in ALPHABET)
        assert abstract_subtype(t1, t2, ENV) == witness, (t1, t2)


@given(types, types)
def test_abstract_subtype_symmetric(t1, t2):
    assert abstract_subtype(t1, t2) == abstract_subtype(t2, t1)


@given(types, types)
def test_meet_is_greatest_lower_bound(t1, t2):
    m = type_meet(t1, t2)
    assert subtype(m, t1) and subtype(m, t2)
    for t in ALPHABET:
        if subtype(t, t1) and subtype(t, t2):
            assert subtype(t, m)


def test_pattern_vars():
    mult = PCons("mult", (PVar("x"), PVar("y")))
    assert pattern_vars(mult) == {"x", "y"}
    assert pattern_vars(PSet((Plain(mult), Star("w"), Plain(PVar("x"))))) == {"x", "y", "w"}
    assert pattern_vars(PVar("x")) == {"x"}


@pytest.mark.parametrize("src, msg", [
    ("data A = a(); data A = b();", "declared twice"),
    ("data A = a(); data B = a();", "declared twice"),
    ("data A = a(Nope n);", "unknown data type"),
    ("data A = a(A x, A x);", "duplicate parameter"),
    ("data A = a(); fun A f(A x) = b();", "unknown function 'b'"),
    ("data A = a(); fun A f(A x) = a(x);", "expects 0 arguments"),
    ("data A = a(); fun A f(A x) = g(x);", "unknown function"),
    ("data A = a(); fun A f(A x) = x; fun A f(A y) = y;", "defined twice"),
    ("data A = a(); fun A f(A x) = bottom-up visit(x) { case b() => x };", "unknown constructor"),
])
def test_static_errors(src, msg):
    with pytest.raises(StaticError, match=msg):
        parse_program(src)


def test_check_program_accepts_corpus_style_program():
    assert check_program(PROG) is PROG
