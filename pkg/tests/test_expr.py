import math
from fractions import Fraction
import random

import pytest
from hypothesis import given, settings

from dht.expr import (
    ZERO,
    Add,
    Const,
    DomainError,
    Mul,
    UnboundSymbolError,
    diff,
    evaluate,
    ln,
    p,
    q,
    substitute,
)
from dht.normalize import equivalent, is_zero, normalize
from dht.parse import ParseError, parse
from dht.printing import to_text

from conftest import max_abs, polys, transcendentals


def test_collects_like_terms():
    assert normalize(parse("q1[0] + 2*q1[0] - 3*q1[0]")) == ZERO
    assert to_text(normalize(parse("(q1[0] + p1[0])^2 - q1[0]^2"))) == to_text(
        normalize(parse("2*q1[0]*p1[0] + p1[0]^2"))
    )


def test_rational_arithmetic_is_exact():
    assert normalize(parse("1/3 + 1/6")) == Const(Fraction(1, 2))


def test_log_and_exp_rules():
    assert is_zero(Add((parse("ln(exp(q1[0]))"), Mul((Const(-1), q(1))))))
    assert equivalent(parse("exp(q1[0])*exp(p1[0])"), parse("exp(q1[0] + p1[0])"))


def test_diff_power_and_log():
    e = parse("q1[0]^3 + ln(q1[0])*p1[+1]")
    d = diff(e, q(1))
    assert equivalent(d, parse("3*q1[0]^2 + p1[+1]/q1[0]"))
    assert diff(e, p(1, 1)) == normalize(parse("ln(q1[0])"))


def test_substitute_normalizes():
    e = substitute(parse("q1[0]*p1[0] + q1[0]"), {q(1): Const(2)})
    assert e == normalize(parse("2*p1[0] + 2"))


def test_evaluate_domain_and_unbound():
    with pytest.raises(DomainError):
        evaluate(ln(q(1)), {q(1): -1.0})
    with pytest.raises(UnboundSymbolError):
        evaluate(parse("q1[0] + p1[0]"), {q(1): 1.0})
    assert math.isclose(evaluate(parse("q1[0]^2 + t"), {q(1): 3.0, parse("t"): 0.5}), 9.5)


@pytest.mark.parametrize("text", ["q1[0] +", "foo(q1[0])", "q1[+3]", "q0[0]"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse(text, window=2)


def test_parse_rejects_unknown_parameter(ctx):
    with pytest.raises(ParseError):
        parse("zz*q1[0]", ctx)


def test_equivalent_detects_difference():
    assert not equivalent(parse("ln(q1[0]*p1[0])"), parse("ln(q1[0]) + 2*ln(p1[0])"))


@settings(max_examples=60, deadline=None)
@given(polys())
def test_normalize_idempotent(e):
    n1 = normalize(e)
    assert normalize(n1) == n1


@settings(max_examples=60, deadline=None)
@given(polys(), polys())
def test_diff_linear(a, b):
    x = q(1)
    lhs = diff(Add((a, Mul((Const(3), b)))), x)
    rhs = Add((diff(a, x), Mul((Const(3), diff(b, x)))))
    assert is_zero(Add((lhs, Mul((Const(-1), rhs)))))


@settings(max_examples=60, deadline=None)
@given(polys())
def test_print_parse_round_trip_polynomial(e):
    n1 = normalize(e)
    assert normalize(parse(to_text(n1))) == n1


@settings(max_examples=40, deadline=None)
@given(transcendentals())
def test_print_parse_round_trip_transcendental(e):
    back = parse(to_text(e))
    assert max_abs(Add((back, Mul((Const(-1), e)))), random.Random(0), 10) <= 1e-9
