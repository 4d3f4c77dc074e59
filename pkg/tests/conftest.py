import random

import pytest
from hypothesis import strategies as st

from dht.expr import Add, Const, Exp, Ln, Mul, Param, Pow, Seq, T, evaluate, symbols
from dht.mesh import MeshContext

SEED = 1234


def random_poly(rng: random.Random, depth: int = 3, offsets=(-1, 0, 1)):
    """Random polynomial in q1, p1, t and the step ``h``."""
    if depth == 0 or rng.random() < 0.3:
        r = rng.random()
        if r < 0.35:
            return Seq(rng.choice("qp"), 1, rng.choice(offsets))
        if r < 0.5:
            return T
        if r < 0.6:
            return Param("h")
        return Const(rng.randint(-4, 4))
    kind = rng.random()
    if kind < 0.45:
        return Add(tuple(random_poly(rng, depth - 1, offsets) for _ in range(rng.randint(2, 3))))
    if kind < 0.85:
        return Mul(tuple(random_poly(rng, depth - 1, offsets) for _ in range(2)))
    return Pow(random_poly(rng, depth - 1, offsets), Const(rng.randint(2, 3)))


def random_transcendental(rng: random.Random, depth: int = 3, offsets=(-1, 0, 1)):
    """Polynomial skeleton with ln of positive arguments and exp of bounded ones."""
    if depth == 0 or rng.random() < 0.25:
        return random_poly(rng, 1, offsets)
    kind = rng.random()
    if kind < 0.3:
        x = Seq(rng.choice("qp"), 1, rng.choice(offsets))
        return Ln(Add((Mul((x, x)), Const(1), Mul((T, T)))))
    if kind < 0.45:
        return Exp(Mul((Const(rng.choice([-1, 1])), Seq("q", 1, rng.choice(offsets)))))
    if kind < 0.7:
        return Add((random_transcendental(rng, depth - 1, offsets), random_transcendental(rng, depth - 1, offsets)))
    return Mul((random_transcendental(rng, depth - 1, offsets), random_transcendental(rng, depth - 1, offsets)))


def sample_points(exprs, rng: random.Random, count: int):
    syms = set()
    for e in exprs:
        syms |= symbols(e)
    for _ in range(count):
        pt = {}
        for s in syms:
            pt[s] = rng.uniform(0.01, 0.5) if s == Param("h") else rng.uniform(0.1, 2.0)
        yield pt


def max_abs(e, rng, count=20):
    return max((abs(evaluate(e, pt)) for pt in sample_points([e], rng, count)), default=0.0)


@st.composite
def polys(draw, offsets=(-1, 0, 1)):
    return random_poly(random.Random(draw(st.integers(0, 2**32 - 1))), 3, offsets)


@st.composite
def transcendentals(draw):
    return random_transcendental(random.Random(draw(st.integers(0, 2**32 - 1))))


@pytest.fixture
def ctx():
    return MeshContext(h="0.1", beta="0.95", n=1, m=1, params={"a": 1, "b": 1})
