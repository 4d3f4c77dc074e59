"""Reference problems used by the tests, scripts and problem files."""
from __future__ import annotations

from .control import OptimalControlProblem
from .expr import Expr
from .mesh import MeshContext
from .parse import parse


def lq(a=1, b=1, beta="0.95", h="0.1") -> OptimalControlProblem:
    """Linear-quadratic regulator: ``F = -(a q^2 + b u^2)/2``, ``f = u``."""
    ctx = MeshContext(h=h, beta=beta, n=1, m=1, params={"a": a, "b": b})
    return OptimalControlProblem(parse("-(a*q1[0]^2 + b*u1[0]^2)/2", ctx), (parse("u1[0]", ctx),), ctx)


def log_ak(A="1.05", beta="0.95", h="0.1") -> OptimalControlProblem:
    """Log utility with AK technology: ``F = ln u``, ``f = A q - u``."""
    ctx = MeshContext(h=h, beta=beta, n=1, m=1, params={"A": A})
    return OptimalControlProblem(parse("ln(u1[0])", ctx), (parse("A*q1[0] - u1[0]", ctx),), ctx)


def lq2(beta="0.9", h="0.1") -> OptimalControlProblem:
    """Two decoupled regulators with different weights."""
    ctx = MeshContext(h=h, beta=beta, n=2, m=2, params={"a": 1, "b": 2})
    F = parse("-(q1[0]^2 + u1[0]^2)/2 - (a*q2[0]^2 + b*u2[0]^2)/2", ctx)
    return OptimalControlProblem(F, (parse("u1[0]", ctx), parse("q1[0] + u2[0]", ctx)), ctx)


CANONICAL = {
    "linear": "p1[+1]*q1[0]",
    "oscillator": "(p1[+1]^2 + q1[0]^2)/2",
    "driven": "p1[+1]^2/2 + t*q1[0]",
    "rotation": "p1[+1]*q2[0] - p2[+1]*q1[0]",
}


def canonical(name: str, h="0.1") -> tuple[Expr, MeshContext]:
    text = CANONICAL[name]
    n = 2 if "q2" in text or "p2" in text else 1
    ctx = MeshContext(h=h, beta=1, n=n, m=0)
    return parse(text, ctx), ctx


def control_problems():
    return {"lq": lq(), "log_ak": log_ak(), "lq2": lq2()}
