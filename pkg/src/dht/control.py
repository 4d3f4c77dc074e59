"""Discounted discrete optimal control: present- and current-value systems.

The discount weight of the mesh point at time ``t`` is ``beta^(t/h)``, so
``beta`` is the factor per mesh period and ``lam_k = beta^k p_k``.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Sequence, Tuple, Union

from .expr import (
    BETA,
    MINUS_ONE,
    ONE,
    ZERO,
    Add,
    Const,
    DomainError,
    Expr,
    H,
    Mul,
    Param,
    Pow,
    Seq,
    T,
    Time,
    diff,
    evaluate,
    lam,
    p,
    q,
    substitute_raw,
    symbols,
)
from .mesh import DifferenceSystem, MeshContext, tidy_sum
from .normalize import coefficient_split, equivalent, normalize


class CurrentValueError(ValueError):
    """The current-value construction needs a discount factor below one."""


class ControlError(ValueError):
    pass


def discount() -> Expr:
    """``beta^(t/h)``, the present-value weight of the mesh point ``t``."""
    return Pow(BETA, Mul((T, Pow(H, MINUS_ONE))))


@dataclass(frozen=True)
class OptimalControlProblem:
    """Maximize ``sum beta^t F(q_t, u_t)`` subject to ``(q_{t+1}-q_t)/h = f(q_t, u_t)``."""

    F: Expr
    f: Tuple[Expr, ...]
    ctx: MeshContext
    init_q: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "f", tuple(self.f))
        if len(self.f) != self.ctx.n:
            raise ValueError(f"expected {self.ctx.n} dynamics expressions, got {len(self.f)}")
        for e in (self.F,) + self.f:
            for s in symbols(e):
                if isinstance(s, Seq):
                    if s.base in ("p", "lam"):
                        raise ValueError(f"objective and dynamics may not contain costates ({s.name})")
                    if s.shift != 0:
                        raise ValueError(f"objective and dynamics use offset-0 symbols only ({s.name})")
                    limit = self.ctx.n if s.base == "q" else self.ctx.m
                    if s.index > limit:
                        raise ValueError(f"{s.name} exceeds the declared dimension")
                elif isinstance(s, Param) and s.name not in self.ctx.parameter_names:
                    raise ValueError(f"unknown parameter {s.name}")


def present_value_hamiltonian(ocp: OptimalControlProblem) -> Expr:
    F = normalize(ocp.F)
    terms = [] if F == ZERO else [Mul((discount(), F))]
    for i, fi in enumerate(ocp.f, start=1):
        terms.append(Mul((lam(i, 1), fi)))
    return tidy_sum(*terms)


def current_value_hamiltonian(ocp: OptimalControlProblem) -> Expr:
    _require_discount(ocp.ctx)
    F = normalize(ocp.F)
    terms = [] if F == ZERO else [F]
    for i, fi in enumerate(ocp.f, start=1):
        terms.append(Mul((BETA, p(i, 1), fi)))
    return tidy_sum(*terms)


def _require_discount(ctx: MeshContext):
    if ctx.beta == 1:
        raise CurrentValueError(
            "the current-value Hamiltonian does not exist for beta = 1; "
            "use the present-value formulation instead"
        )


def pontryagin_system(ocp: OptimalControlProblem) -> DifferenceSystem:
    Hp = present_value_hamiltonian(ocp)
    n = ocp.ctx.n
    return DifferenceSystem(
        kind="present-value",
        hamiltonian=Hp,
        ctx=ocp.ctx,
        state_rhs=tuple(diff(Hp, lam(i, 1)) for i in range(1, n + 1)),
        costate_force=tuple(normalize(Mul((MINUS_ONE, diff(Hp, q(i))))) for i in range(1, n + 1)),
        gamma=tuple(ZERO for _ in range(n)),
        costate="lam",
        stationarity=tuple(diff(Hp, s) for s in ocp.ctx.control_symbols()),
    )


def gamma_term(i: int) -> Expr:
    """``(1 - beta) p^i_{t+1} / h``."""
    return Mul((Add((ONE, Mul((MINUS_ONE, BETA)))), p(i, 1), Pow(H, MINUS_ONE)))


def current_value_system(ocp: OptimalControlProblem) -> DifferenceSystem:
    _require_discount(ocp.ctx)
    Hc = current_value_hamiltonian(ocp)
    n = ocp.ctx.n
    # d/d(beta p) = (1/beta) d/dp, since beta*p enters only as a product
    state = tuple(normalize(Mul((Pow(BETA, MINUS_ONE), diff(Hc, p(i, 1))))) for i in range(1, n + 1))
    return DifferenceSystem(
        kind="current-value",
        hamiltonian=Hc,
        ctx=ocp.ctx,
        state_rhs=state,
        costate_force=tuple(normalize(Mul((MINUS_ONE, diff(Hc, q(i))))) for i in range(1, n + 1)),
        gamma=tuple(gamma_term(i) for i in range(1, n + 1)),
        costate="p",
        stationarity=tuple(diff(Hc, s) for s in ocp.ctx.control_symbols()),
    )


def present_to_current(sys: DifferenceSystem) -> Tuple[Tuple[Expr, ...], Tuple[Expr, ...], Tuple[Expr, ...]]:
    """Rewrite a present-value system in current-value variables.

    Substitutes ``lam_{t+k} = beta^(t/h + k) p_{t+k}`` and removes the
    ``beta^(t/h)`` factor from the stationarity and costate residuals.
    Returns ``(stationarity, state, costate)`` residual tuples.
    """
    if sys.kind != "present-value":
        raise ValueError("expected a present-value system")
    w = discount()
    bind = {}
    for i in range(1, sys.n + 1):
        for k in (0, 1):
            bind[lam(i, k)] = Mul((Pow(BETA, Add((Mul((T, Pow(H, MINUS_ONE))), Const(k)))), p(i, k)))
    inv = Pow(w, MINUS_ONE)

    def conv(e, scale):
        e = substitute_raw(e, bind)
        return normalize(Mul((inv, e)) if scale else e)

    return (
        tuple(conv(e, True) for e in sys.stationarity),
        tuple(conv(e, False) for e in sys.state_residuals),
        tuple(conv(e, True) for e in sys.costate_residuals),
    )


# ---------------------------------------------------------------------------
# control elimination


@dataclass(frozen=True)
class ControlSolution:
    """``u^j_t = g[j]`` as expressions in ``t``, ``q_t`` and the costate at ``t+1``."""

    g: Tuple[Expr, ...]

    def bindings(self):
        return {Seq("u", j, 0): gj for j, gj in enumerate(self.g, start=1)}


def solve_stationarity(sys: DifferenceSystem) -> ControlSolution:
    """Solve the stationarity residuals for the controls.

    Each residual, after earlier controls are substituted, must involve a
    single unsolved control ``u`` either affinely (``c1 u + c0``) or as
    ``c/u + d``.
    """
    us = list(sys.ctx.control_symbols())
    pending = list(sys.stationarity)
    solved = {}
    progress = True
    while pending and progress:
        progress = False
        for res in list(pending):
            r = normalize(substitute_raw(res, solved)) if solved else res
            present = [x for x in us if x not in solved and x in symbols(r)]
            if len(present) != 1:
                if not present:
                    pending.remove(res)
                continue
            x = present[0]
            split = coefficient_split(r, x)
            if split is None:
                raise ControlError(f"cannot solve {r} for {x.name}: control sits inside ln/exp")
            keys = set(split)
            c0 = split.get(Fraction(0), ZERO)
            if keys <= {Fraction(0), Fraction(1)} and Fraction(1) in keys:
                g = Mul((MINUS_ONE, c0, Pow(split[Fraction(1)], MINUS_ONE)))
            elif keys <= {Fraction(0), Fraction(-1)} and Fraction(-1) in keys and Fraction(0) in keys:
                g = Mul((MINUS_ONE, split[Fraction(-1)], Pow(c0, MINUS_ONE)))
            else:
                raise ControlError(
                    f"stationarity condition {r} is neither affine in {x.name} nor of the form c/{x.name} + d"
                )
            solved[x] = normalize(g)
            pending.remove(res)
            progress = True
    missing = [x.name for x in us if x not in solved]
    if missing:
        raise ControlError(f"could not solve the stationarity conditions for {', '.join(missing)}")
    return ControlSolution(tuple(solved[x] for x in us))


def _sample_point(sys: DifferenceSystem, exprs, rng: random.Random):
    point = dict(sys.ctx.float_values())
    for e in exprs:
        for s in symbols(e):
            if s in point:
                continue
            if isinstance(s, Time):
                point[s] = rng.uniform(0.0, 1.0)
            elif isinstance(s, Seq):
                point[s] = rng.uniform(0.1, 2.0)
    return point


def eliminate_control(sys: DifferenceSystem, sol: Union[str, ControlSolution, Sequence[Expr]] = "auto",
                      samples: int = 100, seed: int = 0) -> DifferenceSystem:
    """Substitute ``u = g`` everywhere and drop the stationarity conditions.

    A supplied ``g`` must make every stationarity residual vanish.  The
    second-order condition ``d2H/du2 < 0`` is sampled at ``samples``
    points of the box ``q, costates in [0.1, 2]``, ``t in [0, 1]``; a
    violation is attached as a warning, not raised.
    """
    if isinstance(sol, str):
        if sol != "auto":
            raise ValueError("sol must be 'auto' or a control solution")
        sol = solve_stationarity(sys)
    elif not isinstance(sol, ControlSolution):
        sol = ControlSolution(tuple(sol))
    if len(sol.g) != len(sys.stationarity):
        raise ControlError(f"expected {len(sys.stationarity)} control expressions, got {len(sol.g)}")
    bind = sol.bindings()
    for res in sys.stationarity:
        reduced = substitute_raw(res, bind)
        if not equivalent(reduced, ZERO):
            raise ControlError(f"supplied control does not solve the stationarity condition {res} = 0")

    warnings = list(sys.warnings)
    rng = random.Random(seed)
    for j, x in enumerate(sys.ctx.control_symbols(), start=1):
        second = normalize(substitute_raw(diff(diff(sys.hamiltonian, x), x), bind))
        worst = None
        checked = 0
        for _ in range(20 * samples):
            if checked >= samples:
                break
            point = _sample_point(sys, [second] + list(bind.values()), rng)
            try:
                v = evaluate(second, point)
            except DomainError:
                continue
            checked += 1
            if v >= 0 and (worst is None or v > worst):
                worst = v
        if worst is not None:
            warnings.append(
                f"second-order condition d2H/du{j}^2 < 0 fails on the sample box (max {worst:.3g})"
            )

    def sub(e):
        return normalize(substitute_raw(e, bind))

    return replace(
        sys,
        hamiltonian=sub(sys.hamiltonian),
        state_rhs=tuple(sub(e) for e in sys.state_rhs),
        costate_force=tuple(sub(e) for e in sys.costate_force),
        stationarity=(),
        control=sol.g,
        time_equation=None if sys.time_equation is None else sub(sys.time_equation),
        warnings=tuple(warnings),
    )
