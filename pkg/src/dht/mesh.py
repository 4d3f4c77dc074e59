"""Discrete calculus on a uniform mesh and discrete Hamiltonian equations.

Time is a single symbol ``t``; one mesh step forward maps ``t`` to
``t + h`` and every sequence symbol ``x[k]`` to ``x[k+1]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, Mapping, Optional, Tuple, Union

from .expr import (
    BETA,
    DEFAULT_WINDOW,
    MINUS_ONE,
    ZERO,
    Add,
    Const,
    Expr,
    H,
    Mul,
    Param,
    Pow,
    Seq,
    Symbol,
    T,
    Time,
    diff,
    map_leaves,
    p,
    q,
    symbols,
    substitute_raw,
    wrap,
)
from .normalize import normalize
from .parse import _SEQ_NAME, RESERVED, parse_symbol


class WindowError(ValueError):
    """A shift pushed a sequence offset outside the declared window."""


class HamiltonianError(ValueError):
    pass


def _number(v):
    if isinstance(v, (Fraction, float)):
        return v
    if isinstance(v, int) and not isinstance(v, bool):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v)
    raise TypeError(f"not a number: {v!r}")


@dataclass(frozen=True)
class MeshContext:
    """Uniform step, discount factor, dimensions and parameter registry.

    ``params`` maps model-constant names to values; ``h`` and ``beta`` are
    always registered.  Values may be exact fractions or floats.
    """

    h: object = Fraction(1)
    beta: object = Fraction(1)
    n: int = 1
    m: int = 1
    params: Mapping[str, object] = field(default_factory=dict)
    window: int = DEFAULT_WINDOW

    def __post_init__(self):
        object.__setattr__(self, "h", _number(self.h))
        object.__setattr__(self, "beta", _number(self.beta))
        object.__setattr__(self, "params", {k: _number(v) for k, v in dict(self.params).items()})
        if not self.h > 0:
            raise ValueError(f"step h must be positive, got {self.h}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"discount factor beta must lie in (0, 1], got {self.beta}")
        if self.n < 1 or self.m < 0:
            raise ValueError("need n >= 1 and m >= 0")
        for name in self.params:
            if name in ("h", "beta") or name in RESERVED or not name.isidentifier():
                raise ValueError(f"parameter name {name!r} is reserved or invalid")
            if _SEQ_NAME.match(name):
                raise ValueError(f"parameter name {name!r} clashes with a sequence symbol")

    def __hash__(self):
        return hash((self.h, self.beta, self.n, self.m, tuple(sorted(self.params.items())), self.window))

    @property
    def parameter_names(self) -> frozenset:
        return frozenset({"h", "beta", *self.params})

    def values(self) -> Dict[Param, object]:
        out = {H: self.h, BETA: self.beta}
        out.update({Param(k): v for k, v in self.params.items()})
        return out

    def float_values(self) -> Dict[Param, float]:
        return {k: float(v) for k, v in self.values().items()}

    def state_symbols(self, k: int = 0):
        return tuple(q(i, k) for i in range(1, self.n + 1))

    def costate_symbols(self, k: int = 0, base: str = "p"):
        return tuple(Seq(base, i, k) for i in range(1, self.n + 1))

    def control_symbols(self):
        return tuple(Seq("u", j, 0) for j in range(1, self.m + 1))


# ---------------------------------------------------------------------------
# shifts and discrete derivatives


def shift(e: Expr, k: int, window: int = DEFAULT_WINDOW) -> Expr:
    """Total shift by ``k`` mesh points (raw tree)."""
    if k == 0:
        return e

    def leaf(x):
        if isinstance(x, Seq):
            s = x.shift + k
            if abs(s) > window:
                raise WindowError(f"shifting {x.name} by {k:+d} leaves the window ±{window}")
            return Seq(x.base, x.index, s)
        if isinstance(x, Time):
            return Add((T, Mul((Const(k), H)))) if k != 1 else Add((T, H))
        return x

    return map_leaves(e, leaf)


def shift_plus(e: Expr, window: int = DEFAULT_WINDOW) -> Expr:
    return shift(e, 1, window)


def shift_minus(e: Expr, window: int = DEFAULT_WINDOW) -> Expr:
    return shift(e, -1, window)


def d_plus(e: Expr, window: int = DEFAULT_WINDOW) -> Expr:
    """Right discrete derivative ``(S+ e - e)/h``, normalized."""
    return normalize(Mul((Add((shift_plus(e, window), Mul((MINUS_ONE, e)))), Pow(H, MINUS_ONE))))


def d_minus(e: Expr, window: int = DEFAULT_WINDOW) -> Expr:
    """Left discrete derivative ``(e - S- e)/h``, normalized."""
    return normalize(Mul((Add((e, Mul((MINUS_ONE, shift_minus(e, window))))), Pow(H, MINUS_ONE))))


def leibniz_residual(F: Expr, G: Expr, direction: str = "plus", window: int = DEFAULT_WINDOW) -> Expr:
    """``D(FG) - [D(F) G + F D(G) + s*h D(F) D(G)]`` with ``s = +1`` for the
    right derivative and ``s = -1`` for the left one.  Always zero."""
    if direction == "plus":
        D, sign = d_plus, 1
    elif direction == "minus":
        D, sign = d_minus, -1
    else:
        raise ValueError("direction must be 'plus' or 'minus'")
    dF, dG = D(F, window), D(G, window)
    rhs = Add((Mul((dF, G)), Mul((F, dG)), Mul((Const(sign), H, dF, dG))))
    return normalize(Add((D(Mul((F, G)), window), Mul((MINUS_ONE, rhs)))))


def variational_derivative(L: Expr, which: Union[str, Symbol], window: int = DEFAULT_WINDOW) -> Expr:
    """``d/dx_t + S- d/dx_{t+1}`` for a summand depending on offsets 0 and +1.

    ``which`` is a sequence symbol at offset 0 (``"q1"``, ``"p2[0]"`` or a
    :class:`Seq`) or ``"t"``.  Time is a single symbol here, so for ``t``
    only the explicit ``d/dt`` part exists.
    """
    if isinstance(which, str):
        which = parse_symbol(which if "[" in which or which == "t" else which + "[0]", window)
    if isinstance(which, Time):
        return diff(L, T)
    if not isinstance(which, Seq) or which.shift != 0:
        raise ValueError("variational derivative needs a sequence symbol at offset 0 or t")
    here = diff(L, which)
    ahead = diff(L, which.shifted(1))
    return normalize(Add((here, shift_minus(ahead, window))))


def action_summand(H_t: Expr, n: int) -> Expr:
    """``sum_i p^i_{t+1}(q^i_{t+1} - q^i_t) - H h``."""
    terms = [Mul((p(i, 1), Add((q(i, 1), Mul((MINUS_ONE, q(i, 0))))))) for i in range(1, n + 1)]
    terms.append(Mul((MINUS_ONE, H_t, H)))
    return Add(tuple(terms))


# ---------------------------------------------------------------------------
# difference systems


@dataclass(frozen=True)
class Equation:
    lhs: Expr
    rhs: Expr

    @property
    def residual(self) -> Expr:
        return normalize(Add((self.lhs, Mul((MINUS_ONE, self.rhs)))))

    def __str__(self):
        return f"{self.lhs} = {self.rhs}"


def forward_difference(x: Seq) -> Expr:
    """Raw ``(x[+1] - x[0])/h`` for a sequence symbol at offset 0."""
    return Mul((Add((x.shifted(1), Mul((MINUS_ONE, x)))), Pow(H, MINUS_ONE)))


def tidy_sum(*terms: Expr) -> Expr:
    kept = [t for t in terms if t != ZERO]
    if not kept:
        return ZERO
    return kept[0] if len(kept) == 1 else Add(tuple(kept))


@dataclass(frozen=True)
class DifferenceSystem:
    """Residual form of a discrete Hamiltonian system.

    State equations read ``(q^i[+1]-q^i[0])/h = state_rhs[i]`` and costate
    equations ``(c^i[+1]-c^i[0])/h = costate_force[i] + gamma[i]`` where
    ``c`` is ``p`` (canonical, current-value) or ``lam`` (present-value).
    """

    kind: str
    hamiltonian: Expr
    ctx: MeshContext
    state_rhs: Tuple[Expr, ...]
    costate_force: Tuple[Expr, ...]
    gamma: Tuple[Expr, ...]
    costate: str = "p"
    stationarity: Tuple[Expr, ...] = ()
    control: Optional[Tuple[Expr, ...]] = None
    time_equation: Optional[Expr] = None
    warnings: Tuple[str, ...] = ()
    bound: Tuple[Tuple[Param, Expr], ...] = ()

    @property
    def n(self) -> int:
        return len(self.state_rhs)

    def state_symbol(self, i: int, k: int = 0) -> Seq:
        return q(i, k)

    def costate_symbol(self, i: int, k: int = 0) -> Seq:
        return Seq(self.costate, i, k)

    def bind(self, e: Expr) -> Expr:
        """Insert the parameter values fixed by :meth:`with_parameters`."""
        return normalize(substitute_raw(e, dict(self.bound))) if self.bound else e

    def _lhs(self, x: Seq) -> Expr:
        d = forward_difference(x)
        return substitute_raw(d, dict(self.bound)) if self.bound else d

    def state_equations(self):
        return tuple(Equation(self._lhs(q(i + 1)), rhs) for i, rhs in enumerate(self.state_rhs))

    def costate_equations(self):
        return tuple(
            Equation(self._lhs(self.costate_symbol(i + 1)), tidy_sum(f, g))
            for i, (f, g) in enumerate(zip(self.costate_force, self.gamma))
        )

    @property
    def state_residuals(self):
        return tuple(e.residual for e in self.state_equations())

    @property
    def costate_residuals(self):
        return tuple(e.residual for e in self.costate_equations())

    @property
    def residuals(self):
        return self.state_residuals + self.costate_residuals

    @property
    def unknowns(self):
        """Offset +1 symbols the step map solves for."""
        n = self.n
        return tuple(q(i, 1) for i in range(1, n + 1)) + tuple(
            self.costate_symbol(i, 1) for i in range(1, n + 1)
        )

    @property
    def has_control(self) -> bool:
        exprs = (self.hamiltonian,) + self.state_rhs + self.costate_force
        return any(isinstance(s, Seq) and s.base == "u" for e in exprs for s in symbols(e))

    def with_parameters(self, values: Optional[Mapping] = None) -> "DifferenceSystem":
        """Copy with parameter symbols replaced by numbers (default: ctx values)."""
        values = self.ctx.values() if values is None else values
        bind = {k if isinstance(k, Param) else Param(k): wrap(v) for k, v in values.items()}

        def sub(e):
            return normalize(substitute_raw(e, bind))

        return replace(
            self,
            hamiltonian=sub(self.hamiltonian),
            state_rhs=tuple(sub(e) for e in self.state_rhs),
            costate_force=tuple(sub(e) for e in self.costate_force),
            gamma=tuple(sub(e) for e in self.gamma),
            stationarity=tuple(sub(e) for e in self.stationarity),
            control=None if self.control is None else tuple(sub(e) for e in self.control),
            time_equation=None if self.time_equation is None else sub(self.time_equation),
            bound=tuple(sorted({**dict(self.bound), **bind}.items(), key=lambda kv: kv[0].name)),
        )


def _check_canonical_symbols(H_t: Expr, ctx: MeshContext):
    for s in symbols(H_t):
        if isinstance(s, (Time, Param)):
            continue
        ok = isinstance(s, Seq) and s.index <= ctx.n and (
            (s.base == "q" and s.shift == 0) or (s.base == "p" and s.shift == 1)
        )
        if not ok:
            raise HamiltonianError(
                f"Hamiltonian may depend on t, q^i[0] and p^i[+1] only; found {s.name}"
            )


def hamiltonian_equations(H_t: Expr, ctx: MeshContext) -> DifferenceSystem:
    """Canonical discrete Hamiltonian equations of ``H(t, q[0], p[+1])``.

    The time equation ``h dH_t/dt + h dH_{t-1}/dt - H_t + H_{t-1}`` with
    ``H_{t-1} = S-(H_t)`` is attached as a diagnostic residual.
    """
    _check_canonical_symbols(H_t, ctx)
    n = ctx.n
    state = tuple(diff(H_t, p(i, 1)) for i in range(1, n + 1))
    force = tuple(normalize(Mul((MINUS_ONE, diff(H_t, q(i, 0))))) for i in range(1, n + 1))
    H_prev = shift_minus(H_t, ctx.window)
    time_eq = normalize(
        Add((
            Mul((H, diff(H_t, T))),
            Mul((H, diff(H_prev, T))),
            Mul((MINUS_ONE, H_t)),
            H_prev,
        ))
    )
    return DifferenceSystem(
        kind="canonical",
        hamiltonian=H_t,
        ctx=ctx,
        state_rhs=state,
        costate_force=force,
        gamma=tuple(ZERO for _ in range(n)),
        costate="p",
        time_equation=time_eq,
    )
