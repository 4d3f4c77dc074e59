"""Lie point generators, invariance residuals and first integrals.

A generator ``X = xi d/dt + eta^i d/dq^i + zeta^i d/dp^i`` has coefficients
in ``(t, q_t, p_t)``; its prolongation to the neighbouring mesh points is
obtained by shifting the coefficients.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

from .expr import (
    BETA,
    DEFAULT_WINDOW,
    MINUS_ONE,
    ONE,
    ZERO,
    Add,
    Const,
    DomainError,
    Exp,
    Expr,
    H,
    Ln,
    Mul,
    Param,
    Pow,
    Seq,
    Symbol,
    T,
    diff,
    evaluate,
    p,
    q,
    substitute_raw,
    symbols,
    wrap,
)
from .mesh import DifferenceSystem, d_plus, shift, shift_minus, shift_plus
from .normalize import coefficient_split, from_poly, normalize, to_poly

NUMERIC_TOL = 1e-10
NUMERIC_SAMPLES = 200
DEFAULT_SEED = 20240607


class SymmetryError(ValueError):
    """A generator fails its invariance condition."""


class UnsupportedSystem(ValueError):
    pass


class NotConserved(SymmetryError):
    """The generator passes the invariance check but its integral drifts."""


@dataclass(frozen=True)
class Generator:
    xi: Expr
    eta: Tuple[Expr, ...]
    zeta: Tuple[Expr, ...]
    B: Expr = ZERO

    def __post_init__(self):
        object.__setattr__(self, "xi", wrap(self.xi))
        object.__setattr__(self, "eta", tuple(wrap(e) for e in self.eta))
        object.__setattr__(self, "zeta", tuple(wrap(e) for e in self.zeta))
        object.__setattr__(self, "B", wrap(self.B))
        if len(self.eta) != len(self.zeta):
            raise ValueError("eta and zeta need one entry per state variable")
        for e in (self.xi, self.B) + self.eta + self.zeta:
            for s in symbols(e):
                if isinstance(s, Seq) and (s.shift != 0 or s.base not in ("q", "p", "lam")):
                    raise ValueError(f"generator coefficients depend on t, q[0] and p[0] only; found {s.name}")

    @property
    def n(self) -> int:
        return len(self.eta)

    @classmethod
    def zero(cls, n: int, B=ZERO) -> "Generator":
        return cls(ZERO, (ZERO,) * n, (ZERO,) * n, B)

    def scaled(self, c) -> "Generator":
        c = wrap(c)
        f = lambda e: normalize(Mul((c, e)))
        return Generator(f(self.xi), tuple(map(f, self.eta)), tuple(map(f, self.zeta)), f(self.B))

    def __add__(self, other: "Generator") -> "Generator":
        f = lambda a, b: normalize(Add((a, b)))
        return Generator(
            f(self.xi, other.xi),
            tuple(map(f, self.eta, other.eta)),
            tuple(map(f, self.zeta, other.zeta)),
            f(self.B, other.B),
        )

    def with_costate(self, base: str) -> "Generator":
        """Rename the costate symbols in the coefficients to ``base``."""
        bind = {}
        for e in (self.xi, self.B) + self.eta + self.zeta:
            for s in symbols(e):
                if isinstance(s, Seq) and s.base in ("p", "lam") and s.base != base:
                    bind[s] = Seq(base, s.index, s.shift)
        if not bind:
            return self
        f = lambda e: normalize(substitute_raw(e, bind))
        return Generator(f(self.xi), tuple(map(f, self.eta)), tuple(map(f, self.zeta)), f(self.B))

    def __str__(self):
        parts = [f"xi = {self.xi}"]
        parts += [f"eta{i} = {e}" for i, e in enumerate(self.eta, start=1)]
        parts += [f"zeta{i} = {e}" for i, e in enumerate(self.zeta, start=1)]
        parts.append(f"B = {self.B}")
        return ", ".join(parts)


@dataclass(frozen=True)
class FirstIntegral:
    """``I`` as constructed (``raw``) and reduced to offset-0 variables (``onshell``)."""

    I: Expr
    source: str
    verification: str
    raw: Expr
    onshell: Optional[Expr] = None
    max_residual: float = 0.0

    def __str__(self):
        return f"I = {self.I}  [{self.source}; {self.verification}]"


# ---------------------------------------------------------------------------
# prolongation and the operator


@dataclass(frozen=True)
class Prolongation:
    """Coefficients at offsets -1, 0, +1 keyed by offset."""

    xi: Dict[int, Expr]
    eta: Dict[int, Tuple[Expr, ...]]
    zeta: Dict[int, Tuple[Expr, ...]]


def prolong(g: Generator, window: int = DEFAULT_WINDOW) -> Prolongation:
    xi, eta, zeta = {}, {}, {}
    for k in (-1, 0, 1):
        xi[k] = normalize(shift(g.xi, k, window))
        eta[k] = tuple(normalize(shift(e, k, window)) for e in g.eta)
        zeta[k] = tuple(normalize(shift(e, k, window)) for e in g.zeta)
    return Prolongation(xi, eta, zeta)


def apply_operator(g: Generator, e: Expr, costate: str = "p", window: int = DEFAULT_WINDOW) -> Expr:
    """``X(e)`` with the prolonged generator; ``e`` may use offsets -1, 0, +1."""
    for s in symbols(e):
        if isinstance(s, Seq) and abs(s.shift) > 1:
            raise ValueError(f"{s.name}: the prolonged operator acts on offsets -1, 0, +1 only")
    g = g.with_costate(costate)
    pr = prolong(g, window)
    terms = []
    if T in symbols(e):
        terms.append(Mul((pr.xi[0], diff(e, T))))
    for k in (-1, 0, 1):
        for i in range(1, g.n + 1):
            x = q(i, k)
            if x in symbols(e):
                terms.append(Mul((pr.eta[k][i - 1], diff(e, x))))
            c = Seq(costate, i, k)
            if c in symbols(e):
                terms.append(Mul((pr.zeta[k][i - 1], diff(e, c))))
    return normalize(Add(tuple(terms))) if terms else ZERO


def _state_rhs_of(H_t: Expr, n: int) -> Tuple[Expr, ...]:
    return tuple(diff(H_t, p(i, 1)) for i in range(1, n + 1))


def _residual_core(H_t: Expr, g: Generator, dq: Sequence[Expr], costate: str, window: int) -> List[Expr]:
    """Terms of the standard invariance residual with ``D+(q^i)`` given by ``dq``."""
    pr = prolong(g, window)
    terms = []
    for i in range(g.n):
        c1 = Seq(costate, i + 1, 1)
        terms.append(Mul((pr.zeta[1][i], dq[i])))
        terms.append(Mul((c1, d_plus(g.eta[i], window))))
    terms.append(Mul((MINUS_ONE, apply_operator(g, H_t, costate, window))))
    terms.append(Mul((MINUS_ONE, H_t, d_plus(g.xi, window))))
    terms.append(Mul((MINUS_ONE, d_plus(g.B, window))))
    return terms


def invariance_residual_standard(H_t: Expr, g: Generator, window: int = DEFAULT_WINDOW) -> Expr:
    """``zeta_{t+1} D+q + p_{t+1} D+eta - X(H) - H D+xi - D+B`` for a canonical ``H``.

    ``D+(q^i)`` is replaced by ``dH/dp^i_{t+1}`` from the state equation.
    """
    dq = _state_rhs_of(H_t, g.n)
    return normalize(Add(tuple(_residual_core(H_t, g, dq, "p", window))))


def invariance_residual_current(sys: DifferenceSystem, g: Generator) -> Expr:
    """Invariance residual of a (possibly non-canonical) system with force ``Gamma``.

    Adds ``(eta^i - xi D+q^i) Gamma^i`` to the standard residual; ``D+q^i``
    is taken from the state equation.
    """
    if sys.has_control:
        raise ValueError("eliminate the control before testing invariance")
    if len(sys.gamma) != sys.n:
        raise ValueError("system carries no Gamma terms")
    if g.n != sys.n:
        raise ValueError(f"generator has {g.n} components, system {sys.n}")
    g = g.with_costate(sys.costate)
    w = sys.ctx.window
    dq = sys.state_rhs
    terms = _residual_core(sys.hamiltonian, g, dq, sys.costate, w)
    for i in range(sys.n):
        gam = sys.gamma[i]
        if gam == ZERO:
            continue
        terms.append(Mul((Add((g.eta[i], Mul((MINUS_ONE, dq[i], g.xi)))), gam)))
    return normalize(Add(tuple(terms)))


def mesh_residual(sys: DifferenceSystem, g: Generator) -> Expr:
    """``xi_{t+2} - 2 xi_{t+1} + xi_t`` on-shell, the uniform-mesh condition."""
    x0 = g.with_costate(sys.costate).xi
    x1, _ = onshell_reduce(shift_plus(x0, sys.ctx.window), sys)
    x2, _ = onshell_reduce(shift_plus(x1, sys.ctx.window), sys)
    return normalize(Add((x2, Mul((Const(-2), x1)), x0)))


# ---------------------------------------------------------------------------
# on-shell reduction


@lru_cache(maxsize=64)
def step_map(sys: DifferenceSystem) -> Optional[Dict[Seq, Expr]]:
    """Explicit ``{x_{t+1}: expr in offset-0 variables}``, or ``None``.

    Residuals that are affine in a single remaining unknown are solved one
    at a time, substituting earlier solutions.
    """
    pending = list(sys.residuals)
    unknowns = set(sys.unknowns)
    solved: Dict[Seq, Expr] = {}
    progress = True
    while pending and progress:
        progress = False
        for res in list(pending):
            r = normalize(substitute_raw(res, solved)) if solved else res
            present = [x for x in unknowns if x not in solved and x in symbols(r)]
            if len(present) != 1:
                continue
            x = present[0]
            split = coefficient_split(r, x)
            if split is None or not set(split) <= {Fraction(0), Fraction(1)} or Fraction(1) not in split:
                continue
            c1, c0 = split[Fraction(1)], split.get(Fraction(0), ZERO)
            solved[x] = normalize(Mul((MINUS_ONE, c0, Pow(c1, MINUS_ONE))))
            pending.remove(res)
            progress = True
    if len(solved) != len(unknowns):
        rest = _solve_linear(pending, [x for x in sys.unknowns if x not in solved], solved)
        if rest is None:
            return None
        solved.update(rest)
    # back-substitute so that every entry is free of offset +1 symbols
    for _ in range(len(solved)):
        solved = {k: normalize(substitute_raw(v, solved)) for k, v in solved.items()}
    if any(x in symbols(v) for v in solved.values() for x in unknowns):
        return None
    return solved


def _solve_linear(residuals, unknowns, solved):
    """Gaussian elimination for residuals jointly affine in ``unknowns``."""
    if len(residuals) != len(unknowns):
        return None
    zero = {x: ZERO for x in unknowns}
    rows = []
    for res in residuals:
        r = normalize(substitute_raw(res, solved)) if solved else res
        coeffs = [diff(r, x) for x in unknowns]
        if any(x in symbols(c) for c in coeffs for x in unknowns):
            return None
        rows.append(coeffs + [normalize(Mul((MINUS_ONE, substitute_raw(r, zero))))])
    k = len(unknowns)
    for col in range(k):
        piv = next((i for i in range(col, k) if rows[i][col] != ZERO), None)
        if piv is None:
            return None
        rows[col], rows[piv] = rows[piv], rows[col]
        inv = Pow(rows[col][col], MINUS_ONE)
        rows[col] = [normalize(Mul((inv, c))) for c in rows[col]]
        for i in range(k):
            if i != col and rows[i][col] != ZERO:
                f = rows[i][col]
                rows[i] = [normalize(Add((a, Mul((MINUS_ONE, f, b))))) for a, b in zip(rows[i], rows[col])]
    return {x: rows[i][k] for i, x in enumerate(unknowns)}


@dataclass(frozen=True)
class OnShell:
    expr: Expr
    exact: bool

    def __iter__(self):
        return iter((self.expr, self.exact))


def onshell_reduce(e: Expr, sys: DifferenceSystem) -> OnShell:
    """Replace ``q_{t+1}``, ``p_{t+1}`` by the equations of motion.

    Offsets above +1 are reduced by repeated shifting.  Expressions with
    negative offsets are returned unreduced.  ``exact`` is false when the
    system has no explicit step map.
    """
    sm = step_map(sys)
    if sm is None:
        return OnShell(e, False)
    cur = e
    while True:
        seqs = [s for s in symbols(cur) if isinstance(s, Seq)]
        top = max((s.shift for s in seqs), default=0)
        if top <= 0:
            break
        # x_{t+k} = S^(k-1) of the one-step map; each pass lowers the top offset by one
        bind = {s: shift(sm[Seq(s.base, s.index, 1)], top - 1, sys.ctx.window)
                for s in seqs if s.shift == top and Seq(s.base, s.index, 1) in sm}
        if not bind:
            return OnShell(e, False)
        cur = normalize(substitute_raw(cur, bind))
    return OnShell(cur, True)


def _sample_state(sys: DifferenceSystem, rng: random.Random):
    point = {T: rng.uniform(0.0, 1.0)}
    for i in range(1, sys.n + 1):
        point[q(i)] = rng.uniform(0.1, 2.0)
        point[sys.costate_symbol(i)] = rng.uniform(0.1, 2.0)
    return point


def onshell_max(e: Expr, sys: DifferenceSystem, samples: int = NUMERIC_SAMPLES, seed: int = DEFAULT_SEED) -> float:
    """Max ``|e|`` over seeded on-shell points: ``(t, q_t, p_t)`` drawn from
    ``[0,1] x [0.1,2]^2n``, later mesh values from the step map (or a Newton
    step when none is explicit)."""
    from .trajectory import SolverOptions, step

    params = sys.ctx.float_values()
    red, exact = onshell_reduce(e, sys)
    rng = random.Random(seed)
    worst = 0.0
    good = tries = 0
    while good < samples:
        tries += 1
        if tries > 20 * samples:
            raise DomainError(f"could not find {samples} admissible on-shell points")
        point = dict(params)
        point.update(_sample_state(sys, rng))
        try:
            if not exact:
                top = max((s.shift for s in symbols(red) if isinstance(s, Seq)), default=0)
                t, state = point[T], [point[q(i)] for i in range(1, sys.n + 1)]
                cost = [point[sys.costate_symbol(i)] for i in range(1, sys.n + 1)]
                for k in range(1, top + 1):
                    t, state, cost, _, _ = step(sys, (t, state, cost), SolverOptions())
                    for i in range(1, sys.n + 1):
                        point[q(i, k)] = float(state[i - 1])
                        point[sys.costate_symbol(i, k)] = float(cost[i - 1])
            v = abs(evaluate(red, point))
        except (DomainError, ArithmeticError):
            continue
        if not math.isfinite(v):
            continue
        worst = max(worst, v)
        good += 1
    return worst


def _verify(residual: Expr, sys: Optional[DifferenceSystem], samples: int, seed: int) -> Tuple[str, float]:
    if sys is not None:
        residual = sys.bind(onshell_reduce(residual, sys).expr)
    if residual == ZERO:
        return "symbolic-pass", 0.0
    if sys is None:
        return "failed", math.inf
    worst = onshell_max(residual, sys, samples, seed)
    if worst <= NUMERIC_TOL:
        return f"numeric-pass({worst:.2e})", worst
    return "failed", worst


# ---------------------------------------------------------------------------
# first integrals


def _integral_onshell(I_raw: Expr, sys: Optional[DifferenceSystem]) -> Optional[Expr]:
    """Offset-0 form of ``I``; negative offsets are shifted forward first."""
    if sys is None:
        return I_raw if all(s.shift == 0 for s in symbols(I_raw) if isinstance(s, Seq)) else None
    lo = min((s.shift for s in symbols(I_raw) if isinstance(s, Seq)), default=0)
    e = shift(I_raw, -lo, sys.ctx.window) if lo < 0 else I_raw
    red, exact = onshell_reduce(e, sys)
    return sys.bind(red) if exact else None


def conservation_residual(I_raw: Expr, sys: DifferenceSystem) -> Expr:
    """``D+(I)`` with negative offsets shifted away, not yet reduced on-shell."""
    lo = min((s.shift for s in symbols(I_raw) if isinstance(s, Seq)), default=0)
    e = shift(I_raw, -lo, sys.ctx.window) if lo < 0 else I_raw
    return d_plus(e, sys.ctx.window)


def _require_conserved(I_raw: Expr, sys: DifferenceSystem, samples: int, seed: int):
    verdict, worst = _verify(conservation_residual(I_raw, sys), sys, samples, seed)
    if verdict == "failed":
        raise NotConserved(
            f"the invariance residual vanishes but I = {I_raw} is not conserved "
            f"(max |D+(I)| = {worst:.3e} on-shell)"
        )


def standard_integral_expr(H_t: Expr, g: Generator, window: int = DEFAULT_WINDOW) -> Expr:
    """``sum p_t eta - xi (H_{t-1} + h dH_{t-1}/dt) - B``."""
    g = g.with_costate("p")
    H_prev = shift_minus(H_t, window)
    terms = [Mul((p(i + 1), e)) for i, e in enumerate(g.eta)]
    terms.append(Mul((MINUS_ONE, g.xi, Add((H_prev, Mul((H, diff(H_prev, T))))))))
    terms.append(Mul((MINUS_ONE, g.B)))
    return normalize(Add(tuple(terms)))


def current_integral_expr(sys: DifferenceSystem, g: Generator) -> Expr:
    """``sum p_t eta - xi H - B`` with ``H`` at ``(q_t, p_{t+1})``."""
    g = g.with_costate(sys.costate)
    terms = [Mul((sys.costate_symbol(i + 1), e)) for i, e in enumerate(g.eta)]
    terms.append(Mul((MINUS_ONE, g.xi, sys.hamiltonian)))
    terms.append(Mul((MINUS_ONE, g.B)))
    return normalize(Add(tuple(terms)))


def first_integral_standard(H_t: Expr, g: Generator, sys: Optional[DifferenceSystem] = None,
                            samples: int = NUMERIC_SAMPLES, seed: int = DEFAULT_SEED,
                            check_conservation: bool = True) -> FirstIntegral:
    """Integral of a canonical system from an invariance generator.

    ``sys`` (the canonical equations of ``H_t``) enables on-shell numeric
    verification, the on-shell form of ``I`` and the conservation check.
    """
    res = invariance_residual_standard(H_t, g, sys.ctx.window if sys else DEFAULT_WINDOW)
    verdict, worst = _verify(res, sys, samples, seed)
    if verdict == "failed":
        raise SymmetryError(f"generator is not an invariance of H: residual {res}")
    raw = standard_integral_expr(H_t, g)
    on = _integral_onshell(raw, sys)
    if check_conservation and sys is not None:
        _require_conserved(raw, sys, samples, seed)
    return FirstIntegral(raw, "standard", verdict, raw, on, worst)


def first_integral_current(sys: DifferenceSystem, g: Generator, samples: int = NUMERIC_SAMPLES,
                           seed: int = DEFAULT_SEED, check_conservation: bool = True) -> FirstIntegral:
    """Integral of a current-value (or present-value) system.

    A vanishing invariance residual alone does not make ``I`` conserved
    here, so ``D+(I)`` is also checked on-shell unless
    ``check_conservation`` is off; failure raises :class:`NotConserved`.
    """
    res = invariance_residual_current(sys, g)
    verdict, worst = _verify(res, sys, samples, seed)
    if verdict == "failed":
        raise SymmetryError(f"generator is not an invariance of the system: residual {res}")
    raw = current_integral_expr(sys, g)
    on = _integral_onshell(raw, sys)
    if check_conservation:
        _require_conserved(raw, sys, samples, seed)
    return FirstIntegral(raw, "current-value", verdict, raw, on, worst)


def integral_expr(sys: DifferenceSystem, g: Generator) -> Expr:
    """The integral formula matching the system: standard for canonical
    systems, current-value otherwise."""
    if sys.kind == "canonical":
        return standard_integral_expr(sys.hamiltonian, g, sys.ctx.window)
    return current_integral_expr(sys, g)


def first_integral(sys: DifferenceSystem, g: Generator, samples: int = NUMERIC_SAMPLES,
                   seed: int = DEFAULT_SEED, check_conservation: bool = True) -> FirstIntegral:
    if sys.kind == "canonical":
        return first_integral_standard(sys.hamiltonian, g, sys, samples, seed, check_conservation)
    return first_integral_current(sys, g, samples, seed, check_conservation)


# ---------------------------------------------------------------------------
# determining equations


def time_factors(sys: DifferenceSystem) -> Tuple[Expr, ...]:
    """``1, t, beta^(t/h), beta^(-t/h)``, deduplicated after inserting the
    numeric parameter values."""
    tb = Mul((T, Pow(H, MINUS_ONE)))
    cands = [ONE, T, Pow(BETA, tb), Pow(BETA, Mul((MINUS_ONE, tb)))]
    bind = _exact_values(sys)
    seen, out = set(), []
    for c in cands:
        key = normalize(substitute_raw(c, bind))
        if key not in seen:
            seen.add(key)
            out.append(c)
    return tuple(out)


def _exact_values(sys: DifferenceSystem):
    return {k: wrap(v) for k, v in sys.ctx.values().items()}


def monomials(vars_: Sequence[Symbol], degree: int) -> List[Expr]:
    out = []
    for d in range(degree + 1):
        for combo in itertools.combinations_with_replacement(vars_, d):
            out.append(normalize(Mul(combo)) if combo else ONE)
    return out


@dataclass(frozen=True)
class Column:
    """One unknown coefficient: ``component`` gets ``factor * monomial``."""

    component: Tuple[str, int]
    factor: Expr
    monomial: Expr

    def generator(self, n: int, coeff=ONE) -> Generator:
        e = normalize(Mul((wrap(coeff), self.factor, self.monomial)))
        z = [ZERO] * n
        kind, i = self.component
        if kind == "xi":
            return Generator(e, tuple(z), tuple(z), ZERO)
        if kind == "B":
            return Generator(ZERO, tuple(z), tuple(z), e)
        vec = list(z)
        vec[i - 1] = e
        if kind == "eta":
            return Generator(ZERO, tuple(vec), tuple(z), ZERO)
        return Generator(ZERO, tuple(z), tuple(vec), ZERO)

    def __str__(self):
        kind, i = self.component
        name = kind if kind in ("xi", "B") else f"{kind}{i}"
        return f"{name}:{normalize(Mul((self.factor, self.monomial)))}"


def expand_logs(e: Expr) -> Expr:
    """Split ``ln(c * prod x^k)`` into ``ln c + sum k ln x`` (positive domain)."""

    def go(node):
        if not node.children:
            return node
        node = node.rebuild(tuple(go(c) for c in node.children))
        if not isinstance(node, Ln):
            return node
        pl = to_poly(node.arg)
        if len(pl) != 1:
            return node
        (mono, c), = pl.items()
        if not c > 0 or not all(isinstance(a, Symbol) for a, _ in mono):
            return node
        terms = [Mul((Const(x), Ln(a))) for a, x in mono]
        if c != 1:
            terms.append(Ln(Const(c)))
        return Add(tuple(terms)) if terms else ZERO

    return normalize(go(e))


def _collect(e: Expr, numeric: bool) -> Dict[tuple, object]:
    """Coefficients of ``e`` over monomials in t-exponentials and Laurent
    powers of symbols.  Constant atoms (roots, logs of numbers) are folded
    into floats when ``numeric``."""
    out: Dict[tuple, object] = {}
    for mono, c in to_poly(expand_logs(e)).items():
        key = []
        for a, x in mono:
            syms = symbols(a)
            if isinstance(a, Symbol):
                if isinstance(a, Param):
                    raise UnsupportedSystem(f"parameter {a.name} left without a value")
                key.append((a, x))
            elif not syms:
                if not numeric:
                    raise _NeedsFloat()
                c = float(c) * evaluate(a, {}) ** float(x)
            elif isinstance(a, Exp) and syms == {T}:
                key.append((a, x))
            elif isinstance(a, Ln) and isinstance(a.arg, Symbol):
                key.append((a, x))
            else:
                raise UnsupportedSystem(f"non-polynomial term {a} in the determining equations")
        k = tuple(key)
        out[k] = out.get(k, 0) + c
    return out


class _NeedsFloat(Exception):
    pass


@dataclass
class DeterminingSystem:
    """Columns, the kernel of the invariance + mesh conditions, and the split
    of that kernel into directions whose integral is conserved (``sound``)
    and directions where it is not (``rejected``)."""

    sys: DifferenceSystem
    columns: List[Column]
    kernel: List[List[object]]
    sound: List[List[object]]
    rejected: List[List[object]]
    exact: bool

    def generator(self, vec) -> Generator:
        g = Generator.zero(self.sys.n)
        for c, col in zip(vec, self.columns):
            if c != 0:
                g = g + col.generator(self.sys.n, c)
        return g


def _null_space(rows: List[List[object]], ncols: int, exact: bool) -> List[List[object]]:
    if ncols == 0:
        return []
    if exact:
        import sympy

        if not rows:
            return [[Fraction(int(i == j)) for i in range(ncols)] for j in range(ncols)]
        M = sympy.Matrix([[sympy.Rational(c.numerator, c.denominator) for c in r] for r in rows])
        basis = M.nullspace()
        return [[Fraction(int(v.p), int(v.q)) for v in b] for b in basis]
    import numpy as np
    from scipy.linalg import null_space

    if not rows:
        return [list(r) for r in np.eye(ncols)]
    A = np.array(rows, dtype=float)
    scale = np.max(np.abs(A), axis=1, keepdims=True)
    scale[scale == 0] = 1
    N = null_space(A / scale, rcond=1e-10)
    return [list(N[:, j]) for j in range(N.shape[1])]


def _matrix(exprs: Sequence[Expr], exact: bool) -> List[List[object]]:
    colls = [_collect(e, not exact) for e in exprs]
    keys = sorted({k for c in colls for k in c}, key=repr)
    zero = Fraction(0) if exact else 0.0
    rows = []
    for k in keys:
        row = [c.get(k, zero) for c in colls]
        if not exact:
            row = [float(x) for x in row]
        elif any(not isinstance(x, (int, Fraction)) for x in row):
            raise _NeedsFloat()
        else:
            row = [Fraction(x) for x in row]
        if any(x != 0 for x in row):
            rows.append(row)
    return rows


def _combine(basis: Sequence[Sequence[object]], coeffs: Sequence[object]) -> List[object]:
    out = [0] * len(basis[0])
    for c, b in zip(coeffs, basis):
        for j, x in enumerate(b):
            out[j] = out[j] + c * x
    return out


def _apply(rows, vec):
    return [sum(r[j] * vec[j] for j in range(len(vec))) for r in rows]


def determining_system(sys: DifferenceSystem, degree: int) -> DeterminingSystem:
    """Assemble and solve the linear determining equations on the ansatz.

    Unknowns: each of ``xi, eta^i, zeta^i, B`` times each time factor times
    each monomial of degree at most ``degree`` in ``(q_t, p_t)``.
    """
    if degree not in (0, 1, 2, 3):
        raise ValueError("ansatz degree must be 0, 1, 2 or 3")
    if sys.has_control:
        raise UnsupportedSystem("eliminate the control first")
    num = sys.with_parameters(sys.ctx.values())
    if step_map(num) is None:
        raise UnsupportedSystem("the system has no explicit step map; the ansatz needs one")
    n = num.n
    vars_ = [q(i) for i in range(1, n + 1)] + [num.costate_symbol(i) for i in range(1, n + 1)]
    mons = monomials(vars_, degree)
    factors = time_factors(sys)
    bind = _exact_values(sys)
    comps = [("eta", i) for i in range(1, n + 1)] + [("zeta", i) for i in range(1, n + 1)] + [("xi", 0), ("B", 0)]
    columns = [Column(c, normalize(substitute_raw(f, bind)), m) for c in comps for f in factors for m in mons]

    inv, mesh, dI = [], [], []
    for col in columns:
        g = col.generator(n).with_costate(num.costate)
        inv.append(num.bind(onshell_reduce(invariance_residual_current(num, g), num).expr))
        mesh.append(num.bind(mesh_residual(num, g)) if col.component[0] == "xi" else ZERO)
        Ie = _integral_onshell(integral_expr(num, g), num)
        dI.append(num.bind(onshell_reduce(d_plus(Ie, num.ctx.window), num).expr))

    exact = True
    try:
        rows = _matrix(inv, True) + _matrix(mesh, True)
        drows = _matrix(dI, True)
    except _NeedsFloat:
        exact = False
        rows = _matrix(inv, False) + _matrix(mesh, False)
        drows = _matrix(dI, False)
    kernel = _null_space(rows, len(columns), exact)
    # directions of the kernel along which D+(I) also vanishes on-shell
    sound = _null_space(rows + drows, len(columns), exact) if kernel else []
    if not exact:
        kernel = [_chop(k) for k in kernel]
        sound = [_chop(k) for k in sound]
    rejected = _complement(kernel, sound, exact) if len(sound) < len(kernel) else []
    return DeterminingSystem(num, columns, kernel, sound, rejected, exact)


def _chop(vec, rel=1e-10):
    big = max((abs(x) for x in vec), default=0.0)
    return [0.0 if abs(x) <= rel * big else float(x) for x in vec]


def _complement(kernel, sound, exact):
    """Kernel vectors not in the span of ``sound``, chosen greedily."""
    chosen = list(sound)
    out = []
    for k in kernel:
        if _rank(chosen + [k], exact) > _rank(chosen, exact):
            chosen.append(k)
            out.append(k)
    return out


def _rank(vectors, exact) -> int:
    if not vectors:
        return 0
    if exact:
        import sympy

        return sympy.Matrix([[sympy.Rational(x.numerator, x.denominator) for x in v] for v in vectors]).rank()
    import numpy as np

    A = np.array(vectors, dtype=float)
    sv = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(sv > 1e-7 * sv[0])) if sv.size and sv[0] > 0 else 0


def _normalize_vector(vec, exact):
    """Largest |coefficient| becomes 1, first nonzero coefficient positive."""
    nz = [x for x in vec if (x != 0 if exact else abs(x) > 1e-12)]
    if not nz:
        return vec
    big = max(abs(x) for x in nz)
    sign = 1 if nz[0] > 0 else -1
    if exact:
        return [Fraction(x) / big * sign for x in vec]
    return [_snap(float(x) / big * sign) for x in _chop(vec, 1e-9)]


def _snap(x: float):
    """Replace a float by a small-denominator rational within round-off."""
    if x == 0:
        return Fraction(0)
    f = Fraction(x).limit_denominator(1000)
    return f if abs(float(f) - x) <= 1e-11 * max(1.0, abs(x)) else x


def chop_expr(e: Expr, rel: float = 1e-9) -> Expr:
    """Drop float-coefficient terms below ``rel`` times the largest one."""
    pl = to_poly(e)
    if not pl or all(isinstance(c, (int, Fraction)) for c in pl.values()):
        return e
    big = max(abs(float(c)) for c in pl.values())
    kept = {m: (_snap(c) if isinstance(c, float) else c) for m, c in pl.items() if abs(float(c)) > rel * big}
    return from_poly(kept)


@dataclass(frozen=True)
class SolvedSymmetry:
    generator: Generator
    integral: FirstIntegral
    drift: float


def _rref_rows(vectors, exact=True):
    import sympy

    M = sympy.Matrix([[sympy.Rational(x.numerator, x.denominator) for x in v] for v in vectors])
    R, piv = M.rref()
    return [[Fraction(int(x.p), int(x.q)) for x in R.row(i)] for i in range(len(piv))]


def _integral_basis(ds: DeterminingSystem) -> List[List[object]]:
    """Sound directions with linearly independent integrals.

    The sound basis is brought to reduced row echelon form, which favours
    generators supported on the earliest columns (state and costate
    coefficients before ``xi`` and ``B``); integrals are then added greedily
    while they raise the rank.
    """
    if not ds.sound:
        return []
    # rref is only stable in exact arithmetic; floats keep the orthonormal kernel basis
    rows = _rref_rows(ds.sound, True) if ds.exact else [list(v) for v in ds.sound]
    exprs = [_integral_onshell(integral_expr(ds.sys, ds.generator(v)), ds.sys) for v in rows]
    exact = ds.exact
    try:
        M = _matrix(exprs, exact)
    except _NeedsFloat:
        exact = False
        M = _matrix(exprs, False)
    if not M:
        return []
    if not exact:
        return _float_integral_basis(rows, M)
    cols = [[r[j] for r in M] for j in range(len(rows))]
    chosen, out = [], []
    for v, c in zip(rows, cols):
        if _rank(chosen + [c], exact) > _rank(chosen, exact):
            chosen.append(c)
            out.append(v)
    return out


def _float_integral_basis(vectors, M) -> List[List[float]]:
    """Echelon basis of the integral span (monomial coordinates), mapped back
    to generator directions by least squares."""
    import numpy as np

    V = np.array(vectors, dtype=float)
    A = np.array(M, dtype=float)
    U, sv, _ = np.linalg.svd(A, full_matrices=False)
    if not sv.size or sv[0] == 0:
        return []
    r = int(np.sum(sv > 1e-8 * sv[0]))
    R = (U[:, :r] * sv[:r]).T.copy()
    # Gauss-Jordan with partial pivoting over the monomial columns
    row = 0
    for col in range(R.shape[1]):
        if row == r:
            break
        piv = row + int(np.argmax(np.abs(R[row:, col])))
        if abs(R[piv, col]) <= 1e-9 * np.max(np.abs(R)):
            continue
        R[[row, piv]] = R[[piv, row]]
        R[row] /= R[row, col]
        for k in range(r):
            if k != row:
                R[k] -= R[k, col] * R[row]
        row += 1
    out = []
    for target in R[:row]:
        c, *_ = np.linalg.lstsq(A, target, rcond=None)
        out.append(list(c @ V))
    return out


def solve_determining(sys: DifferenceSystem, degree: int, drift_steps: int = 50,
                      drift_tol: float = 1e-8, seed: int = DEFAULT_SEED) -> List[SolvedSymmetry]:
    """Basis of ansatz generators whose integrals are conserved.

    Every returned integral is drift-checked on a trajectory of
    ``drift_steps`` steps from a seeded initial state before inclusion.
    """
    from .trajectory import ConvergenceError, check_integral, simulate

    ds = determining_system(sys, degree)
    out = []
    rng = random.Random(seed)
    init = ([rng.uniform(0.5, 1.5) for _ in range(sys.n)], [rng.uniform(0.5, 1.5) for _ in range(sys.n)])
    traj = None
    for vec in _integral_basis(ds):
        vec = _normalize_vector(vec, ds.exact)
        g = ds.generator(vec)
        if not ds.exact:
            g = Generator(chop_expr(g.xi), tuple(map(chop_expr, g.eta)), tuple(map(chop_expr, g.zeta)), chop_expr(g.B))
        fi = first_integral(ds.sys, g, seed=seed)
        if not ds.exact:
            fi = replace(fi, I=chop_expr(fi.I), raw=chop_expr(fi.raw),
                         onshell=None if fi.onshell is None else chop_expr(fi.onshell))
        if traj is None:
            try:
                traj = simulate(sys, init, drift_steps)
            except (ConvergenceError, ValueError):
                traj = False
        drift = math.nan
        if traj is not False:
            rep = check_integral(traj, fi.onshell if fi.onshell is not None else fi.raw, drift_tol, relative=True)
            drift = rep.max_step
            if not rep.passed:
                continue
        out.append(SolvedSymmetry(g, fi, drift))
    return out
