"""Numeric iteration of difference systems and conservation diagnostics."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .expr import (
    MINUS_ONE,
    Add,
    DomainError,
    Expr,
    Mul,
    Param,
    Seq,
    T,
    compile_exprs,
    q,
    substitute_raw,
    symbols,
    wrap,
)
from .mesh import DifferenceSystem, d_plus, tidy_sum
from .normalize import normalize


class ConvergenceError(ArithmeticError):
    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(message + where)


class SingularJacobianError(ConvergenceError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-12
    max_iter: int = 50
    guess: str = "previous"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("solver tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.guess not in ("previous", "predictor"):
            raise ValueError("guess must be 'previous' or 'predictor'")


@dataclass
class Trajectory:
    """Records ``(t_k, q_k, c_k)``; ``c`` is the costate sequence of the system."""

    h: float
    t0: float
    q: np.ndarray
    c: np.ndarray
    costate: str = "p"
    params: dict = field(default_factory=dict)
    iterations: List[int] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    scales: List[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.q.shape[1]

    def __len__(self):
        return self.q.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(len(self))

    @property
    def p(self) -> np.ndarray:
        return self.c

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)

    @property
    def max_relative_residual(self) -> float:
        """Residuals divided by ``1 + max|z|`` of the step, the quantity the
        Newton tolerance bounds."""
        return max((r / s for r, s in zip(self.residuals, self.scales)), default=0.0)


# ---------------------------------------------------------------------------
# compiled residual maps


def _bind_parameters(sys: DifferenceSystem, exprs):
    bind = {k: wrap(v) for k, v in sys.ctx.values().items()}
    return [normalize(substitute_raw(e, bind)) for e in exprs]


@lru_cache(maxsize=64)
def _stepper(sys: DifferenceSystem):
    if sys.has_control:
        raise ValueError("eliminate the control before iterating the system")
    n = sys.n
    here = [q(i) for i in range(1, n + 1)] + [sys.costate_symbol(i) for i in range(1, n + 1)]
    ahead = list(sys.unknowns)
    args = [T] + here + ahead
    residuals = _bind_parameters(sys, sys.residuals)
    for e in residuals:
        for s in symbols(e):
            if s not in args:
                raise ValueError(f"residual depends on {s.name}, which the step map does not provide")
    res = compile_exprs(residuals, args)
    # explicit Euler predictor with the costate at t+1 frozen at its current value
    freeze = dict(zip(ahead[n:], here[n:]))
    pred_exprs = list(sys.state_rhs) + [tidy_sum(f, g) for f, g in zip(sys.costate_force, sys.gamma)]
    pred = compile_exprs([substitute_raw(e, freeze) for e in _bind_parameters(sys, pred_exprs)], [T] + here)
    return res, pred


def _residual(res, t, x, z):
    try:
        r = np.asarray(res(t, *x, *z), dtype=float)
    except (DomainError, ZeroDivisionError, OverflowError):
        return None
    return r if np.all(np.isfinite(r)) else None


def step(sys: DifferenceSystem, state, opts: SolverOptions = SolverOptions(), index: Optional[int] = None):
    """One mesh step: solve the residual equations for ``(q_{t+1}, c_{t+1})``.

    Damped Newton iteration with a central finite-difference Jacobian.
    Converged when ``max|r| <= tol * (1 + max|z|)``.  Returns
    ``(t + h, q', c', iterations, max|r|)``.
    """
    res, pred = _stepper(sys)
    t, qv, cv = state
    x = np.concatenate([np.asarray(qv, float), np.asarray(cv, float)])
    h = float(sys.ctx.h)
    if opts.guess == "predictor":
        try:
            z = x + h * np.asarray(pred(t, *x), float)
        except (DomainError, ZeroDivisionError, OverflowError):
            z = x.copy()
    else:
        z = x.copy()
    r = _residual(res, t, x, z)
    if r is None:
        z = x.copy()
        r = _residual(res, t, x, z)
        if r is None:
            raise ConvergenceError("initial guess lies outside the domain of the residuals", index)
    size = len(z)
    for it in range(opts.max_iter + 1):
        norm = float(np.max(np.abs(r)))
        if norm <= opts.tol * (1.0 + float(np.max(np.abs(z)))):
            n = size // 2
            return t + h, z[:n], z[n:], it, norm
        if it == opts.max_iter:
            break
        J = np.empty((size, size))
        for j in range(size):
            d = 1e-7 * max(1.0, abs(z[j]))
            zp, zm = z.copy(), z.copy()
            zp[j] += d
            zm[j] -= d
            rp, rm = _residual(res, t, x, zp), _residual(res, t, x, zm)
            if rp is None or rm is None:
                raise ConvergenceError("finite-difference probe left the domain", index)
            J[:, j] = (rp - rm) / (2 * d)
        try:
            dz = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise SingularJacobianError("singular Jacobian in the Newton step", index) from None
        if not np.all(np.isfinite(dz)):
            raise SingularJacobianError("singular Jacobian in the Newton step", index)
        alpha = 1.0
        for _ in range(30):
            trial = z + alpha * dz
            rt = _residual(res, t, x, trial)
            if rt is not None and float(np.max(np.abs(rt))) < norm:
                break
            alpha *= 0.5
        else:
            rt = _residual(res, t, x, z + dz)
            if rt is None:
                raise ConvergenceError("Newton step leaves the domain of the residuals", index)
            trial = z + dz
        z, r = trial, rt
    raise ConvergenceError(f"Newton iteration did not converge in {opts.max_iter} iterations "
                           f"(residual {float(np.max(np.abs(r))):.3g})", index)


def simulate(sys: DifferenceSystem, init, N: int, opts: SolverOptions = SolverOptions(),
             t0: float = 0.0) -> Trajectory:
    """Iterate ``step`` ``N`` times from ``init = (q_0, c_0)``."""
    if N < 1:
        raise ValueError("N ≥ 1 required")
    q0, c0 = (np.atleast_1d(np.asarray(v, float)) for v in init)
    n = sys.n
    if q0.shape != (n,) or c0.shape != (n,):
        raise ValueError(f"initial state needs {n} states and {n} costates")
    Q = np.empty((N + 1, n))
    C = np.empty((N + 1, n))
    Q[0], C[0] = q0, c0
    traj = Trajectory(h=float(sys.ctx.h), t0=float(t0), q=Q, c=C, costate=sys.costate,
                      params={k.name: v for k, v in sys.ctx.float_values().items()})
    t = float(t0)
    for k in range(N):
        _, qn, cn, it, norm = step(sys, (t, Q[k], C[k]), opts, index=k)
        t = float(t0) + (k + 1) * traj.h
        Q[k + 1], C[k + 1] = qn, cn
        traj.iterations.append(it)
        traj.residuals.append(norm)
        traj.scales.append(1.0 + float(max(np.max(np.abs(qn)), np.max(np.abs(cn)))))
    return traj


# ---------------------------------------------------------------------------
# evaluating expressions along trajectories


def _offsets(e: Expr) -> Tuple[int, int]:
    shifts = [0] + [s.shift for s in symbols(e) if isinstance(s, Seq)]
    return min(shifts), max(shifts)


def evaluate_along(traj: Trajectory, e: Expr) -> Tuple[np.ndarray, int]:
    """Values of ``e`` at every record ``k`` where all its offsets exist.

    Returns ``(values, k0)`` where ``values[j]`` belongs to record ``k0 + j``.
    """
    bind = {Param(k): wrap(v) for k, v in traj.params.items()}
    e = normalize(substitute_raw(e, bind)) if bind else e
    lo, hi = _offsets(e)
    seqs = sorted((s for s in symbols(e) if isinstance(s, Seq)), key=lambda s: (s.base, s.index, s.shift))
    for s in symbols(e):
        if isinstance(s, Param):
            raise ValueError(f"no value for parameter {s.name}")
        if isinstance(s, Seq) and (s.base not in ("q", traj.costate) or s.index > traj.n):
            raise ValueError(f"{s.name} is not a trajectory variable")
    fn = compile_exprs([e], [T] + seqs)
    k0, k1 = -lo, len(traj) - 1 - hi
    out = []
    tt = traj.t
    for k in range(k0, k1 + 1):
        vals = [traj.q[k + s.shift, s.index - 1] if s.base == "q" else traj.c[k + s.shift, s.index - 1]
                for s in seqs]
        out.append(fn(tt[k], *vals)[0])
    return np.asarray(out, float), k0


@dataclass(frozen=True)
class DriftReport:
    max_step: float
    max_total: float
    tol: float
    passed: bool
    values: Tuple[float, ...] = ()

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return f"max |I(k+1)-I(k)| = {self.max_step:.3e}, max |I(k)-I(0)| = {self.max_total:.3e} [{verdict}]"


def check_integral(traj: Trajectory, integral, tol: float = 1e-8, relative: bool = False) -> DriftReport:
    """Per-step and cumulative drift of an integral along ``traj``.

    ``integral`` is an expression or anything with an ``I`` attribute.
    With ``relative`` the tolerance is scaled by ``1 + max|I|``.
    """
    e = getattr(integral, "I", integral)
    try:
        vals, _ = evaluate_along(traj, e)
    except DomainError as err:
        raise DomainError(f"integral not evaluable on the trajectory: {err}") from None
    if len(vals) < 2:
        raise ValueError("trajectory too short to measure drift")
    steps = np.abs(np.diff(vals))
    total = np.abs(vals - vals[0])
    max_step = float(np.max(steps))
    max_total = float(np.max(total))
    bound = tol * (1 + float(np.max(np.abs(vals)))) if relative else tol
    ok = bool(np.all(np.isfinite(vals))) and max_step <= bound
    return DriftReport(max_step, max_total, bound, ok, tuple(float(v) for v in vals))


def energy_identity_expr(sys: DifferenceSystem) -> Expr:
    """``D+(H) - sum_i Gamma_i dH/d(beta p^i_{t+1})`` for a current-value system."""
    if sys.kind not in ("current-value", "canonical"):
        raise ValueError("the energy identity concerns current-value (or canonical) systems")
    if sys.has_control:
        raise ValueError("eliminate the control first")
    Hc = sys.hamiltonian
    terms = [d_plus(Hc, sys.ctx.window)]
    for g, rhs in zip(sys.gamma, sys.state_rhs):
        # state_rhs is dH/dp scaled by 1/beta, i.e. dH/d(beta p)
        terms.append(Mul((MINUS_ONE, g, rhs)))
    return normalize(Add(tuple(terms)))


@dataclass(frozen=True)
class IdentityReport:
    max_abs: float
    scale: float
    tol: float
    passed: bool

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return (f"max |D+(H) - Gamma.dH/d(beta p')| = {self.max_abs:.3e} "
                f"(tolerance {self.tol:g} x {self.scale:.3g}) [{verdict}]")


def check_energy_identity(traj: Trajectory, sys: DifferenceSystem, tol: float = 1e-9) -> IdentityReport:
    """Evaluate the discrete energy identity at every record where ``H_{k+1}`` exists.

    Passes iff the maximum is at most ``tol * (1 + max|H_k|)``.
    """
    vals, _ = evaluate_along(traj, energy_identity_expr(sys))
    hvals, _ = evaluate_along(traj, sys.hamiltonian)
    worst = float(np.max(np.abs(vals))) if len(vals) else 0.0
    scale = 1.0 + float(np.max(np.abs(hvals)))
    return IdentityReport(worst, scale, tol, bool(np.isfinite(worst)) and worst <= tol * scale)


def write_csv(traj: Trajectory, path, integrals: Sequence = ()) -> None:
    """Header ``k,t,q1..qn,p1..pn[,I1..Im]``; cells where an integral's
    offsets run past the trajectory are left empty."""
    n = traj.n
    cols = []
    for I in integrals:
        vals, k0 = evaluate_along(traj, getattr(I, "I", I))
        cols.append((vals, k0))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "t"] + [f"q{i}" for i in range(1, n + 1)] + [f"p{i}" for i in range(1, n + 1)]
                   + [f"I{j}" for j in range(1, len(cols) + 1)])
        tt = traj.t
        for k in range(len(traj)):
            row = [str(k), repr(float(tt[k]))]
            row += [repr(float(x)) for x in traj.q[k]] + [repr(float(x)) for x in traj.c[k]]
            for vals, k0 in cols:
                j = k - k0
                row.append(repr(float(vals[j])) if 0 <= j < len(vals) else "")
            w.writerow(row)
