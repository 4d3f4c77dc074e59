"""``dht derive|check|solve|simulate <file> [--seed N] [--tol X] [--out DIR]``.

Exit status: 0 success, 2 invalid input, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import sys as _sys
from pathlib import Path

from .control import (
    ControlError,
    CurrentValueError,
    current_value_hamiltonian,
    current_value_system,
    eliminate_control,
    present_value_hamiltonian,
    pontryagin_system,
)
from .expr import DomainError
from .mesh import DifferenceSystem
from .problem import Problem, ProblemError, load_problem
from .symmetry import (
    DEFAULT_SEED,
    NotConserved,
    SymmetryError,
    UnsupportedSystem,
    first_integral,
    integral_expr,
    invariance_residual_current,
    onshell_max,
    onshell_reduce,
    solve_determining,
)
from .trajectory import (
    ConvergenceError,
    SolverOptions,
    check_energy_identity,
    check_integral,
    simulate,
    write_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
DEFAULT_TOL = 1e-8


def _header(cmd, prob: Problem, seed: int):
    c = prob.ctx
    params = " ".join(f"{k}={v}" for k, v in sorted(c.params.items()))
    return [f"# dht {cmd} {prob.name}  seed={seed}",
            f"# n={c.n} m={c.m} h={c.h} beta={c.beta} {params}".rstrip()]


def _system_lines(sys: DifferenceSystem):
    out = [f"  {e}" for e in sys.state_equations()]
    out += [f"  {e}" for e in sys.costate_equations()]
    out += [f"  0 = {e}" for e in sys.stationarity]
    return out


def cmd_derive(prob: Problem, seed: int, tol: float, out_dir):
    lines = _header("derive", prob, seed)
    if not prob.is_control:
        sys = prob.system()
        lines += ["canonical Hamiltonian:", f"  H = {sys.hamiltonian}", "canonical system:"]
        lines += _system_lines(sys)
        lines += ["time equation:", f"  0 = {sys.time_equation}"]
        print("\n".join(lines))
        return EXIT_OK
    ocp = prob.ocp()
    pv = pontryagin_system(ocp)
    lines += ["present-value Hamiltonian:", f"  H = {present_value_hamiltonian(ocp)}", "present-value system:"]
    lines += _system_lines(pv)
    if prob.ctx.beta == 1:
        if prob.ctx.m:
            red = eliminate_control(pv)
            lines += ["control:"] + [f"  u{j}[0] = {g}" for j, g in enumerate(red.control, start=1)]
            lines += ["reduced present-value system:"] + _system_lines(red)
        print("\n".join(lines))
        if prob.formulation == "current":
            current_value_hamiltonian(ocp)  # raises the rejection
        print("current-value Hamiltonian: not defined for beta = 1 (present-value path only)")
        return EXIT_OK
    cv = current_value_system(ocp)
    lines += ["current-value Hamiltonian:", f"  Hc = {current_value_hamiltonian(ocp)}", "current-value system:"]
    lines += _system_lines(cv)
    lines += ["Gamma:"] + [f"  Gamma{i} = {g}" for i, g in enumerate(cv.gamma, start=1)]
    if prob.ctx.m:
        red = eliminate_control(cv, prob.control if prob.control is not None else "auto")
        lines += ["control:"] + [f"  u{j}[0] = {g}" for j, g in enumerate(red.control, start=1)]
        lines += ["reduced current-value system:"] + _system_lines(red)
        lines += [f"  Hc = {red.hamiltonian}"]
        lines += [f"warning: {w}" for w in red.warnings]
    print("\n".join(lines))
    return EXIT_OK


def _check_one(sys: DifferenceSystem, label, g, seed):
    """Residual, numeric on-shell maximum and integral of one generator."""
    exact = sys.with_parameters()
    res = invariance_residual_current(sys, g)
    lines = [f"[{label}] {g}", f"  residual: {res}"]
    red = exact.bind(onshell_reduce(invariance_residual_current(exact, g), exact).expr)
    worst = 0.0 if red == 0 else onshell_max(red, exact, seed=seed)
    lines.append(f"  on-shell: {red}")
    lines.append(f"  max |residual| over 200 on-shell points: {worst:.3e}")
    try:
        fi = first_integral(exact, g, seed=seed)
    except NotConserved as err:
        lines.append(f"  verdict: FAIL ({err})")
        return lines, None
    except SymmetryError:
        lines.append("  verdict: FAIL")
        return lines, None
    lines.append(f"  verdict: pass ({fi.verification})")
    lines.append(f"  I (raw) = {integral_expr(sys, g)}")
    if fi.onshell is not None:
        lines.append(f"  I (on-shell) = {fi.onshell}")
    return lines, fi


def cmd_check(prob: Problem, seed: int, tol: float, out_dir):
    if not prob.generators:
        raise ProblemError("no [generator] sections to check", source=prob.source)
    sys = prob.system()
    lines = _header("check", prob, seed)
    for entry in prob.generators:
        block, _ = _check_one(sys, entry.label, entry.generator, seed)
        lines += block
    print("\n".join(lines))
    return EXIT_OK


def _solve(prob: Problem, seed: int, tol: float):
    if prob.degree is None:
        raise ProblemError("no [solve] section with an ansatz degree", source=prob.source)
    return solve_determining(prob.system(), prob.degree, drift_tol=tol, seed=seed)


def cmd_solve(prob: Problem, seed: int, tol: float, out_dir):
    from .symmetry import determining_system

    sys = prob.system()
    found = _solve(prob, seed, tol)
    ds = determining_system(sys, prob.degree)
    lines = _header("solve", prob, seed)
    lines.append(f"# degree {prob.degree}: {len(ds.columns)} unknowns, kernel dimension {len(ds.kernel)} "
                 f"({len(ds.sound)} with conserved integral, {len(ds.rejected)} rejected)")
    lines.append(f"# {len(found)} independent integral(s)")
    for k, s in enumerate(found, start=1):
        g = s.generator
        lines.append(f"[generator solve{k}]")
        lines.append(f"xi = {g.xi}")
        lines += [f"eta{i} = {e}" for i, e in enumerate(g.eta, start=1)]
        lines += [f"zeta{i} = {e}" for i, e in enumerate(g.zeta, start=1)]
        lines.append(f"B = {g.B}")
        lines.append(f"# I (raw) = {s.integral.raw}")
        if s.integral.onshell is not None:
            lines.append(f"# I (on-shell) = {s.integral.onshell}")
        lines.append(f"# verification: {s.integral.verification}, relative drift {s.drift:.2e}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_simulate(prob: Problem, seed: int, tol: float, out_dir):
    if prob.simulation is None:
        raise ProblemError("no [simulate] section", source=prob.source)
    sim = prob.simulation
    sys = prob.system()
    traj = simulate(sys, (sim.q0, sim.p0), sim.N, SolverOptions(tol=sim.tol, max_iter=sim.max_iter), t0=sim.t0)
    lines = _header("simulate", prob, seed)
    lines.append(f"# {sim.N} steps, max Newton iterations {max(traj.iterations)}, "
                 f"max relative residual {traj.max_relative_residual:.3e}")
    integrals = []
    exact = sys.with_parameters()
    for entry in prob.generators:
        try:
            fi = first_integral(exact, entry.generator, seed=seed)
        except NotConserved:
            lines.append(f"[{entry.label}] invariance without a conserved integral; skipped")
            continue
        except SymmetryError:
            lines.append(f"[{entry.label}] not an invariance; skipped")
            continue
        integrals.append((entry.label, fi))
    if prob.degree is not None:
        for k, s in enumerate(_solve(prob, seed, tol), start=1):
            integrals.append((f"solve{k}", s.integral))
    exprs = []
    for j, (label, fi) in enumerate(integrals, start=1):
        e = fi.onshell if fi.onshell is not None else fi.raw
        exprs.append(e)
        rep = check_integral(traj, e, tol, relative=True)
        lines.append(f"I{j} [{label}] = {e}")
        lines.append(f"  drift: {rep}")
    if sys.kind == "current-value":
        lines.append(f"energy identity: {check_energy_identity(traj, sys)}")
    out = Path(out_dir) if out_dir else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{prob.name}.csv"
    write_csv(traj, path, exprs)
    lines.append(f"# wrote {path} ({len(traj)} rows)")
    print("\n".join(lines))
    return EXIT_OK


COMMANDS = {"derive": cmd_derive, "check": cmd_check, "solve": cmd_solve, "simulate": cmd_simulate}


def build_parser():
    ap = argparse.ArgumentParser(prog="dht", description="Discrete Hamiltonian systems of discounted control problems.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("file")
    ap.add_argument("--seed", type=int, default=None, help=f"sampling seed (default {DEFAULT_SEED})")
    ap.add_argument("--tol", type=float, default=DEFAULT_TOL, help="drift tolerance (relative)")
    ap.add_argument("--out", default=None, help="output directory for CSV files")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=_sys.stderr)
        return EXIT_INVALID
    if not args.tol > 0:
        print("error: --tol must be positive", file=_sys.stderr)
        return EXIT_INVALID
    try:
        prob = load_problem(args.file)
        seed = args.seed if args.seed is not None else (prob.seed if prob.seed is not None else DEFAULT_SEED)
        return COMMANDS[args.command](prob, seed, args.tol, args.out)
    except (ConvergenceError, DomainError, OverflowError) as err:
        print(f"numeric error: {err}", file=_sys.stderr)
        return EXIT_NUMERIC
    except (ProblemError, CurrentValueError, ControlError, UnsupportedSystem, ValueError) as err:
        print(f"error: {err}", file=_sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
