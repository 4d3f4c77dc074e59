"""Problem files: a flat ``key = value`` format with ``[sections]``.

::

    name = lq
    n = 1
    m = 1
    h = 0.1
    beta = 0.95

    [params]
    a = 1
    b = 1

    [model]
    F = -(a*q1[0]^2 + b*u1[0]^2)/2
    f1 = u1[0]

    [generator scaling]
    eta1 = q1[0]
    zeta1 = -p1[0]

    [solve]
    degree = 2

    [simulate]
    q0 = 1
    p0 = 1
    N = 1000

A canonical system gives ``H = ...`` in ``[model]`` instead of ``F`` and
``f1..fn``.  ``formulation = present`` switches the optimal-control
problem to the present-value system.  ``#`` starts a comment.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .control import (
    OptimalControlProblem,
    current_value_system,
    eliminate_control,
    pontryagin_system,
)
from .expr import Expr
from .mesh import DifferenceSystem, MeshContext, hamiltonian_equations
from .parse import ParseError, parse
from .symmetry import Generator


class ProblemError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "<problem>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


_TOP_KEYS = {"name", "n", "m", "h", "beta", "formulation", "seed"}
_SECTION = re.compile(r"^\[\s*([A-Za-z_]+)(?:\s+([^\]\s]+))?\s*\]$")


@dataclass
class _Entry:
    value: str
    line: int


@dataclass
class GeneratorSpec:
    label: str
    generator: Generator
    line: int


@dataclass
class SimulationSpec:
    q0: Tuple[float, ...]
    p0: Tuple[float, ...]
    N: int
    tol: float = 1e-12
    max_iter: int = 50
    t0: float = 0.0


@dataclass
class Problem:
    name: str
    ctx: MeshContext
    formulation: str
    F: Optional[Expr] = None
    f: Tuple[Expr, ...] = ()
    H: Optional[Expr] = None
    control: Optional[Tuple[Expr, ...]] = None
    generators: List[GeneratorSpec] = field(default_factory=list)
    degree: Optional[int] = None
    simulation: Optional[SimulationSpec] = None
    seed: Optional[int] = None
    source: str = "<problem>"

    @property
    def is_control(self) -> bool:
        return self.H is None

    def ocp(self) -> OptimalControlProblem:
        if not self.is_control:
            raise ProblemError("not an optimal-control problem", source=self.source)
        return OptimalControlProblem(self.F, self.f, self.ctx)

    def system(self) -> DifferenceSystem:
        """The system the check/solve/simulate commands work on, control eliminated."""
        if not self.is_control:
            return hamiltonian_equations(self.H, self.ctx)
        ocp = self.ocp()
        if self.formulation == "present":
            sys = pontryagin_system(ocp)
        else:
            sys = current_value_system(ocp)
        if self.ctx.m == 0:
            return sys
        if self.control is not None and self.formulation == "current":
            return eliminate_control(sys, self.control)
        return eliminate_control(sys)


def _split(text: str, source: str):
    top: Dict[str, _Entry] = {}
    sections: List[Tuple[str, Optional[str], int, Dict[str, _Entry]]] = []
    current = top
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            m = _SECTION.match(line)
            if not m:
                raise ProblemError(f"malformed section header {line!r}", lineno, source)
            current = {}
            sections.append((m.group(1), m.group(2), lineno, current))
            continue
        if "=" not in line:
            raise ProblemError(f"expected 'key = value', got {line!r}", lineno, source)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ProblemError("missing key before '='", lineno, source)
        if not value:
            raise ProblemError(f"missing value for {key!r}", lineno, source)
        if key in current:
            raise ProblemError(f"duplicate key {key!r} (first set on line {current[key].line})", lineno, source)
        current[key] = _Entry(value, lineno)
    return top, sections


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def error(self, message, line=None):
        return ProblemError(message, line, self.source)

    def integer(self, e: _Entry, key: str, lo: Optional[int] = None) -> int:
        try:
            v = int(e.value)
        except ValueError:
            raise self.error(f"{key} must be an integer, got {e.value!r}", e.line) from None
        if lo is not None and v < lo:
            raise self.error(f"{key} must be at least {lo}", e.line)
        return v

    def number(self, e: _Entry, key: str):
        try:
            return Fraction(e.value)
        except (ValueError, ZeroDivisionError):
            pass
        try:
            return float(e.value)
        except ValueError:
            raise self.error(f"{key} must be a number, got {e.value!r}", e.line) from None

    def floats(self, e: _Entry, key: str, count: int) -> Tuple[float, ...]:
        parts = [s for s in re.split(r"[,\s]+", e.value) if s]
        try:
            vals = tuple(float(s) for s in parts)
        except ValueError:
            raise self.error(f"{key} must be a list of numbers, got {e.value!r}", e.line) from None
        if len(vals) != count:
            raise self.error(f"{key} needs {count} values, got {len(vals)}", e.line)
        return vals

    def expr(self, e: _Entry, ctx: MeshContext) -> Expr:
        try:
            return parse(e.value, ctx)
        except ParseError as err:
            raise self.error(str(err), e.line) from None

    def unknown(self, entries: Dict[str, _Entry], allowed, where: str):
        for k, e in entries.items():
            if k not in allowed:
                raise self.error(f"unknown key {k!r} in {where}", e.line)


def parse_problem(text: str, source: str = "<problem>") -> Problem:
    r = _Reader(source)
    top, sections = _split(text, source)
    r.unknown(top, _TOP_KEYS, "the header")
    for k in ("n", "h", "beta"):
        if k not in top:
            raise r.error(f"missing required key {k!r}")
    n = r.integer(top["n"], "n", 1)
    m = r.integer(top["m"], "m", 0) if "m" in top else 0
    h = r.number(top["h"], "h")
    beta = r.number(top["beta"], "beta")
    if not h > 0:
        raise r.error(f"h must be positive, got {top['h'].value}", top["h"].line)
    if not 0 < beta <= 1:
        raise r.error(f"beta must lie in (0, 1], got {top['beta'].value}", top["beta"].line)
    formulation = top["formulation"].value if "formulation" in top else "current"
    if formulation not in ("current", "present"):
        raise r.error("formulation must be 'current' or 'present'", top["formulation"].line)
    seed = r.integer(top["seed"], "seed", 0) if "seed" in top else None

    by_kind: Dict[str, list] = {}
    for kind, label, line, entries in sections:
        if kind not in ("params", "model", "generator", "solve", "simulate"):
            raise r.error(f"unknown section [{kind}]", line)
        if kind != "generator" and label is not None:
            raise r.error(f"section [{kind}] takes no label", line)
        if kind != "generator" and kind in by_kind:
            raise r.error(f"section [{kind}] appears twice", line)
        by_kind.setdefault(kind, []).append((label, line, entries))

    params = {}
    for _, _, entries in by_kind.get("params", []):
        for k, e in entries.items():
            params[k] = r.number(e, k)
    try:
        ctx = MeshContext(h=h, beta=beta, n=n, m=m, params=params)
    except ValueError as err:
        line = by_kind["params"][0][1] if "params" in by_kind else None
        raise r.error(str(err), line) from None

    prob = Problem(
        name=top["name"].value if "name" in top else Path(source).stem,
        ctx=ctx, formulation=formulation, seed=seed, source=source,
    )
    if "model" not in by_kind:
        raise r.error("missing [model] section")
    _, mline, model = by_kind["model"][0]
    if "H" in model:
        r.unknown(model, {"H"}, "[model] of a canonical system")
        prob.H = r.expr(model["H"], ctx)
        try:
            hamiltonian_equations(prob.H, ctx)
        except ValueError as err:
            raise r.error(str(err), model["H"].line) from None
    else:
        allowed = {"F"} | {f"f{i}" for i in range(1, n + 1)} | {f"g{j}" for j in range(1, m + 1)}
        r.unknown(model, allowed, "[model]")
        missing = [f"f{i}" for i in range(1, n + 1) if f"f{i}" not in model]
        if missing:
            raise r.error(f"dynamics required: missing {', '.join(missing)}", mline)
        prob.F = r.expr(model["F"], ctx) if "F" in model else parse("0")
        prob.f = tuple(r.expr(model[f"f{i}"], ctx) for i in range(1, n + 1))
        gs = [f"g{j}" for j in range(1, m + 1)]
        if any(g in model for g in gs):
            if not all(g in model for g in gs):
                raise r.error("control solution needs g1..gm", mline)
            prob.control = tuple(r.expr(model[g], ctx) for g in gs)
        try:
            prob.ocp()
        except ValueError as err:
            raise r.error(str(err), mline) from None
        if formulation == "present" and prob.control is not None:
            raise r.error("a supplied control solution refers to the current-value system", mline)

    gen_keys = {"xi", "B"} | {f"eta{i}" for i in range(1, n + 1)} | {f"zeta{i}" for i in range(1, n + 1)}
    for k, (label, line, entries) in enumerate(by_kind.get("generator", []), start=1):
        r.unknown(entries, gen_keys, "[generator]")
        ctx_g = ctx
        get = lambda key: r.expr(entries[key], ctx_g) if key in entries else parse("0")
        try:
            g = Generator(get("xi"), tuple(get(f"eta{i}") for i in range(1, n + 1)),
                          tuple(get(f"zeta{i}") for i in range(1, n + 1)), get("B"))
        except ValueError as err:
            raise r.error(str(err), line) from None
        prob.generators.append(GeneratorSpec(label or f"g{k}", g, line))

    if "solve" in by_kind:
        _, line, entries = by_kind["solve"][0]
        r.unknown(entries, {"degree"}, "[solve]")
        if "degree" not in entries:
            raise r.error("[solve] needs degree", line)
        d = r.integer(entries["degree"], "degree")
        if d not in (0, 1, 2, 3):
            raise r.error("degree must be 0, 1, 2 or 3", entries["degree"].line)
        prob.degree = d

    if "simulate" in by_kind:
        _, line, entries = by_kind["simulate"][0]
        r.unknown(entries, {"q0", "p0", "N", "tol", "max_iter", "t0"}, "[simulate]")
        for k in ("q0", "p0", "N"):
            if k not in entries:
                raise r.error(f"[simulate] needs {k}", line)
        N = r.integer(entries["N"], "N")
        if N < 1:
            raise r.error("N ≥ 1 required", entries["N"].line)
        sim = SimulationSpec(r.floats(entries["q0"], "q0", n), r.floats(entries["p0"], "p0", n), N)
        if "tol" in entries:
            sim.tol = float(r.number(entries["tol"], "tol"))
            if not sim.tol > 0:
                raise r.error("tol must be positive", entries["tol"].line)
        if "max_iter" in entries:
            sim.max_iter = r.integer(entries["max_iter"], "max_iter", 1)
        if "t0" in entries:
            sim.t0 = float(r.number(entries["t0"], "t0"))
        prob.simulation = sim
    return prob


def load_problem(path) -> Problem:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ProblemError(f"cannot read file: {err.strerror}", source=str(path)) from None
    return parse_problem(text, str(path))
