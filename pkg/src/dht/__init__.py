"""Discrete Hamiltonian systems of discounted optimal control problems.

Symbolic construction of present- and current-value discrete maximum
principle systems, Lie point symmetries with their first integrals, and
numeric iteration with conservation checks.
"""
from .control import (
    ControlError,
    ControlSolution,
    CurrentValueError,
    OptimalControlProblem,
    current_value_hamiltonian,
    current_value_system,
    eliminate_control,
    present_to_current,
    present_value_hamiltonian,
    pontryagin_system,
)
from .expr import DomainError, Expr, UnboundSymbolError, diff, evaluate, substitute
from .mesh import (
    DifferenceSystem,
    MeshContext,
    WindowError,
    d_minus,
    d_plus,
    hamiltonian_equations,
    leibniz_residual,
    shift_minus,
    shift_plus,
    variational_derivative,
)
from .normalize import equivalent, normalize
from .parse import ParseError, parse
from .printing import to_text
from .symmetry import (
    FirstIntegral,
    Generator,
    SymmetryError,
    apply_operator,
    determining_system,
    first_integral_current,
    first_integral_standard,
    invariance_residual_current,
    invariance_residual_standard,
    onshell_reduce,
    prolong,
    solve_determining,
)
from .trajectory import (
    SolverOptions,
    Trajectory,
    check_energy_identity,
    check_integral,
    simulate,
    step,
)

__all__ = [name for name in dir() if not name.startswith("_")]
