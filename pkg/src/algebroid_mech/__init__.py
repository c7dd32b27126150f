"""Numerical Lagrangian mechanics on Lie algebroids given in local coordinates."""

__version__ = "0.1.0"

from .algebroid import LieAlgebroid, builtin, check_structure_equations
from .dynamics import LagrangianSystem, el_residual, energy, integrate, momentum
from .expr import Expression, eval_jet2, evaluate, parse
from .morphism import AlgebroidMorphism, euler_to_so3, push_path, reduction_check
from .paths import EPath, PathSection, ProlongationElement, admissibility_residual, involution, xi
from .variation import action, dS_analytic, dS_numeric, deform, homotopy_sheet, stationarity_report

__all__ = [
    "AlgebroidMorphism",
    "EPath",
    "Expression",
    "LagrangianSystem",
    "LieAlgebroid",
    "PathSection",
    "ProlongationElement",
    "action",
    "admissibility_residual",
    "builtin",
    "check_structure_equations",
    "dS_analytic",
    "dS_numeric",
    "deform",
    "el_residual",
    "energy",
    "euler_to_so3",
    "eval_jet2",
    "evaluate",
    "homotopy_sheet",
    "integrate",
    "involution",
    "momentum",
    "parse",
    "push_path",
    "reduction_check",
    "stationarity_report",
    "xi",
]
