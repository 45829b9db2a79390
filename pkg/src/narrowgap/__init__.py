"""Narrow-gap elliptic solver and gradient-bound verification suite.

Solves divergence-form elliptic systems between two nearly touching
boundary graphs, measures the 1/eps gradient blow-up between mismatched
Dirichlet traces (and its absence for matched traces), and checks the
interior energy and pointwise estimates that control the correction to the
leading-order interpolant profile.
"""

from .analysis import (AnalysisError, BoundReport, GradientField, RateFit,
                       SweepProblem, analyze_solution, centerline_lower_constant,
                       correction_field, energy, fit_rate, gradient,
                       local_energy_profile, pointwise_w_check,
                       sup_bound_constant, superposition_check, sweep_and_fit,
                       sweep_grid, sweep_member)
from .auxiliary import (AuxiliaryEvaluator, BoundaryData, BoundShapeReport,
                        check_derivative_bounds, ftilde, ubar, utilde)
from .geometry import (GapProfile, GeometryError, LocalWindow, NarrowRegion,
                       ValidationReport, eval_profile, gap_width,
                       gap_width_many, validate_profile, window)
from .mesh_solver import (DIRECT_UNKNOWN_LIMIT, LinearSystem, MappedGrid,
                          SolutionField, SolverError, assemble,
                          boundary_values, build_grid, quadrature_weights,
                          solve_component, solve_dirichlet, solve_system)
from .operators import (EllipticOperator, OperatorError, apply_operator_poly,
                        estimate_bounds, estimate_ellipticity, make_builtin,
                        rescale_coefficients)
from .polynomial import (ExpressionError, PolynomialField, RationalField,
                         parse_expression)
from .verification import (ConvergenceStudy, ManufacturedProblem,
                           convergence_study, fd_apply_operator,
                           flat_gap_exact, manufactured_problem)

__version__ = "0.1.0"

__all__ = [
    "AnalysisError", "AuxiliaryEvaluator", "BoundReport", "BoundShapeReport",
    "BoundaryData", "ConvergenceStudy", "DIRECT_UNKNOWN_LIMIT",
    "EllipticOperator", "ExpressionError", "GapProfile", "GeometryError",
    "GradientField", "LinearSystem", "LocalWindow", "ManufacturedProblem",
    "MappedGrid", "NarrowRegion", "OperatorError", "PolynomialField",
    "RateFit", "RationalField", "SolutionField", "SolverError",
    "SweepProblem", "ValidationReport", "analyze_solution", "apply_operator_poly",
    "assemble", "build_grid", "centerline_lower_constant",
    "check_derivative_bounds", "convergence_study", "correction_field",
    "boundary_values", "energy", "estimate_bounds", "estimate_ellipticity",
    "eval_profile", "fd_apply_operator", "fit_rate", "flat_gap_exact",
    "ftilde", "gap_width", "gap_width_many", "gradient",
    "local_energy_profile", "make_builtin", "manufactured_problem",
    "parse_expression", "pointwise_w_check", "quadrature_weights",
    "rescale_coefficients", "solve_component", "solve_dirichlet",
    "solve_system", "sup_bound_constant", "superposition_check",
    "sweep_and_fit", "sweep_grid", "sweep_member", "ubar", "utilde",
    "validate_profile", "window",
]
