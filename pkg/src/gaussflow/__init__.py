"""Numerical solver for the Gauss image problem.

Given positive densities f (on normal directions) and g (on radial
directions), the solver finds a convex body whose radial Gauss image
pushes g forward onto f, by integrating the normalized Gauss curvature
flow of the support function until the Monge-Ampere-type residual

    g(u) |grad h + h x|^{-n} h det(grad^2 h + h I) - f

vanishes.  Works on S^1 (dim 2) and S^2 (dim 3).
"""

__version__ = "0.1.0"

from .backend import available_backends, select_backend
from .config import ConfigError, SolverConfig, build_problem, parse_config
from .densities import (AleksandrovReport, AleksandrovSettings, DensityPair,
                        check_aleksandrov, functional_J, log_volume,
                        make_density_pair, pushforward_check)
from .fields import FieldFormatError, read_field, write_field
from .flow import (FlowParams, FlowState, FlowTrace, diagnostics, flow_rhs,
                   residual, run, run_flow, step, weight_G)
from .geometry import (BodyGeometry, ConvexityViolation, NonPositiveSupport,
                       OriginCollision, convexity_check, derive_geometry,
                       polar_support, radial_from_support)
from .grid import (GridError, ScalarField, SphereGrid, SphericalConvexSet,
                   build_grid, gradient, gradient_components, hessian,
                   hessian_components, integrate, membership, polar_set)
from .mms import (ManufacturedProblem, manufacture_f, manufacture_problem,
                  matched_ball, preset_support, recovery_error,
                  verify_change_of_variables)

__all__ = [
    "__version__",
    "available_backends", "select_backend",
    "ConfigError", "SolverConfig", "build_problem", "parse_config",
    "AleksandrovReport", "AleksandrovSettings", "DensityPair",
    "check_aleksandrov", "functional_J", "log_volume", "make_density_pair",
    "pushforward_check",
    "FieldFormatError", "read_field", "write_field",
    "FlowParams", "FlowState", "FlowTrace", "diagnostics", "flow_rhs",
    "residual", "run", "run_flow", "step", "weight_G",
    "BodyGeometry", "ConvexityViolation", "NonPositiveSupport",
    "OriginCollision", "convexity_check", "derive_geometry", "polar_support",
    "radial_from_support",
    "GridError", "ScalarField", "SphereGrid", "SphericalConvexSet",
    "build_grid", "gradient", "gradient_components", "hessian",
    "hessian_components", "integrate", "membership", "polar_set",
    "ManufacturedProblem", "manufacture_f", "manufacture_problem",
    "matched_ball", "preset_support", "recovery_error",
    "verify_change_of_variables",
]
