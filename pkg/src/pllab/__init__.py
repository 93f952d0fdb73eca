"""Numerical checks for gradient flows of Polyak-Lojasiewicz functions."""

from .certify import PLReport, check_pl_claim, estimate_pl_constant, normalize, quadratic_growth_check
from .distance import (
    ProjectionResult, closed_set_from_json, dist_sq_field, flow_formula_check, project,
    ray_invariance_check, regularity_probe, separation_convexity_test,
)
from .errors import PLLabError
from .expr import compile_ast, compile_expr, parse, to_source
from .fields import (
    Ball, Box, ScalarField, Sublevel, catalogue, field_from_json, list_catalogue, region_from_json,
    sample_region, validate_derivatives,
)
from .flow import (
    FlowConfig, Trajectory, basin_witness, decay_check, flow_limit, integrate_flow, length_check,
    retraction_check,
)
from .kernels import BACKEND
from .minset import (
    CriticalSetModel, build_model, constant_rank_check, hessian_gap_check, kernel_chart_probe,
    locate_minimizers,
)
from .parallel import set_jobs

__version__ = "0.1.0"
