"""Manifold-valued ROF / Mosolov denoising with a numerical verification harness."""

from .domain import Field, Grid, make_grid, read_field, write_field
from .energy import EnergyBreakdown, EnergyParams, el_residual, energy, riemannian_gradient
from .errors import (
    BudgetExceeded,
    CutLocusReached,
    DomainError,
    GridMismatch,
    MrofError,
    NoConvergence,
    ParseError,
    RangeViolation,
    RequiresPositiveEps,
)
from .geometry import barycenter, geodesic_homotopy, mollify, retract_into_ball
from .manifold import comparison, convexity_radius, parse_manifold, strong_radius
from .oracle import brute_force_small, taut_string_1d
from .solver import SolveConfig, SolveReport, continuation, default_schedule, minimize

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "CutLocusReached",
    "DomainError",
    "EnergyBreakdown",
    "EnergyParams",
    "Field",
    "Grid",
    "GridMismatch",
    "MrofError",
    "NoConvergence",
    "ParseError",
    "RangeViolation",
    "RequiresPositiveEps",
    "SolveConfig",
    "SolveReport",
    "barycenter",
    "brute_force_small",
    "comparison",
    "continuation",
    "convexity_radius",
    "default_schedule",
    "el_residual",
    "energy",
    "geodesic_homotopy",
    "make_grid",
    "minimize",
    "mollify",
    "parse_manifold",
    "read_field",
    "retract_into_ball",
    "riemannian_gradient",
    "strong_radius",
    "taut_string_1d",
    "write_field",
]
