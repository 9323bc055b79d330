"""Optimal transport lower bounds for nodal-line length, measured numerically."""

from .domain import Domain, Grid, ScalarField, integrate, lp_norm, make_grid
from .harness import (
    InequalityReport,
    exponent_scan,
    heat_upper_bound,
    optimal_time,
    proof_chain_check,
    theorem1_report,
    theorem2_report,
)
from .nodal import components, nodal_length, proof_sum, signed_parts
from .spectral import (
    assemble_operator,
    explicit_basis,
    heat_flow,
    lowest_eigenpairs,
    project_high,
    random_high_frequency,
)
from .transport import DiscreteMeasure, field_to_measure, solve_exact, solve_regularized, w1_dual_bound

__version__ = "0.1.0"

__all__ = [
    "DiscreteMeasure",
    "Domain",
    "Grid",
    "InequalityReport",
    "ScalarField",
    "assemble_operator",
    "components",
    "explicit_basis",
    "exponent_scan",
    "field_to_measure",
    "heat_flow",
    "heat_upper_bound",
    "integrate",
    "lowest_eigenpairs",
    "lp_norm",
    "make_grid",
    "nodal_length",
    "optimal_time",
    "proof_chain_check",
    "proof_sum",
    "project_high",
    "random_high_frequency",
    "signed_parts",
    "solve_exact",
    "solve_regularized",
    "theorem1_report",
    "theorem2_report",
    "w1_dual_bound",
]
