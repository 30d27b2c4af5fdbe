"""Numerical toolkit for Abreu's equation on weighted planar polygons.

Evaluates the fourth-order operator and curvature of Hessian metrics,
solves the equation by Newton continuation along deformation paths, and
machine-checks the identities, inequalities and invariants of the theory
at desk scale.
"""

from .polygon import (
    BalanceReport,
    ContinuityPath,
    Edge,
    InvalidPolygonError,
    ScalarField,
    WeightedPolygon,
    balance_report,
    canonical_weights,
    continuity_path,
    corner_cut,
    fit_weights,
    mu_invariant,
    mu_invariant_sampled,
    random_convex_polygon,
    rebalance,
    rescale_polygon,
    unique_affine_A,
)
from .grid import Correction, Grid, read_grid_csv, write_grid_csv
from .potential import (
    AnalyticCorrection,
    ConvexityError,
    OutOfRangeError,
    PotentialField,
    TensorSamples,
    abreu_value,
    curvature_norm,
    free_quadratic_potential,
    guillemin_potential,
    half_plane_model,
    legendre_transform,
    quarter_plane_model,
    rescale_potential,
    tensor_samples,
)

__version__ = "0.1.0"
