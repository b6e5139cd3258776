"""Adaptive knot selection for spline regression via trend filtering.

One-dimensional fits pick knots from a trend-filtering path and choose the
penalty by EBIC. Grid data in two dimensions is handled slice by slice, and
scattered data in any dimension through clustering.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .clusterext import ScatteredDataset, fit_nd, select_nd
from .exceptions import (
    ConvergenceError,
    DomainError,
    KnotBoundsError,
    KnotOrderError,
    OverparameterizedError,
    RankDeficiencyError,
    SplineOrderError,
    ValidationError,
)
from .genlasso import solve, solve_path
from .knotsel1d import PathConfig, fit_1d, fit_spline, select_1d
from .modelio import load_model, save_model
from .splinekit import build_augmented_knots, design_matrix
from .tensorfit import GridDataset, fit_2d, predict_2d, select_2d

__all__ = [
    "BACKEND",
    "ConvergenceError",
    "DomainError",
    "GridDataset",
    "KnotBoundsError",
    "KnotOrderError",
    "OverparameterizedError",
    "PathConfig",
    "RankDeficiencyError",
    "ScatteredDataset",
    "SplineOrderError",
    "ValidationError",
    "build_augmented_knots",
    "design_matrix",
    "fit_1d",
    "fit_2d",
    "fit_nd",
    "fit_spline",
    "load_model",
    "predict_2d",
    "save_model",
    "select_1d",
    "select_2d",
    "select_nd",
    "solve",
    "solve_path",
]
