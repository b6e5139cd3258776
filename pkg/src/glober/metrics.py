"""Evaluation metrics: Hausdorff distances between knot sets, normalized sup norm, oracle lambda."""

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError


@dataclass(frozen=True, eq=False)
class EvaluationGrid:
    """
    Reference points with the true function values on them.

    Attributes
    ----------
    points : numpy.ndarray
        Shape ``(N,)`` in 1D or ``(N, d)`` otherwise.
    truth : numpy.ndarray, shape (N,)
    f_min, f_max : float
        Extremes of `truth`.

    """

    points: np.ndarray
    truth: np.ndarray
    f_min: float
    f_max: float

    @classmethod
    def from_function(cls, points, func):
        points = np.asarray(points, dtype=float)
        return cls.from_values(points, func(points))

    @classmethod
    def from_values(cls, points, truth):
        points = np.asarray(points, dtype=float)
        truth = np.asarray(truth, dtype=float).ravel()
        if truth.size != points.shape[0]:
            raise ValidationError(f"{points.shape[0]} grid points but {truth.size} values")
        if truth.size == 0:
            raise ValidationError("evaluation grid is empty")
        for arr in (points, truth):
            arr.setflags(write=False)
        return cls(points, truth, float(truth.min()), float(truth.max()))

    @property
    def size(self):
        return self.truth.size


def _as_set(values, name):
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValidationError(f"{name} is empty; distances to an empty knot set are undefined")
    return arr


def directed_hausdorff(u, v):
    """
    ``sup_{b in v} inf_{a in u} |a - b|``.

    Measures how far the worst element of `v` is from `u`. With ``u`` the
    true knots and ``v`` the estimates this is ``d1``; swapped it is ``d2``.

    Raises
    ------
    ValidationError
        If either set is empty.

    Examples
    --------
    >>> directed_hausdorff([0.0], [0.0, 1.0])
    1.0
    >>> directed_hausdorff([0.0, 1.0], [0.0])
    0.0
    """
    u = np.sort(_as_set(u, "u"))
    v = _as_set(v, "v")
    pos = np.clip(np.searchsorted(u, v), 1, max(u.size - 1, 1))
    left = np.abs(v - u[pos - 1])
    right = np.abs(v - u[np.minimum(pos, u.size - 1)])
    return float(np.minimum(left, right).max())


def hausdorff(u, v):
    """Symmetric Hausdorff distance, the larger of both directed distances."""
    return max(directed_hausdorff(u, v), directed_hausdorff(v, u))


def normalized_sup_norm(model_values, grid):
    """
    ``max |truth - model_values|`` divided by the range of the truth.

    Raises
    ------
    ValidationError
        On a length mismatch or a constant truth.

    """
    values = np.asarray(model_values, dtype=float).ravel()
    if values.size != grid.size:
        raise ValidationError(f"{values.size} predictions for a grid of {grid.size} points")
    span = grid.f_max - grid.f_min
    if not span > 0:
        raise ValidationError("truth is constant on the grid; normalized sup norm undefined")
    return float(np.abs(values - grid.truth).max() / span)


def lambda_opt(models, grid, predict=None):
    """
    Index of the model with the smallest normalized sup norm on `grid`.

    `models` is ordered by decreasing penalty, so ties resolve to the larger
    penalty (smallest index). `predict` maps ``(model, points)`` to values and
    defaults to ``model.predict(points)``.

    Returns
    -------
    index : int
    scores : numpy.ndarray

    """
    if not models:
        raise ValidationError("no models to choose from")
    predict = predict or (lambda m, pts: m.predict(pts))
    scores = np.array([normalized_sup_norm(predict(m, grid.points), grid) for m in models])
    return int(np.argmin(scores)), scores
