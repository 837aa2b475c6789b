"""Partial dependence: the model's average prediction as one or two
predictors sweep a grid while every other predictor keeps its observed value.

For grid point g the curve value is mean_i f(x_i with feature j set to g)
over the supplied records; a surface does the same over a grid pair. Numeric
grids default to 50 evenly spaced points spanning the observed range;
categorical grids are the observed category codes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import CATEGORICAL_FLAGS, Dataset, FEATURE_NAMES
from .errors import DataError

__all__ = [
    "PDPCurve",
    "PDPSurface",
    "partial_dependence_1d",
    "partial_dependence_2d",
]

DEFAULT_GRID_SIZE = 50


@dataclass(frozen=True)
class PDPCurve:
    feature: str
    grid: np.ndarray
    values: np.ndarray

    def as_dict(self) -> dict:
        return {
            "feature": self.feature,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
        }


@dataclass(frozen=True)
class PDPSurface:
    feature_x: str
    feature_y: str
    grid_x: np.ndarray
    grid_y: np.ndarray
    values: np.ndarray  # shape (len(grid_x), len(grid_y))

    def as_dict(self) -> dict:
        return {
            "feature_x": self.feature_x,
            "feature_y": self.feature_y,
            "grid_x": self.grid_x.tolist(),
            "grid_y": self.grid_y.tolist(),
            "values": self.values.tolist(),
        }


def _design_of(data) -> np.ndarray:
    if isinstance(data, Dataset):
        X, _ = data.design_matrix()
    else:
        X = np.ascontiguousarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("expected a dataset or a 2-D feature matrix")
    if len(X) == 0:
        raise DataError("partial dependence needs at least one record")
    return X


def _resolve_feature(feature, n_features: int) -> tuple[int, str]:
    """Accept a feature by canonical name or by column index."""
    if isinstance(feature, str):
        try:
            idx = FEATURE_NAMES.index(feature)
        except ValueError:
            raise DataError(
                f"unknown feature {feature!r}; expected one of {FEATURE_NAMES}"
            ) from None
        return idx, feature
    idx = int(feature)
    if not 0 <= idx < n_features:
        raise DataError(f"feature index {idx} out of range [0, {n_features})")
    name = FEATURE_NAMES[idx] if idx < len(FEATURE_NAMES) else f"x{idx}"
    return idx, name


def _default_grid(X: np.ndarray, idx: int, grid_size: int) -> np.ndarray:
    col = X[:, idx]
    categorical = idx < len(CATEGORICAL_FLAGS) and CATEGORICAL_FLAGS[idx]
    if categorical:
        return np.unique(col)
    lo, hi = float(col.min()), float(col.max())
    if lo == hi:
        return np.array([lo])
    return np.linspace(lo, hi, grid_size)


def _grid_array(grid) -> np.ndarray:
    arr = np.asarray(grid, dtype=np.float64).ravel()
    if len(arr) == 0:
        raise DataError("grid must contain at least one point")
    return arr


def partial_dependence_1d(
    model, data, feature, *, grid=None, grid_size: int = DEFAULT_GRID_SIZE
) -> PDPCurve:
    """Average prediction as `feature` sweeps a grid, other features held at
    their observed values. `data` is the reference sample (a Dataset or
    feature matrix)."""
    X = _design_of(data)
    idx, name = _resolve_feature(feature, X.shape[1])
    if grid is None:
        if grid_size < 1:
            raise DataError(f"grid_size must be >= 1, got {grid_size}")
        grid_arr = _default_grid(X, idx, grid_size)
    else:
        grid_arr = _grid_array(grid)
    values = np.empty(len(grid_arr))
    work = X.copy()
    for g, point in enumerate(grid_arr):
        work[:, idx] = point
        values[g] = float(np.mean(model.predict_batch(work)))
    return PDPCurve(feature=name, grid=grid_arr, values=values)


def partial_dependence_2d(
    model,
    data,
    feature_x,
    feature_y,
    *,
    grid_x=None,
    grid_y=None,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> PDPSurface:
    """Average prediction over a grid pair; values[i, j] corresponds to
    (grid_x[i], grid_y[j])."""
    X = _design_of(data)
    ix, name_x = _resolve_feature(feature_x, X.shape[1])
    iy, name_y = _resolve_feature(feature_y, X.shape[1])
    if ix == iy:
        raise DataError("the two features of a surface must differ")
    if grid_size < 1:
        raise DataError(f"grid_size must be >= 1, got {grid_size}")
    gx = _default_grid(X, ix, grid_size) if grid_x is None else _grid_array(grid_x)
    gy = _default_grid(X, iy, grid_size) if grid_y is None else _grid_array(grid_y)
    values = np.empty((len(gx), len(gy)))
    work = X.copy()
    for a, px in enumerate(gx):
        work[:, ix] = px
        for b, py in enumerate(gy):
            work[:, iy] = py
            values[a, b] = float(np.mean(model.predict_batch(work)))
    return PDPSurface(
        feature_x=name_x, feature_y=name_y, grid_x=gx, grid_y=gy, values=values
    )
