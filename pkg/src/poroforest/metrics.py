"""Prediction-quality statistics: RMSE, MAPE (in percent), R².

R² uses the evaluation set's own mean of the actual values. MAPE is
undefined when any actual value is zero, and R² when the actuals have zero
variance (or fewer than two points); ``evaluate`` raises in those cases
unless ``partial=True``, which reports the computable subset and leaves the
rest as None.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = ["EvalReport", "evaluate", "rmse", "mape", "r_squared"]


@dataclass(frozen=True)
class EvalReport:
    """RMSE / MAPE / R² over m paired observations; a statistic is None only
    in partial mode when its precondition fails."""

    rmse: float | None
    mape: float | None
    r2: float | None
    m: int

    def as_dict(self) -> dict:
        return {"rmse": self.rmse, "mape": self.mape, "r2": self.r2, "m": self.m}


def _paired(actual, predicted):
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if a.ndim != 1 or p.ndim != 1:
        raise ValueError("actual and predicted must be 1-D")
    if len(a) != len(p):
        raise ValueError(f"length mismatch: {len(a)} actual vs {len(p)} predicted")
    if len(a) == 0:
        raise ValueError("cannot evaluate zero observations")
    return a, p


def rmse(actual, predicted) -> float:
    """Root mean squared prediction error."""
    a, p = _paired(actual, predicted)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def mape(actual, predicted) -> float:
    """Mean absolute percentage error, reported in percent (20.0 = 20%)."""
    a, p = _paired(actual, predicted)
    if np.any(a == 0):
        raise DataError("MAPE undefined: an actual value is zero")
    return float(np.mean(np.abs((a - p) / a)) * 100.0)


def r_squared(actual, predicted) -> float:
    """Proportion of response variability explained; can be negative."""
    a, p = _paired(actual, predicted)
    if len(a) < 2:
        raise DataError("R^2 undefined: need at least two observations")
    mean = a.mean()
    ss_tot = float(np.sum((a - mean) ** 2))
    if ss_tot == 0:
        raise DataError("R^2 undefined: actual values have zero variance")
    ss_res = float(np.sum((a - p) ** 2))
    return 1.0 - ss_res / ss_tot


def evaluate(actual, predicted, *, partial: bool = False) -> EvalReport:
    """Full evaluation report.

    With partial=True, statistics whose preconditions fail (zero actuals for
    MAPE, zero variance or m < 2 for R²) come back as None instead of
    raising.
    """
    a, p = _paired(actual, predicted)
    report_rmse = rmse(a, p)
    try:
        report_mape = mape(a, p)
    except DataError:
        if not partial:
            raise
        report_mape = None
    try:
        report_r2 = r_squared(a, p)
    except DataError:
        if not partial:
            raise
        report_r2 = None
    return EvalReport(rmse=report_rmse, mape=report_mape, r2=report_r2, m=len(a))
