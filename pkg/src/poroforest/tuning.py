"""Hyperparameter tuning: k-fold cross-validation, a Gaussian-process
surrogate with expected-improvement acquisition, and the budgeted Bayesian
search loop that ties them together.

The search works in the unit hypercube. Boxes are described by ParamSpec
(optionally integer-valued or log-scaled); integer dimensions are rounded
*before* evaluation and the surrogate only ever observes realized (rounded)
points, so the model never credits resolution the objective cannot deliver.
Failed objective evaluations are recorded as +inf in the trace and excluded
from the surrogate. Given the same seed, a longer budget replays the shorter
run's evaluations exactly and then continues (traces nest).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr

from .dataset import Dataset
from .ensemble import (
    BoostParams,
    ForestParams,
    fit_lsboost,
    fit_random_forest,
    oob_mse,
)
from .errors import DataError, NumericError, PoroforestError

__all__ = [
    "ParamSpec",
    "HyperparamSpace",
    "FOREST_SPACE",
    "BOOST_SPACE",
    "GPSurrogate",
    "TraceEntry",
    "TuneResult",
    "kfold_indices",
    "kfold_cv_loss",
    "objective_rf",
    "objective_gbt",
    "fit_gp",
    "gp_posterior",
    "expected_improvement",
    "bayes_optimize",
    "write_trace_jsonl",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Surrogate hyperparameter grid: multipliers applied to the base length
# scale (0.3 in unit-cube coordinates) and base signal variance (the
# variance of the observed objective values), searched by log marginal
# likelihood. First combo in scan order wins ties.
_LML_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0)
_BASE_LENGTH_SCALE = 0.3
_BASE_JITTER = 1e-6
_MAX_JITTER = 1.0


# --------------------------------------------------------------------------
# search boxes


@dataclass(frozen=True)
class ParamSpec:
    """One box dimension. integer=True rounds realized values to the nearest
    whole number; log=True sweeps the dimension geometrically (requires
    low > 0)."""

    name: str
    low: float
    high: float
    integer: bool = False
    log: bool = False

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(
                f"{self.name}: low must be < high, got [{self.low}, {self.high}]"
            )
        if self.log and self.low <= 0:
            raise ValueError(f"{self.name}: log scale requires low > 0")
        if self.integer:
            if self.low != int(self.low) or self.high != int(self.high):
                raise ValueError(
                    f"{self.name}: integer dimension needs integer bounds"
                )
            if self.log:
                raise ValueError(f"{self.name}: integer + log is not supported")

    def realize(self, u: float):
        """Map a unit coordinate to a value in the box."""
        u = min(1.0, max(0.0, float(u)))
        if self.log:
            value = math.exp(
                math.log(self.low) + u * (math.log(self.high) - math.log(self.low))
            )
        else:
            value = self.low + u * (self.high - self.low)
        value = min(self.high, max(self.low, value))
        if self.integer:
            return int(math.floor(value + 0.5))
        return float(value)

    def normalize(self, value) -> float:
        """Map a box value back to its unit coordinate."""
        if self.log:
            u = (math.log(value) - math.log(self.low)) / (
                math.log(self.high) - math.log(self.low)
            )
        else:
            u = (value - self.low) / (self.high - self.low)
        return min(1.0, max(0.0, float(u)))

    def check(self, value) -> None:
        if not self.low <= value <= self.high:
            raise ValueError(
                f"{self.name}={value!r} outside [{self.low}, {self.high}]"
            )
        if self.integer and value != int(value):
            raise ValueError(f"{self.name}={value!r} must be an integer")


class HyperparamSpace:
    """An ordered collection of ParamSpecs defining the search box."""

    def __init__(self, specs):
        specs = tuple(specs)
        if not specs:
            raise ValueError("a search space needs at least one dimension")
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names in {names}")
        self.specs = specs
        self.names = tuple(names)

    @property
    def dim(self) -> int:
        return len(self.specs)

    def from_unit(self, u) -> dict:
        """Unit-cube coordinates -> realized point (integers rounded)."""
        u = np.asarray(u, dtype=np.float64).ravel()
        if len(u) != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {len(u)}")
        return {spec.name: spec.realize(coord) for spec, coord in zip(self.specs, u)}

    def to_unit(self, point: dict) -> np.ndarray:
        """Realized point -> unit-cube coordinates."""
        self.validate(point)
        return np.array(
            [spec.normalize(point[spec.name]) for spec in self.specs]
        )

    def validate(self, point: dict) -> None:
        """Raise ValueError unless the point sits inside the box with exactly
        the expected keys."""
        missing = [name for name in self.names if name not in point]
        if missing:
            raise ValueError(f"point is missing dimensions {missing}")
        extra = [key for key in point if key not in self.names]
        if extra:
            raise ValueError(f"point has unknown dimensions {extra}")
        for spec in self.specs:
            spec.check(point[spec.name])


# Forest tuning varies leaf size and the per-split feature draw; tree count
# and depth stay at their fitting defaults.
FOREST_SPACE = HyperparamSpace(
    (
        ParamSpec("min_leaf", 1, 20, integer=True),
        ParamSpec("features_per_split", 1, 8, integer=True),
    )
)

# Boosting tuning varies ensemble size, shrinkage (log scale), depth budget,
# and leaf size.
BOOST_SPACE = HyperparamSpace(
    (
        ParamSpec("n_trees", 10, 500, integer=True),
        ParamSpec("learning_rate", 0.001, 1.0, log=True),
        ParamSpec("max_splits", 1, 90, integer=True),
        ParamSpec("min_leaf", 1, 20, integer=True),
    )
)


# --------------------------------------------------------------------------
# cross-validation


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Partition range(n) into k disjoint, exhaustive folds whose sizes
    differ by at most one: shuffle once, then deal round-robin."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise DataError(f"cannot make {k} folds from {n} records")
    perm = np.random.default_rng(seed).permutation(n)
    return [perm[f::k] for f in range(k)]


def kfold_cv_loss(train: Dataset, params: BoostParams, folds) -> float:
    """Mean over folds of the hold-out MSE of a boosted model fitted on the
    remaining records."""
    n = len(train)
    losses = np.empty(len(folds))
    for f, holdout in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[holdout] = False
        model = fit_lsboost(train.subset(np.nonzero(mask)[0]), params)
        X_h, y_h = train.subset(holdout).design_matrix()
        diff = y_h - model.predict_batch(X_h)
        losses[f] = np.mean(diff * diff)
    return float(np.mean(losses))


def objective_rf(train: Dataset, seed: int, n_trees: int = 300):
    """Tuning objective for forests: OOB MSE of an n_trees forest fitted
    with the candidate's min_leaf and features_per_split."""

    def objective(point: dict) -> float:
        params = ForestParams(
            n_trees=n_trees,
            min_leaf=point["min_leaf"],
            features_per_split=point["features_per_split"],
        )
        model = fit_random_forest(train, params, seed)
        return oob_mse(model, train)

    return objective


def objective_gbt(train: Dataset, k: int = 10, seed: int = 0):
    """Tuning objective for boosting: log1p of the k-fold CV loss. The fold
    assignment is drawn once per call, so every candidate sees the same
    partition."""
    folds = kfold_indices(len(train), k, seed)

    def objective(point: dict) -> float:
        params = BoostParams(
            n_trees=point["n_trees"],
            learning_rate=point["learning_rate"],
            max_splits=point["max_splits"],
            min_leaf=point["min_leaf"],
        )
        return float(np.log1p(kfold_cv_loss(train, params, folds)))

    return objective


# --------------------------------------------------------------------------
# Gaussian-process surrogate


@dataclass(frozen=True)
class GPSurrogate:
    """A fitted zero-residual-mean GP with a squared-exponential kernel."""

    X: np.ndarray  # (n, d) observed inputs, unit cube
    prior_mean: float
    length_scales: np.ndarray  # (d,)
    signal_var: float
    jitter: float
    chol: np.ndarray  # lower-triangular factor of K + jitter*I
    alpha: np.ndarray  # (K + jitter*I)^{-1} (y - prior_mean)
    log_marginal: float


def _sq_dists(A: np.ndarray, B: np.ndarray, length_scales: np.ndarray) -> np.ndarray:
    a = A / length_scales
    b = B / length_scales
    d2 = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.maximum(d2, 0.0)


def _kernel(A, B, length_scales, signal_var) -> np.ndarray:
    return signal_var * np.exp(-0.5 * _sq_dists(A, B, length_scales))


def _chol_with_jitter(K: np.ndarray):
    """Cholesky of K + jitter*I, escalating the jitter tenfold from 1e-6
    until it succeeds; (None, None) if it never does."""
    n = len(K)
    jitter = _BASE_JITTER
    eye = np.eye(n)
    while jitter <= _MAX_JITTER * (1 + 1e-12):
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    return None, None


def fit_gp(X, y, *, length_scale: float | None = None,
           signal_var: float | None = None) -> GPSurrogate:
    """Fit the surrogate to observations in the unit cube.

    With explicit length_scale/signal_var the kernel is used as given;
    otherwise both are chosen from a small multiplier grid around defaults
    (length scale 0.3, signal variance var(y)) by log marginal likelihood.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    n, d = X.shape
    if n != len(y):
        raise ValueError(f"X has {n} rows but y has {len(y)} values")
    if n == 0:
        raise ValueError("cannot fit a surrogate to zero observations")
    prior_mean = float(np.mean(y))
    residual = y - prior_mean

    if length_scale is not None:
        ls_grid = [float(length_scale)]
    else:
        ls_grid = [_BASE_LENGTH_SCALE * m for m in _LML_MULTIPLIERS]
    if signal_var is not None:
        sv_grid = [float(signal_var)]
    else:
        base_sv = float(np.var(y))
        sv_grid = [base_sv * m for m in _LML_MULTIPLIERS]

    best = None
    for ls in ls_grid:
        scales = np.full(d, ls)
        for sv in sv_grid:
            K = _kernel(X, X, scales, sv)
            L, jitter = _chol_with_jitter(K)
            if L is None:
                continue
            half = solve_triangular(L, residual, lower=True)
            alpha = solve_triangular(L.T, half, lower=False)
            lml = (
                -0.5 * float(residual @ alpha)
                - float(np.sum(np.log(np.diag(L))))
                - 0.5 * n * math.log(2.0 * math.pi)
            )
            if best is None or lml > best.log_marginal:
                best = GPSurrogate(
                    X=X,
                    prior_mean=prior_mean,
                    length_scales=scales,
                    signal_var=sv,
                    jitter=jitter,
                    chol=L,
                    alpha=alpha,
                    log_marginal=lml,
                )
    if best is None:
        raise NumericError(
            "surrogate covariance stayed non-positive-definite even with "
            f"jitter escalated to {_MAX_JITTER}"
        )
    return best


def gp_posterior(gp: GPSurrogate, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation of the latent function at the
    query points."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
    Kq = _kernel(Xq, gp.X, gp.length_scales, gp.signal_var)
    mu = gp.prior_mean + Kq @ gp.alpha
    v = solve_triangular(gp.chol, Kq.T, lower=True)
    var = gp.signal_var - np.sum(v * v, axis=0)
    sigma = np.sqrt(np.maximum(var, 0.0))
    return mu, sigma


def expected_improvement(mu, sigma, f_min: float) -> np.ndarray:
    """EI for minimization: (f_min - mu) * Phi(z) + sigma * phi(z) with
    z = (f_min - mu) / sigma; where sigma == 0 it degenerates to
    max(f_min - mu, 0)."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    improvement = f_min - mu
    ei = np.maximum(improvement, 0.0)
    positive = sigma > 0
    if np.any(positive):
        imp = improvement[positive]
        sig = sigma[positive]
        z = imp / sig
        ei[positive] = imp * ndtr(z) + sig * np.exp(-0.5 * z * z) / _SQRT_2PI
    return ei


# --------------------------------------------------------------------------
# the search loop


@dataclass(frozen=True)
class TraceEntry:
    """One objective evaluation. objective is +inf when the evaluation
    failed (infeasible point or numeric breakdown)."""

    iteration: int
    point: dict
    objective: float
    elapsed_ms: float


@dataclass(frozen=True)
class TuneResult:
    best_point: dict
    best_value: float
    trace: tuple[TraceEntry, ...]
    budget_used: int


def _latin_hypercube(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """n stratified points in [0,1]^d: per dimension, one sample from each
    of n equal strata, in shuffled order."""
    u = np.empty((n, d))
    for j in range(d):
        perm = rng.permutation(n)
        u[:, j] = (perm + rng.random(n)) / n
    return u


def _point_key(space: HyperparamSpace, point: dict) -> tuple:
    return tuple(point[name] for name in space.names)


def _propose(rng, space, X_obs, y_obs, seen, n_candidates, n_local) -> np.ndarray:
    """Pick the next unit-cube point: maximize EI over a pool of uniform
    candidates plus perturbations of the incumbent, skipping points whose
    realized version was already evaluated. Falls back to the incumbent
    itself if every candidate is a duplicate, and to plain random search
    while fewer than two finite observations exist."""
    d = space.dim
    finite = [i for i, v in enumerate(y_obs) if math.isfinite(v)]
    best_i = min(finite, key=lambda i: (y_obs[i], i)) if finite else None
    center = X_obs[best_i] if best_i is not None else np.full(d, 0.5)

    candidates = rng.random((n_candidates, d))
    local = np.clip(center + rng.normal(0.0, 0.05, size=(n_local, d)), 0.0, 1.0)
    pool = np.vstack([candidates, local])

    if len(finite) >= 2:
        gp = fit_gp(
            np.asarray([X_obs[i] for i in finite]),
            np.asarray([y_obs[i] for i in finite]),
        )
        f_min = min(y_obs[i] for i in finite)
        mu, sigma = gp_posterior(gp, pool)
        ei = expected_improvement(mu, sigma, f_min)
        order = np.argsort(-ei, kind="stable")
    else:
        order = np.arange(len(pool))

    for i in order:
        if _point_key(space, space.from_unit(pool[i])) not in seen:
            return pool[i]
    # Every candidate realizes to an already-evaluated point (tiny discrete
    # box): re-evaluate the incumbent rather than stall.
    if best_i is not None:
        return np.asarray(X_obs[best_i])
    return pool[order[0]]


def bayes_optimize(
    objective,
    space: HyperparamSpace,
    budget: int,
    seed: int,
    *,
    n_init: int = 5,
    n_candidates: int = 2000,
    n_local: int = 20,
) -> TuneResult:
    """Minimize `objective` over `space` in at most `budget` evaluations.

    Starts from a Latin-hypercube design (n_init points, generated up front
    so a larger budget replays a smaller one's evaluations), then alternates
    surrogate fitting and EI maximization. objective receives a realized
    point dict and returns a float; exceptions and non-finite returns count
    as failed evaluations.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if n_init < 1:
        raise ValueError(f"n_init must be >= 1, got {n_init}")
    rng = np.random.default_rng(seed)
    init_u = _latin_hypercube(rng, n_init, space.dim)

    X_obs: list[np.ndarray] = []  # realized unit coordinates per evaluation
    y_obs: list[float] = []
    points: list[dict] = []
    seen: set[tuple] = set()
    trace: list[TraceEntry] = []

    for i in range(budget):
        if i < n_init:
            u = init_u[i]
        else:
            u = _propose(rng, space, X_obs, y_obs, seen, n_candidates, n_local)
        point = space.from_unit(u)
        realized_u = space.to_unit(point)

        started = time.perf_counter()
        try:
            value = float(objective(point))
            if not math.isfinite(value):
                value = math.inf
        except (PoroforestError, ValueError, ArithmeticError):
            value = math.inf
        elapsed_ms = (time.perf_counter() - started) * 1000.0

        trace.append(TraceEntry(i, point, value, elapsed_ms))
        X_obs.append(realized_u)
        y_obs.append(value)
        points.append(point)
        seen.add(_point_key(space, point))

    finite = [i for i, v in enumerate(y_obs) if math.isfinite(v)]
    if not finite:
        raise NumericError("every objective evaluation failed")
    best_i = min(finite, key=lambda i: (y_obs[i], i))
    return TuneResult(
        best_point=points[best_i],
        best_value=y_obs[best_i],
        trace=tuple(trace),
        budget_used=len(trace),
    )


def write_trace_jsonl(trace, path) -> None:
    """One JSON object per evaluation: iteration, point, objective (null for
    failed evaluations), elapsed_ms."""
    with open(path, "w", encoding="utf-8") as handle:
        for entry in trace:
            objective = entry.objective if math.isfinite(entry.objective) else None
            handle.write(
                json.dumps(
                    {
                        "iteration": entry.iteration,
                        "point": entry.point,
                        "objective": objective,
                        "elapsed_ms": entry.elapsed_ms,
                    }
                )
            )
            handle.write("\n")
