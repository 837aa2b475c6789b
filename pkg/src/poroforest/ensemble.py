"""Tree ensembles: bagging/random forests and least-squares gradient boosting,
with out-of-bag error estimation, OOB permutation importance, per-iteration
error traces, and JSON model persistence.

Forest prediction is the unweighted mean of the tree predictions; with
features_per_split equal to the full feature count the forest path IS
bagging (no per-node subset is drawn, so the two are bit-identical).
Boosting fits each tree to the current residuals and accumulates
learning_rate * tree(x) from a zero initial function.

Reproducibility: every tree gets its own generator derived from the master
seed and the tree index (``tree_rng``), so models are independent of fitting
order and safe to parallelize without changing results.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .cart import RegressionTree, TreeParams, fit_tree
from .dataset import CATEGORICAL_FLAGS, Dataset, FEATURE_NAMES, N_FEATURES
from .errors import DataError

__all__ = [
    "ForestParams",
    "BoostParams",
    "ForestModel",
    "BoostedModel",
    "ErrorTrace",
    "ImportanceReport",
    "tree_rng",
    "bootstrap_indices",
    "fit_random_forest",
    "predict_forest",
    "oob_predictions",
    "oob_mse",
    "fit_lsboost",
    "predict_boosted",
    "permutation_importance",
    "forest_error_trace",
    "boost_error_trace",
    "save_model",
    "load_model",
]

MODEL_FORMAT_VERSION = 1

_CATEGORICAL_INDICES = tuple(
    j for j, flag in enumerate(CATEGORICAL_FLAGS) if flag
)


@dataclass(frozen=True)
class ForestParams:
    """Random-forest controls. features_per_split < 8 gives a random forest;
    8 gives plain bagging. max_splits None means n - 1 (effectively
    unrestricted depth)."""

    n_trees: int = 300
    min_leaf: int = 5
    features_per_split: int = 3
    max_splits: int | None = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if not 1 <= self.features_per_split <= N_FEATURES:
            raise ValueError(
                f"features_per_split must be in [1, {N_FEATURES}], "
                f"got {self.features_per_split}"
            )
        if self.max_splits is not None and self.max_splits < 0:
            raise ValueError(f"max_splits must be >= 0, got {self.max_splits}")


@dataclass(frozen=True)
class BoostParams:
    """LSBoost controls. Trees are shallow (max_splits-capped), fitted to
    residuals using all features; learning_rate shrinks each tree's
    contribution."""

    n_trees: int = 100
    learning_rate: float = 0.1
    max_splits: int = 10
    min_leaf: int = 5

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if not 0 < self.learning_rate <= 1:
            raise ValueError(
                f"learning_rate must be in (0, 1], got {self.learning_rate}"
            )
        if self.max_splits < 1:
            raise ValueError(f"max_splits must be >= 1, got {self.max_splits}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Dedicated random stream for one tree, derived from the master seed and
    the tree's index. Independent of fitting order."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(tree_index,))
    )


def bootstrap_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    """A size-n bootstrap resample: uniform index draws with replacement."""
    return rng.integers(0, n, size=n)


def _design(train) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(train, Dataset):
        if len(train) == 0:
            raise DataError("training dataset is empty")
        return train.design_matrix()
    raise TypeError(f"expected a Dataset, got {type(train).__name__}")


class ForestModel:
    """A fitted forest: B trees, their in-bag index multisets, params, seed."""

    def __init__(self, trees, in_bag, params: ForestParams, seed: int, n_train: int):
        self.trees: list[RegressionTree] = list(trees)
        self.in_bag: list[np.ndarray] = [
            np.asarray(bag, dtype=np.int64) for bag in in_bag
        ]
        self.params = params
        self.seed = int(seed)
        self.n_train = int(n_train)
        if len(self.trees) != len(self.in_bag):
            raise ValueError("one in-bag multiset per tree is required")

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_batch(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        total = np.zeros(len(X), dtype=np.float64)
        for tree in self.trees:
            total += tree.predict_batch(X)
        return total / len(self.trees)

    def predict(self, record) -> float:
        if hasattr(record, "features"):
            record = record.features()
        x = np.asarray(record, dtype=np.float64).reshape(1, -1)
        return float(self.predict_batch(x)[0])


class BoostedModel:
    """A fitted LSBoost ensemble: ordered residual trees and the shrinkage."""

    def __init__(self, trees, params: BoostParams, seed: int, n_train: int):
        self.trees: list[RegressionTree] = list(trees)
        self.params = params
        self.seed = int(seed)
        self.n_train = int(n_train)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def learning_rate(self) -> float:
        return self.params.learning_rate

    def predict_batch(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        total = np.zeros(len(X), dtype=np.float64)
        for tree in self.trees:
            total += self.learning_rate * tree.predict_batch(X)
        return total

    def predict(self, record) -> float:
        if hasattr(record, "features"):
            record = record.features()
        x = np.asarray(record, dtype=np.float64).reshape(1, -1)
        return float(self.predict_batch(x)[0])


def fit_random_forest(train: Dataset, params: ForestParams, seed: int) -> ForestModel:
    """Fit B trees, each on its own bootstrap resample with per-node feature
    subsampling. Deterministic given (train, params, seed)."""
    X, y = _design(train)
    n = len(y)
    if params.min_leaf > n:
        raise ValueError(f"min_leaf={params.min_leaf} exceeds training size {n}")
    max_splits = params.max_splits if params.max_splits is not None else n - 1
    tree_params = TreeParams(
        max_splits=max_splits,
        min_leaf=params.min_leaf,
        features_per_split=params.features_per_split,
    )
    trees = []
    bags = []
    for b in range(params.n_trees):
        rng = tree_rng(seed, b)
        bag = bootstrap_indices(rng, n)
        trees.append(
            fit_tree(
                X, y, tree_params, rng, categorical=_CATEGORICAL_INDICES, rows=bag
            )
        )
        bags.append(bag)
    return ForestModel(trees, bags, params, seed, n)


def predict_forest(model: ForestModel, record) -> float:
    """Unweighted mean of the tree predictions for one observation."""
    return model.predict(record)


def oob_predictions(model: ForestModel, train: Dataset) -> np.ndarray:
    """Per-record out-of-bag prediction: mean over the trees whose bootstrap
    sample excludes the record; NaN where no tree excludes it."""
    X, _ = _design(train)
    n = len(X)
    if n != model.n_train:
        raise DataError(
            f"model was fitted on {model.n_train} records, got {n}"
        )
    total = np.zeros(n, dtype=np.float64)
    count = np.zeros(n, dtype=np.int64)
    for tree, bag in zip(model.trees, model.in_bag):
        out_mask = np.ones(n, dtype=bool)
        out_mask[bag] = False
        if not out_mask.any():
            continue
        preds = tree.predict_batch(X[out_mask])
        total[out_mask] += preds
        count[out_mask] += 1
    result = np.full(n, np.nan)
    eligible = count > 0
    result[eligible] = total[eligible] / count[eligible]
    return result


def oob_mse(model: ForestModel, train: Dataset) -> float:
    """Mean squared error of the averaged OOB predictions over the records
    that have one."""
    _, y = _design(train)
    preds = oob_predictions(model, train)
    eligible = ~np.isnan(preds)
    if not eligible.any():
        raise DataError("no record is out-of-bag for any tree")
    diff = y[eligible] - preds[eligible]
    return float(np.mean(diff * diff))


def fit_lsboost(train: Dataset, params: BoostParams, seed: int = 0) -> BoostedModel:
    """Least-squares boosting: each tree fits the current residuals; fitted
    values accumulate learning_rate * tree. The fit is deterministic (all
    features at every split, no bootstrap); seed is stored for provenance."""
    X, y = _design(train)
    trees, _ = _boost_path(X, y, params)
    return BoostedModel(trees, params, seed, len(y))


def _boost_path(X, y, params: BoostParams, eval_sets=()):
    """Core boosting loop.

    Returns (trees, staged) where staged[0] is the (B, n) matrix of fitted
    training values after each round and staged[1 + k] the staged predictions
    on eval_sets[k].
    """
    n = len(y)
    if params.min_leaf > n:
        raise ValueError(f"min_leaf={params.min_leaf} exceeds training size {n}")
    tree_params = TreeParams(
        max_splits=params.max_splits, min_leaf=params.min_leaf,
        features_per_split=None,
    )
    lr = params.learning_rate
    rng = np.random.default_rng(0)  # never consumed: all features per split
    residual = y.astype(np.float64).copy()
    fitted = np.zeros(n, dtype=np.float64)
    evals = [np.ascontiguousarray(E, dtype=np.float64) for E in eval_sets]
    eval_fitted = [np.zeros(len(E)) for E in evals]
    staged = [np.empty((params.n_trees, n))] + [
        np.empty((params.n_trees, len(E))) for E in evals
    ]
    trees = []
    for b in range(params.n_trees):
        tree = fit_tree(
            X, residual, tree_params, rng, categorical=_CATEGORICAL_INDICES
        )
        step = tree.predict_batch(X)
        fitted += lr * step
        residual -= lr * step
        staged[0][b] = fitted
        for k, E in enumerate(evals):
            eval_fitted[k] += lr * tree.predict_batch(E)
            staged[1 + k][b] = eval_fitted[k]
        trees.append(tree)
    return trees, staged


def predict_boosted(model: BoostedModel, record) -> float:
    """learning_rate-weighted sum of the tree predictions."""
    return model.predict(record)


@dataclass(frozen=True)
class ImportanceReport:
    """Per-predictor permutation importance: mean OOB-error increase, its std
    over trees, and the standardized score VI = mean / std (0 when std is 0)."""

    features: tuple[str, ...]
    mean_increase: np.ndarray
    std_increase: np.ndarray
    vi: np.ndarray
    n_trees_used: int


def permutation_importance(
    model: ForestModel, train: Dataset, n_repeats: int = 1, seed: int = 0
) -> ImportanceReport:
    """OOB permutation importance.

    For each tree: compute its OOB MSE, then for every predictor permute
    that column within the tree's OOB rows (n_repeats times, deltas
    averaged) and record the MSE increase. VI standardizes the mean increase
    by its std over trees. Trees with no OOB rows are skipped.
    """
    if model.n_trees < 2:
        raise ValueError("permutation importance needs at least 2 trees")
    if n_repeats < 1:
        raise ValueError(f"n_repeats must be >= 1, got {n_repeats}")
    X, y = _design(train)
    n = len(y)
    if n != model.n_train:
        raise DataError(f"model was fitted on {model.n_train} records, got {n}")
    p = X.shape[1]
    rng = np.random.default_rng(seed)
    deltas = []  # one row per usable tree
    for tree, bag in zip(model.trees, model.in_bag):
        out_mask = np.ones(n, dtype=bool)
        out_mask[bag] = False
        if not out_mask.any():
            continue
        X_oob = X[out_mask]
        y_oob = y[out_mask]
        base = tree.predict_batch(X_oob)
        base_mse = float(np.mean((y_oob - base) ** 2))
        row = np.empty(p)
        for j in range(p):
            acc = 0.0
            for _ in range(n_repeats):
                perm = rng.permutation(len(X_oob))
                X_perm = X_oob.copy()
                X_perm[:, j] = X_oob[perm, j]
                perm_pred = tree.predict_batch(X_perm)
                acc += float(np.mean((y_oob - perm_pred) ** 2))
            row[j] = acc / n_repeats - base_mse
        deltas.append(row)
    if not deltas:
        raise DataError("every tree has an empty OOB sample")
    if len(deltas) < 2:
        raise DataError("need at least 2 trees with OOB samples")
    delta = np.asarray(deltas)
    mean = delta.mean(axis=0)
    std = delta.std(axis=0, ddof=1)
    vi = np.zeros(p)
    nonzero = std > 0
    vi[nonzero] = mean[nonzero] / std[nonzero]
    return ImportanceReport(
        features=FEATURE_NAMES,
        mean_increase=mean,
        std_increase=std,
        vi=vi,
        n_trees_used=len(deltas),
    )


@dataclass(frozen=True)
class ErrorTrace:
    """Per-iteration error series for a growing ensemble (1..B trees).

    estimate_kind is 'oob' for forests and 'cv' for boosting; test_mse is
    present only when a test set was supplied.
    """

    estimate_kind: str
    train_mse: np.ndarray
    estimate_mse: np.ndarray
    test_mse: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.train_mse)


def forest_error_trace(
    model: ForestModel, train: Dataset, test: Dataset | None = None
) -> ErrorTrace:
    """Training MSE and OOB MSE as trees 1..B accumulate (plus test MSE when
    a test set is given). Computed by replaying the fitted trees."""
    X, y = _design(train)
    n = len(y)
    if n != model.n_train:
        raise DataError(f"model was fitted on {model.n_train} records, got {n}")
    B = model.n_trees
    if test is not None:
        X_test, y_test = _design(test)
        test_sum = np.zeros(len(y_test))
        test_mse = np.empty(B)
    else:
        test_mse = None

    train_sum = np.zeros(n)
    oob_sum = np.zeros(n)
    oob_count = np.zeros(n, dtype=np.int64)
    train_mse = np.empty(B)
    oob_mse_series = np.empty(B)
    for b, (tree, bag) in enumerate(zip(model.trees, model.in_bag)):
        train_sum += tree.predict_batch(X)
        diff = y - train_sum / (b + 1)
        train_mse[b] = np.mean(diff * diff)

        out_mask = np.ones(n, dtype=bool)
        out_mask[bag] = False
        if out_mask.any():
            oob_sum[out_mask] += tree.predict_batch(X[out_mask])
            oob_count[out_mask] += 1
        eligible = oob_count > 0
        if eligible.any():
            d = y[eligible] - oob_sum[eligible] / oob_count[eligible]
            oob_mse_series[b] = np.mean(d * d)
        else:
            oob_mse_series[b] = np.nan

        if test is not None:
            test_sum += tree.predict_batch(X_test)
            d = y_test - test_sum / (b + 1)
            test_mse[b] = np.mean(d * d)
    return ErrorTrace("oob", train_mse, oob_mse_series, test_mse)


def boost_error_trace(
    train: Dataset,
    params: BoostParams,
    seed: int = 0,
    *,
    k: int = 10,
    cv_seed: int | None = None,
    test: Dataset | None = None,
) -> ErrorTrace:
    """Training MSE and k-fold CV MSE per boosting iteration 1..B.

    The CV series refits the boosting path on each fold's training part and
    scores the hold-out per round; the reported value at round b is the mean
    of the k per-fold MSEs (one fold assignment per call, from cv_seed or
    seed).
    """
    from .tuning import kfold_indices

    X, y = _design(train)
    n = len(y)
    folds = kfold_indices(n, k, seed if cv_seed is None else cv_seed)
    B = params.n_trees

    _, staged = _boost_path(X, y, params)
    train_mse = np.mean((staged[0] - y) ** 2, axis=1)

    fold_mse = np.empty((len(folds), B))
    for f, holdout in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[holdout] = False
        _, fold_staged = _boost_path(
            X[mask], y[mask], params, eval_sets=[X[holdout]]
        )
        fold_mse[f] = np.mean((fold_staged[1] - y[holdout]) ** 2, axis=1)
    cv_mse = fold_mse.mean(axis=0)

    test_mse = None
    if test is not None:
        X_test, y_test = _design(test)
        _, test_staged = _boost_path(X, y, params, eval_sets=[X_test])
        test_mse = np.mean((test_staged[1] - y_test) ** 2, axis=1)
    return ErrorTrace("cv", train_mse, cv_mse, test_mse)


def _forest_to_dict(model: ForestModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "model_kind": "forest",
        "params": asdict(model.params),
        "seed": model.seed,
        "n_train": model.n_train,
        "trees": [tree.to_dict() for tree in model.trees],
        "in_bag": [bag.tolist() for bag in model.in_bag],
    }


def _boosted_to_dict(model: BoostedModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "model_kind": "boosted",
        "params": asdict(model.params),
        "seed": model.seed,
        "n_train": model.n_train,
        "learning_rate": model.learning_rate,
        "trees": [tree.to_dict() for tree in model.trees],
    }


def save_model(model, path) -> None:
    """Persist a fitted model as JSON; loading reproduces predictions
    bit-exactly (floats round-trip via repr)."""
    if isinstance(model, ForestModel):
        payload = _forest_to_dict(model)
    elif isinstance(model, BoostedModel):
        payload = _boosted_to_dict(model)
    else:
        raise TypeError(f"cannot persist {type(model).__name__}")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle)
        handle.write("\n")


def _trees_from_payload(payload) -> list[RegressionTree]:
    return [
        RegressionTree.from_dict(
            entry, categorical=_CATEGORICAL_INDICES, n_features=N_FEATURES
        )
        for entry in payload["trees"]
    ]


def load_model(path):
    """Load a model saved by save_model; returns a ForestModel or
    BoostedModel per its recorded kind."""
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from None
    with handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(payload, dict) or "model_kind" not in payload:
        raise DataError(f"{path}: not a model file (missing model_kind)")
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported format_version {version!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    kind = payload["model_kind"]
    try:
        if kind == "forest":
            return ForestModel(
                _trees_from_payload(payload),
                [np.asarray(bag, dtype=np.int64) for bag in payload["in_bag"]],
                ForestParams(**payload["params"]),
                payload["seed"],
                payload["n_train"],
            )
        if kind == "boosted":
            return BoostedModel(
                _trees_from_payload(payload),
                BoostParams(**payload["params"]),
                payload["seed"],
                payload["n_train"],
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from None
    raise DataError(f"{path}: unknown model_kind {kind!r}")
