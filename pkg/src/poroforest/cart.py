"""CART regression trees: greedy binary splitting on RSS, categorical-aware
splits, growth controls, weakest-link cost-complexity pruning, prediction.

Trees operate on plain float matrices. Categorical predictors are encoded as
small non-negative integer codes and flagged via ``categorical``; a
categorical split keeps a subset of codes on the left (stored as a bitmask).
Numeric cut points sit at midpoints between consecutive distinct sorted
values; a record goes left iff value <= threshold. A node is not split when
the best RSS reduction is <= NO_SPLIT_RSS_EPS or min_leaf blocks every cut.
Equal-RSS candidates resolve to the lowest feature index, then the smallest
threshold, then the lexicographically smallest category subset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import LEAF, MAX_CATEGORIES, NO_SPLIT_RSS_EPS, SPLIT_TIE_RTOL

__all__ = [
    "TreeParams",
    "SplitCandidate",
    "RegressionTree",
    "best_split",
    "fit_tree",
    "predict_tree",
    "prune",
    "NO_SPLIT_RSS_EPS",
    "SPLIT_TIE_RTOL",
]


@dataclass(frozen=True)
class TreeParams:
    """Growth controls for a single tree.

    max_splits caps the number of internal decision nodes; min_leaf is the
    minimum observation count per terminal node; features_per_split is the
    size of the random predictor subset drawn at each node (None = all).
    """

    max_splits: int
    min_leaf: int = 1
    features_per_split: int | None = None

    def __post_init__(self):
        if self.max_splits < 0:
            raise ValueError(f"max_splits must be >= 0, got {self.max_splits}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError(
                f"features_per_split must be >= 1, got {self.features_per_split}"
            )


@dataclass(frozen=True)
class SplitCandidate:
    """A scored split: feature, rule (threshold or left category subset),
    achieved total child RSS, and child sizes."""

    feature: int
    threshold: float | None
    categories: tuple[int, ...] | None
    rss: float
    n_left: int
    n_right: int


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _normalize_inputs(X, y, categorical):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.ndim != 1 or len(y) != len(X):
        raise ValueError("y must be a vector with one entry per row of X")
    p = X.shape[1]
    is_cat = np.zeros(p, dtype=np.uint8)
    for j in categorical:
        is_cat[j] = 1
        column = X[:, j]
        if len(column) and (
            np.any(column < 0)
            or np.any(column >= MAX_CATEGORIES)
            or np.any(column != np.floor(column))
        ):
            raise ValueError(
                f"categorical feature {j} must hold integer codes in "
                f"[0, {MAX_CATEGORIES})"
            )
    return X, y, is_cat


def _mask_to_categories(mask: int) -> tuple[int, ...]:
    return tuple(c for c in range(MAX_CATEGORIES) if (mask >> c) & 1)


def _categories_to_mask(categories) -> int:
    mask = 0
    for c in categories:
        mask |= 1 << int(c)
    return mask


class RegressionTree:
    """An immutable fitted tree stored as parallel node arrays.

    Node i: feature[i] (LEAF = -1 marks a terminal node), threshold[i]
    (numeric splits), catmask[i] (left-subset bitmask for categorical
    splits), left[i]/right[i] child indices, value[i] (mean response of the
    node's training observations), count[i], rss[i] (node RSS as a leaf).
    """

    __slots__ = (
        "feature",
        "threshold",
        "catmask",
        "left",
        "right",
        "value",
        "count",
        "rss",
        "categorical",
        "n_features",
        "_is_cat",
    )

    def __init__(
        self, feature, threshold, catmask, left, right, value, count, rss,
        categorical, n_features,
    ):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.catmask = np.asarray(catmask, dtype=np.int64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)
        self.count = np.asarray(count, dtype=np.int32)
        self.rss = np.asarray(rss, dtype=np.float64)
        self.categorical = tuple(sorted(int(c) for c in categorical))
        self.n_features = int(n_features)
        is_cat = np.zeros(self.n_features, dtype=np.uint8)
        for j in self.categorical:
            is_cat[j] = 1
        self._is_cat = is_cat
        for arr in (self.feature, self.threshold, self.catmask, self.left,
                    self.right, self.value, self.count, self.rss):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_internal(self) -> int:
        return int(np.sum(self.feature != LEAF))

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def leaf_indices(self) -> np.ndarray:
        return np.flatnonzero(self.feature == LEAF)

    def predict_batch(self, X) -> np.ndarray:
        """Predictions for every row of X."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"X must have shape (m, {self.n_features}), got {X.shape}"
            )
        return _kernels.predict_rows(
            self.feature, self.threshold, self.catmask, self.left, self.right,
            self.value, self._is_cat, X,
        )

    def predict(self, x) -> float:
        """Prediction for a single feature vector."""
        x = np.asarray(x, dtype=np.float64)
        return float(self.predict_batch(x.reshape(1, -1))[0])

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of X."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.empty(len(X), dtype=np.int64)
        for i in range(len(X)):
            node = 0
            while self.feature[node] != LEAF:
                j = self.feature[node]
                if self._is_cat[j]:
                    code = int(X[i, j])
                    go_left = 0 <= code < MAX_CATEGORIES and (
                        (int(self.catmask[node]) >> code) & 1
                    )
                else:
                    go_left = X[i, j] <= self.threshold[node]
                node = self.left[node] if go_left else self.right[node]
            out[i] = node
        return out

    def to_dict(self) -> dict:
        """JSON-ready node arrays (None marks an absent threshold)."""
        return {
            "feature": self.feature.tolist(),
            "threshold": [
                None if np.isnan(t) else float(t) for t in self.threshold
            ],
            "catmask": [int(m) for m in self.catmask],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [float(v) for v in self.value],
            "count": self.count.tolist(),
            "rss": [float(v) for v in self.rss],
        }

    @classmethod
    def from_dict(cls, payload: dict, categorical, n_features) -> "RegressionTree":
        threshold = [np.nan if t is None else t for t in payload["threshold"]]
        return cls(
            payload["feature"], threshold, payload["catmask"], payload["left"],
            payload["right"], payload["value"], payload["count"], payload["rss"],
            categorical, n_features,
        )


def best_split(
    X, y, candidate_features=None, min_leaf: int = 1, *, categorical=(), rows=None,
) -> SplitCandidate | None:
    """Best split of the given rows over the candidate features.

    Scores every admissible (feature, cut point) and category-subset
    partition by total child RSS; returns None when no candidate reduces the
    node RSS by more than NO_SPLIT_RSS_EPS.
    """
    X, y, is_cat = _normalize_inputs(X, y, categorical)
    if rows is None:
        rows = np.arange(len(X), dtype=np.int64)
    else:
        rows = np.asarray(rows, dtype=np.int64)
    if len(rows) == 0:
        raise ValueError("empty sample")
    if candidate_features is None:
        candidate_features = range(X.shape[1])
    feats = np.asarray(sorted(int(j) for j in candidate_features), dtype=np.int64)
    if min_leaf < 1:
        raise ValueError(f"min_leaf must be >= 1, got {min_leaf}")
    found = _kernels.best_split(X, y, rows, feats, is_cat, min_leaf)
    if found is None:
        return None
    feature, threshold, mask, rss, n_left, n_right = found
    if is_cat[feature]:
        return SplitCandidate(
            feature, None, _mask_to_categories(mask), rss, n_left, n_right
        )
    return SplitCandidate(feature, threshold, None, rss, n_left, n_right)


def fit_tree(
    X, y, params: TreeParams, rng, *, categorical=(), rows=None,
) -> RegressionTree:
    """Grow a tree by greedy breadth-first splitting.

    rows (optional) selects the training observations as a multiset of row
    indices — this is how bootstrap resamples are fitted without copying X.
    The rng drives per-node feature subsampling when features_per_split is
    smaller than the total feature count.
    """
    X, y, is_cat = _normalize_inputs(X, y, categorical)
    if rows is None:
        rows = np.arange(len(X), dtype=np.int64)
    else:
        rows = np.asarray(rows, dtype=np.int64)
    if len(rows) < params.min_leaf:
        raise ValueError(
            f"need at least min_leaf={params.min_leaf} observations, "
            f"got {len(rows)}"
        )
    p = X.shape[1]
    fps = params.features_per_split
    if fps is None:
        fps = p
    if fps > p:
        raise ValueError(f"features_per_split={fps} exceeds feature count {p}")
    arrays = _kernels.grow_tree(
        X, y, rows, is_cat, params.max_splits, params.min_leaf, fps, _as_rng(rng)
    )
    return RegressionTree(*arrays, categorical=categorical, n_features=p)


def predict_tree(tree: RegressionTree, record) -> float:
    """Prediction for one observation (a feature vector or a MixRecord)."""
    if hasattr(record, "features"):
        record = record.features()
    return tree.predict(record)


def _routed_stats(tree: RegressionTree, X, y, rows):
    """Per-node (count, mean, rss) when the given sample is routed through."""
    n_nodes = tree.n_nodes
    count = np.zeros(n_nodes, dtype=np.int64)
    total = np.zeros(n_nodes, dtype=np.float64)
    total2 = np.zeros(n_nodes, dtype=np.float64)
    for r in rows:
        x = X[r]
        node = 0
        while True:
            count[node] += 1
            total[node] += y[r]
            total2[node] += y[r] * y[r]
            if tree.feature[node] == LEAF:
                break
            j = tree.feature[node]
            if tree._is_cat[j]:
                code = int(x[j])
                go_left = 0 <= code < MAX_CATEGORIES and (
                    (int(tree.catmask[node]) >> code) & 1
                )
            else:
                go_left = x[j] <= tree.threshold[node]
            node = tree.left[node] if go_left else tree.right[node]
    mean = np.where(count > 0, total / np.maximum(count, 1), tree.value)
    rss = np.where(
        count > 0, np.maximum(total2 - total * mean, 0.0), 0.0
    )
    return count, mean, rss


def prune(tree: RegressionTree, alpha: float, X, y, *, rows=None) -> RegressionTree:
    """Weakest-link cost-complexity pruning.

    Returns the subtree minimizing RSS + alpha * n_leaves over the sample
    (normally the tree's own training sample). Internal nodes whose
    per-split RSS amortization g = (node RSS - subtree RSS) / (leaves - 1)
    falls strictly below alpha are collapsed, weakest first, ties together;
    alpha exactly at a node's g keeps the node (the larger subtree wins).
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if rows is None:
        rows = np.arange(len(X), dtype=np.int64)
    else:
        rows = np.asarray(rows, dtype=np.int64)
    count, mean, rss = _routed_stats(tree, X, y, rows)

    # live structure, collapsed progressively
    feature = tree.feature.astype(np.int64).copy()
    left = tree.left.astype(np.int64).copy()
    right = tree.right.astype(np.int64).copy()

    def subtree_leaf_stats(node):
        """(sum of leaf RSS, leaf count) under node in the live structure."""
        if feature[node] == LEAF:
            return rss[node], 1
        rss_l, n_l = subtree_leaf_stats(left[node])
        rss_r, n_r = subtree_leaf_stats(right[node])
        return rss_l + rss_r, n_l + n_r

    while True:
        internal = np.flatnonzero(feature != LEAF)
        if len(internal) == 0:
            break
        g = np.empty(len(internal))
        for idx, node in enumerate(internal):
            subtree_rss, n_leaves = subtree_leaf_stats(node)
            g[idx] = (rss[node] - subtree_rss) / (n_leaves - 1)
        g_min = g.min()
        if g_min >= alpha:
            break
        for node in internal[g == g_min]:
            feature[node] = LEAF

    # rebuild compact arrays breadth-first over the surviving structure
    order = []
    index_of = {}
    queue = [0]
    while queue:
        node = queue.pop(0)
        index_of[node] = len(order)
        order.append(node)
        if feature[node] != LEAF:
            queue.append(int(left[node]))
            queue.append(int(right[node]))

    new_feature, new_threshold, new_catmask = [], [], []
    new_left, new_right = [], []
    new_value, new_count, new_rss = [], [], []
    for node in order:
        is_leaf = feature[node] == LEAF
        new_feature.append(LEAF if is_leaf else int(tree.feature[node]))
        new_threshold.append(np.nan if is_leaf else float(tree.threshold[node]))
        new_catmask.append(0 if is_leaf else int(tree.catmask[node]))
        new_left.append(-1 if is_leaf else index_of[int(left[node])])
        new_right.append(-1 if is_leaf else index_of[int(right[node])])
        new_value.append(float(mean[node]))
        new_count.append(int(count[node]))
        new_rss.append(float(rss[node]))
    return RegressionTree(
        new_feature, new_threshold, new_catmask, new_left, new_right,
        new_value, new_count, new_rss, tree.categorical, tree.n_features,
    )
