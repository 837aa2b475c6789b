"""Single-tree correctness: an independent enumeration oracle for the split
search, a breadth-first greedy oracle for whole-tree growth, structural
invariants, monotone-transform invariance, and pruning laws.

Oracle data is integer-valued so that true RSS ties are exact while genuine
RSS gaps dwarf the scanner's tie tolerance — enumeration and scan must then
agree exactly, tie rules included.
"""

import numpy as np
import pytest

from poroforest._kernels import NO_SPLIT_RSS_EPS, SPLIT_TIE_RTOL
from poroforest.cart import (
    RegressionTree,
    TreeParams,
    best_split,
    fit_tree,
    predict_tree,
    prune,
)
from poroforest.dataset import MixRecord

from conftest import random_split_problem


def _sse(values: np.ndarray) -> float:
    if len(values) == 0:
        return 0.0
    return float(np.sum((values - values.mean()) ** 2))


def oracle_best_split(X, y, rows, feats, is_cat, min_leaf):
    """Enumerate every candidate partition; settle ties globally.

    Candidates: for numeric features, midpoints between consecutive distinct
    sorted values (falling back to the lower value when the midpoint rounds
    up to the higher); for categorical features, the proper prefixes of the
    categories ordered by mean response (ties by code). Ties within the
    published tolerance go to the lowest feature, then the smallest
    threshold, then the lexicographically smallest category tuple.
    """
    rows = np.asarray(rows)
    yv = y[rows]
    parent = _sse(yv)
    tol = SPLIT_TIE_RTOL * max(1.0, parent)
    candidates = []  # (rss, feature, threshold, categories, n_left)
    for j in feats:
        xj = X[rows, j]
        if is_cat[j]:
            codes = sorted(int(c) for c in np.unique(xj))
            if len(codes) < 2:
                continue
            means = {c: float(yv[xj == c].mean()) for c in codes}
            ordered = sorted(codes, key=lambda c: (means[c], c))
            for k in range(1, len(ordered)):
                left_codes = tuple(sorted(ordered[:k]))
                sel = np.isin(xj, left_codes)
                n_left = int(sel.sum())
                if n_left < min_leaf or len(rows) - n_left < min_leaf:
                    continue
                rss = _sse(yv[sel]) + _sse(yv[~sel])
                candidates.append((rss, j, None, left_codes, n_left))
        else:
            distinct = np.unique(xj)
            for a, b in zip(distinct, distinct[1:]):
                threshold = (a + b) * 0.5
                if threshold == b:
                    threshold = a
                sel = xj <= threshold
                n_left = int(sel.sum())
                if n_left < min_leaf or len(rows) - n_left < min_leaf:
                    continue
                rss = _sse(yv[sel]) + _sse(yv[~sel])
                candidates.append((rss, j, float(threshold), None, n_left))
    if not candidates:
        return None
    best_rss = min(c[0] for c in candidates)
    if parent - best_rss <= NO_SPLIT_RSS_EPS:
        return None
    window = [c for c in candidates if c[0] <= best_rss + tol]

    def order_key(cand):
        rss, j, threshold, categories, n_left = cand
        if categories is None:
            return (j, 0, threshold, ())
        return (j, 1, 0.0, categories)

    return min(window, key=order_key)


class TestSplitOracle:
    def test_enumeration_agrees_exactly(self):
        rng = np.random.default_rng(1234)
        checked_splits = 0
        for trial in range(200):
            X, y, is_cat = random_split_problem(rng, max_n=12, max_features=3)
            min_leaf = int(rng.integers(1, 3))
            cats = tuple(np.nonzero(is_cat)[0])
            got = best_split(X, y, min_leaf=min_leaf, categorical=cats)
            expected = oracle_best_split(
                X, y, np.arange(len(y)), range(X.shape[1]), is_cat, min_leaf
            )
            if expected is None:
                assert got is None, f"trial {trial}: oracle says no split"
                continue
            checked_splits += 1
            rss, j, threshold, categories, n_left = expected
            assert got is not None, f"trial {trial}: search found nothing"
            assert got.feature == j, f"trial {trial}"
            if categories is None:
                assert got.threshold == threshold, f"trial {trial}"
                assert got.categories is None
            else:
                assert got.categories == categories, f"trial {trial}"
                assert got.threshold is None
            assert got.n_left == n_left, f"trial {trial}"
            assert got.rss == pytest.approx(rss, abs=1e-9)
        assert checked_splits > 100  # the sweep must actually exercise splits

    def test_row_multisets_respected(self):
        rng = np.random.default_rng(77)
        for trial in range(60):
            X, y, is_cat = random_split_problem(rng, max_n=10, max_features=2)
            n = len(y)
            rows = rng.integers(0, n, size=n)  # bootstrap-style multiset
            got = best_split(
                X, y, min_leaf=1, categorical=tuple(np.nonzero(is_cat)[0]),
                rows=rows,
            )
            expected = oracle_best_split(
                X, y, rows, range(X.shape[1]), is_cat, 1
            )
            if expected is None:
                assert got is None
            else:
                assert got is not None
                assert (got.feature, got.n_left) == (expected[1], expected[4])

    def test_no_split_on_constant_target(self):
        X = np.arange(8, dtype=np.float64).reshape(-1, 1)
        assert best_split(X, np.full(8, 2.0)) is None

    def test_empty_sample_raises(self):
        X = np.empty((0, 1))
        with pytest.raises(ValueError):
            best_split(X, np.empty(0))

    def test_candidate_feature_restriction(self):
        # column 0 separates y perfectly; excluding it forces column 1
        X = np.array([[0.0, 5.0], [1.0, 3.0], [2.0, 4.0], [3.0, 6.0]])
        y = np.array([0.0, 0.0, 9.0, 9.0])
        assert best_split(X, y).feature == 0
        restricted = best_split(X, y, candidate_features=[1])
        assert restricted is not None and restricted.feature == 1


def oracle_grow(X, y, is_cat, max_splits, min_leaf):
    """Independent breadth-first greedy growth using the enumeration oracle.

    Returns a list of node dicts in creation order (the same order the
    kernel assigns node indices).
    """
    nodes = [{"rows": np.arange(len(y)), "leaf": True}]
    queue = [0]
    splits_used = 0
    while queue:
        idx = queue.pop(0)
        node = nodes[idx]
        rows = node["rows"]
        if splits_used >= max_splits or len(rows) < max(2, 2 * min_leaf):
            continue
        found = oracle_best_split(
            X, y, rows, range(X.shape[1]), is_cat, min_leaf
        )
        if found is None:
            continue
        rss, j, threshold, categories, n_left = found
        xj = X[rows, j]
        sel = (
            np.isin(xj, categories) if categories is not None
            else xj <= threshold
        )
        node.update(
            leaf=False, feature=j, threshold=threshold, categories=categories,
            left=len(nodes), right=len(nodes) + 1,
        )
        nodes.append({"rows": rows[sel], "leaf": True})
        nodes.append({"rows": rows[~sel], "leaf": True})
        queue.extend([node["left"], node["right"]])
        splits_used += 1
    return nodes


class TestGreedyGrowthOracle:
    def test_tree_matches_breadth_first_greedy_enumeration(self):
        rng = np.random.default_rng(555)
        for trial in range(60):
            X, y, is_cat = random_split_problem(rng, max_n=12, max_features=3)
            max_splits = int(rng.integers(0, 8))
            min_leaf = int(rng.integers(1, 3))
            cats = tuple(np.nonzero(is_cat)[0])
            tree = fit_tree(
                X, y,
                TreeParams(max_splits=max_splits, min_leaf=min_leaf),
                rng=0, categorical=cats,
            )
            expected = oracle_grow(X, y, is_cat, max_splits, min_leaf)
            assert tree.n_nodes == len(expected), f"trial {trial}"
            for i, node in enumerate(expected):
                if node["leaf"]:
                    assert tree.feature[i] == -1, f"trial {trial} node {i}"
                    assert tree.value[i] == pytest.approx(
                        y[node["rows"]].mean(), abs=1e-12
                    )
                else:
                    assert tree.feature[i] == node["feature"]
                    assert tree.left[i] == node["left"]
                    assert tree.right[i] == node["right"]
                    if node["categories"] is None:
                        assert tree.threshold[i] == node["threshold"]
                assert tree.count[i] == len(node["rows"])


class TestTreeInvariants:
    def _random_tree(self, rng, n=40, p=4):
        X = np.round(rng.normal(size=(n, p)), 3)
        y = np.round(rng.normal(size=n), 3)
        params = TreeParams(
            max_splits=int(rng.integers(1, n)),
            min_leaf=int(rng.integers(1, 4)),
        )
        return X, y, fit_tree(X, y, params, rng=int(rng.integers(1 << 30)))

    def test_leaf_values_are_routed_means(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            X, y, tree = self._random_tree(rng)
            leaf_of = tree.apply(X)
            for leaf in np.unique(leaf_of):
                members = y[leaf_of == leaf]
                assert tree.value[leaf] == pytest.approx(members.mean(), rel=1e-12)
                assert tree.count[leaf] == len(members)

    def test_predict_equals_leaf_value(self):
        rng = np.random.default_rng(32)
        X, y, tree = self._random_tree(rng)
        Xq = rng.normal(size=(30, 4))
        assert np.array_equal(
            tree.predict_batch(Xq), tree.value[tree.apply(Xq)]
        )

    def test_counts_conserve_down_the_tree(self):
        rng = np.random.default_rng(33)
        for _ in range(10):
            X, y, tree = self._random_tree(rng)
            for i in range(tree.n_nodes):
                if tree.feature[i] != -1:
                    assert (
                        tree.count[i]
                        == tree.count[tree.left[i]] + tree.count[tree.right[i]]
                    )

    def test_min_leaf_bounds_every_leaf(self):
        rng = np.random.default_rng(34)
        X = rng.normal(size=(50, 3))
        y = rng.normal(size=50)
        for min_leaf in (1, 3, 7):
            tree = fit_tree(
                X, y, TreeParams(max_splits=49, min_leaf=min_leaf), rng=0
            )
            assert tree.count[tree.leaf_indices()].min() >= min_leaf

    def test_perfect_fit_when_unrestricted_and_rows_distinct(self):
        rng = np.random.default_rng(35)
        X = rng.normal(size=(20, 2))
        y = rng.normal(size=20)
        tree = fit_tree(X, y, TreeParams(max_splits=19, min_leaf=1), rng=0)
        assert np.array_equal(tree.predict_batch(X), y)

    def test_monotone_feature_transform_preserves_training_predictions(self):
        # strictly increasing transforms keep every candidate partition (and
        # every RSS) identical, so the fitted function agrees exactly on the
        # training points even though thresholds move
        rng = np.random.default_rng(36)
        for _ in range(10):
            X = np.round(rng.normal(size=(30, 3)), 3)
            y = np.round(rng.normal(size=30), 3)
            X2 = X.copy()
            X2[:, 0] = np.exp(X2[:, 0])
            X2[:, 2] = X2[:, 2] ** 3
            params = TreeParams(max_splits=12, min_leaf=2)
            t1 = fit_tree(X, y, params, rng=5)
            t2 = fit_tree(X2, y, params, rng=5)
            assert np.array_equal(t1.predict_batch(X), t2.predict_batch(X2))
            assert np.array_equal(t1.feature, t2.feature)

    def test_features_per_split_must_fit(self):
        X = np.zeros((4, 2))
        y = np.arange(4.0)
        with pytest.raises(ValueError):
            fit_tree(X, y, TreeParams(max_splits=1, features_per_split=3), rng=0)

    def test_too_few_rows_raises(self):
        X = np.zeros((2, 1))
        with pytest.raises(ValueError):
            fit_tree(
                X, np.arange(2.0), TreeParams(max_splits=1, min_leaf=5), rng=0
            )

    def test_predict_tree_accepts_mix_records(self):
        record = MixRecord(
            mix_id="r", w_b=0.5, binder=400.0, fly_ash=0.0, ggbs=0.0, sp=0.0,
            ca_fa=2.0, curing_condition="air", curing_days=28, porosity=10.0,
        )
        X = np.vstack([record.features(), record.features() + 0.5])
        y = np.array([4.0, 8.0])
        tree = fit_tree(X, y, TreeParams(max_splits=1), rng=0)
        assert predict_tree(tree, record) == tree.predict(record.features())


class TestTreeParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(max_splits=-1),
            dict(max_splits=1, min_leaf=0),
            dict(max_splits=1, features_per_split=0),
        ],
    )
    def test_rejects_bad_params(self, kwargs):
        with pytest.raises(ValueError):
            TreeParams(**kwargs)


def _subtree_rss_and_leaves(tree, node, count, rss_routed):
    if tree.feature[node] == -1:
        return rss_routed[node], 1
    lr, ll = _subtree_rss_and_leaves(tree, tree.left[node], count, rss_routed)
    rr, rl = _subtree_rss_and_leaves(tree, tree.right[node], count, rss_routed)
    return lr + rr, ll + rl


class TestPruning:
    def _tree(self, seed=0, n=40):
        rng = np.random.default_rng(seed)
        X = np.round(rng.normal(size=(n, 3)), 2)
        y = np.round(rng.normal(size=n), 2)
        tree = fit_tree(X, y, TreeParams(max_splits=n - 1, min_leaf=1), rng=1)
        return X, y, tree

    def test_alpha_zero_is_identity(self):
        X, y, tree = self._tree()
        pruned = prune(tree, 0.0, X, y)
        assert pruned.n_nodes == tree.n_nodes
        assert np.array_equal(pruned.predict_batch(X), tree.predict_batch(X))

    def test_alpha_infinite_collapses_to_root(self):
        X, y, tree = self._tree()
        pruned = prune(tree, np.inf, X, y)
        assert pruned.n_nodes == 1
        assert pruned.value[0] == pytest.approx(y.mean())

    def test_leaf_count_monotone_in_alpha(self):
        X, y, tree = self._tree(seed=4)
        alphas = [0.0, 0.01, 0.05, 0.1, 0.5, 2.0, 10.0]
        leaves = [prune(tree, a, X, y).n_leaves for a in alphas]
        assert all(a >= b for a, b in zip(leaves, leaves[1:]))
        assert leaves[-1] >= 1

    def test_pruned_leaf_values_are_sample_means(self):
        X, y, tree = self._tree(seed=9)
        pruned = prune(tree, 0.08, X, y)
        leaf_of = pruned.apply(X)
        for leaf in np.unique(leaf_of):
            assert pruned.value[leaf] == pytest.approx(
                y[leaf_of == leaf].mean(), rel=1e-12
            )

    def test_weakest_link_collapses_in_g_order(self):
        X, y, tree = self._tree(seed=12, n=30)
        # compute every internal node's g from the fitted arrays
        gs = []
        for node in range(tree.n_nodes):
            if tree.feature[node] == -1:
                continue
            sub_rss, sub_leaves = _subtree_rss_and_leaves(
                tree, node, tree.count, tree.rss
            )
            gs.append((tree.rss[node] - sub_rss) / (sub_leaves - 1))
        g_min = min(gs)
        # alpha just above the weakest link must remove at least one node;
        # alpha exactly at it must keep the tree intact (strict comparison)
        assert prune(tree, g_min, X, y).n_nodes == tree.n_nodes
        assert prune(tree, g_min * (1 + 1e-9), X, y).n_nodes < tree.n_nodes

    def test_objective_beats_full_tree_and_root(self):
        # rss + alpha * n_leaves of the pruned tree must not exceed either
        # extreme of the collapse chain (keep everything / collapse all)
        X, y, tree = self._tree(seed=21, n=25)

        def objective(t, alpha):
            leaf_of = t.apply(X)
            rss = sum(_sse(y[leaf_of == leaf]) for leaf in np.unique(leaf_of))
            return rss + alpha * t.n_leaves

        for alpha in (0.02, 0.1, 0.4, 1.5):
            pruned = prune(tree, alpha, X, y)
            got = objective(pruned, alpha)
            assert got <= objective(tree, alpha) + 1e-9
            assert got <= _sse(y) + alpha * 1 + 1e-9

    def test_negative_alpha_rejected(self):
        X, y, tree = self._tree()
        with pytest.raises(ValueError):
            prune(tree, -0.1, X, y)
