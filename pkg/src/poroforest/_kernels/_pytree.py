"""Pure-Python tree kernel: reference implementation of the growth contract.

The compiled kernel (``_ctree.pyx``) mirrors this module operation for
operation; both must produce bit-identical trees. The contract that makes
that possible:

* node rows keep their incoming order; partitions are stable;
* sorting is by (feature value, position) — the unique stable permutation;
* all running sums accumulate left to right, one element at a time;
* candidate scan order is canonical: features ascending, numeric cut points
  ascending, categorical prefixes of the mean-ordered categories ascending;
* a candidate replaces the incumbent only when its RSS is smaller by more
  than a relative tolerance, so scan order settles exact ties (lowest
  feature, then smallest threshold); within one categorical feature, an
  RSS tie is settled toward the lexicographically smallest category subset;
* the per-node feature subset is drawn from the rng only when the node is
  eligible for a split search and features_per_split < p.

Growth is breadth-first; a node becomes a leaf when the split budget is
exhausted, the node is smaller than 2*min_leaf, no admissible candidate
exists, or the best RSS reduction is within the no-split guard.
"""

import numpy as np

#: A node is not split when the best RSS reduction is at or below this.
NO_SPLIT_RSS_EPS = 1e-12

#: Relative tolerance separating genuine RSS improvements from float noise.
SPLIT_TIE_RTOL = 1e-9

#: Leaf marker in the node feature array.
LEAF = -1

#: Categorical codes must fit a signed 64-bit subset mask.
MAX_CATEGORIES = 63

BACKEND_NAME = "python"


def _subset_is_lex_smaller(mask_a: int, mask_b: int) -> bool:
    """True if mask_a's sorted category tuple is lexicographically smaller."""
    a, b = int(mask_a), int(mask_b)
    while True:
        if a == 0 and b == 0:
            return False
        if a == 0:
            return True  # proper prefix
        if b == 0:
            return False
        low_a = a & -a
        low_b = b & -b
        if low_a != low_b:
            return low_a < low_b
        a ^= low_a
        b ^= low_b


def _search_node(X, y, rows, feats, is_cat, min_leaf, sum_y, sum_y2, tol):
    """Best split over ``feats`` for the node holding ``rows``.

    Returns (feature, threshold, mask, rss, n_left) or None. ``rows`` is the
    node's observation multiset in node order; ``sum_y``/``sum_y2`` are its
    response sums.
    """
    count = len(rows)
    best_feature = -1
    best_threshold = 0.0
    best_mask = 0
    best_rss = np.inf
    best_n_left = 0

    for j in feats:
        j = int(j)
        if is_cat[j]:
            # per-category response sums, accumulated in node order
            cat_count = [0] * MAX_CATEGORIES
            cat_sum = [0.0] * MAX_CATEGORIES
            cat_sum2 = [0.0] * MAX_CATEGORIES
            for r in rows:
                c = int(X[r, j])
                cat_count[c] += 1
                v = y[r]
                cat_sum[c] += v
                cat_sum2[c] += v * v
            present = [c for c in range(MAX_CATEGORIES) if cat_count[c] > 0]
            if len(present) < 2:
                continue
            # order categories by mean response (ties by code), scan prefixes
            present.sort(key=lambda c: (cat_sum[c] / cat_count[c], c))
            acc_n = 0
            acc1 = 0.0
            acc2 = 0.0
            mask = 0
            for k in range(len(present) - 1):
                c = present[k]
                acc_n += cat_count[c]
                acc1 += cat_sum[c]
                acc2 += cat_sum2[c]
                mask |= 1 << c
                n_left = acc_n
                n_right = count - acc_n
                if n_left < min_leaf or n_right < min_leaf:
                    continue
                rss_left = acc2 - acc1 * acc1 / n_left
                d = sum_y - acc1
                rss_right = (sum_y2 - acc2) - d * d / n_right
                total = rss_left + rss_right
                if total < best_rss - tol:
                    best_feature = j
                    best_threshold = 0.0
                    best_mask = mask
                    best_rss = total
                    best_n_left = n_left
                elif (
                    total <= best_rss + tol
                    and best_feature == j
                    and best_mask != 0
                    and _subset_is_lex_smaller(mask, best_mask)
                ):
                    best_mask = mask
                    best_rss = total
                    best_n_left = n_left
        else:
            values = np.empty(count, dtype=np.float64)
            for i, r in enumerate(rows):
                values[i] = X[r, j]
            order = np.argsort(values, kind="stable")
            cum1 = 0.0
            cum2 = 0.0
            for k in range(count - 1):
                v = y[rows[order[k]]]
                cum1 += v
                cum2 += v * v
                left_val = values[order[k]]
                right_val = values[order[k + 1]]
                if left_val == right_val:
                    continue
                n_left = k + 1
                n_right = count - n_left
                if n_left < min_leaf or n_right < min_leaf:
                    continue
                rss_left = cum2 - cum1 * cum1 / n_left
                d = sum_y - cum1
                rss_right = (sum_y2 - cum2) - d * d / n_right
                total = rss_left + rss_right
                if total < best_rss - tol:
                    best_feature = j
                    # midpoint; if rounding lands on the right value, fall
                    # back to the left value so the cut separates the two
                    best_threshold = (left_val + right_val) * 0.5
                    if best_threshold == right_val:
                        best_threshold = left_val
                    best_mask = 0
                    best_rss = total
                    best_n_left = n_left

    if best_feature < 0:
        return None
    return best_feature, best_threshold, best_mask, best_rss, best_n_left


def _node_sums(y, rows):
    sum_y = 0.0
    sum_y2 = 0.0
    for r in rows:
        v = y[r]
        sum_y += v
        sum_y2 += v * v
    return sum_y, sum_y2


def best_split(X, y, rows, feats, is_cat, min_leaf):
    """Best split for one node; None when no admissible reducing split exists.

    Mirrors exactly what :func:`grow_tree` does at a node, including the
    no-split RSS-reduction guard.
    """
    rows = np.asarray(rows, dtype=np.int64)
    count = len(rows)
    if count == 0:
        raise ValueError("empty sample")
    sum_y, sum_y2 = _node_sums(y, rows)
    rss_parent = sum_y2 - sum_y * sum_y / count
    if rss_parent < 0.0:
        rss_parent = 0.0
    tol = SPLIT_TIE_RTOL * (rss_parent if rss_parent > 1.0 else 1.0)
    found = _search_node(X, y, rows, feats, is_cat, min_leaf, sum_y, sum_y2, tol)
    if found is None:
        return None
    feature, threshold, mask, rss, n_left = found
    if rss_parent - rss <= NO_SPLIT_RSS_EPS:
        return None
    return feature, threshold, mask, rss, n_left, count - n_left


def grow_tree(X, y, rows, is_cat, max_splits, min_leaf, features_per_split, rng):
    """Grow a regression tree breadth-first; returns parallel node arrays.

    Arrays: feature (int32, -1 for leaves), threshold (float64, NaN for
    leaves and categorical nodes), catmask (int64 left-subset bitmask, 0 for
    numeric nodes and leaves), left/right child indices (int32, -1 for
    leaves), value (float64 node mean), count (int32), rss (float64 node RSS
    as a leaf).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.int64)
    p = X.shape[1]
    n_rows = len(rows)
    if n_rows == 0:
        raise ValueError("cannot grow a tree on zero rows")

    all_feats = np.arange(p, dtype=np.int64)
    use_subset = features_per_split < p

    feature = [LEAF]
    threshold = [np.nan]
    catmask = [0]
    left = [-1]
    right = [-1]
    value = [0.0]
    count = [0]
    rss = [0.0]

    queue = [(0, rows)]
    head = 0
    splits_used = 0
    while head < len(queue):
        node, node_rows = queue[head]
        head += 1
        cnt = len(node_rows)
        sum_y, sum_y2 = _node_sums(y, node_rows)
        mean = sum_y / cnt
        rss_parent = sum_y2 - sum_y * sum_y / cnt
        if rss_parent < 0.0:
            rss_parent = 0.0
        value[node] = mean
        count[node] = cnt
        rss[node] = rss_parent

        if splits_used >= max_splits or cnt < 2 * min_leaf or cnt < 2:
            continue

        if use_subset:
            feats = np.sort(rng.choice(p, size=features_per_split, replace=False))
        else:
            feats = all_feats
        tol = SPLIT_TIE_RTOL * (rss_parent if rss_parent > 1.0 else 1.0)
        found = _search_node(
            X, y, node_rows, feats, is_cat, min_leaf, sum_y, sum_y2, tol
        )
        if found is None:
            continue
        f, thr, mask, total_rss, _n_left = found
        if rss_parent - total_rss <= NO_SPLIT_RSS_EPS:
            continue

        if is_cat[f]:
            go_left = np.array(
                [(mask >> int(X[r, f])) & 1 == 1 for r in node_rows], dtype=bool
            )
        else:
            go_left = np.array([X[r, f] <= thr for r in node_rows], dtype=bool)
        left_rows = node_rows[go_left]
        right_rows = node_rows[~go_left]

        feature[node] = f
        threshold[node] = np.nan if is_cat[f] else thr
        catmask[node] = mask
        left_child = len(feature)
        right_child = left_child + 1
        left[node] = left_child
        right[node] = right_child
        for _ in range(2):
            feature.append(LEAF)
            threshold.append(np.nan)
            catmask.append(0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            count.append(0)
            rss.append(0.0)
        queue.append((left_child, left_rows))
        queue.append((right_child, right_rows))
        splits_used += 1

    return (
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=np.float64),
        np.array(catmask, dtype=np.int64),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(value, dtype=np.float64),
        np.array(count, dtype=np.int32),
        np.array(rss, dtype=np.float64),
    )


def predict_rows(feature, threshold, catmask, left, right, value, is_cat, X):
    """Route every row of X through the tree; returns leaf values."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    out = np.empty(len(X), dtype=np.float64)
    for i in range(len(X)):
        node = 0
        while feature[node] != LEAF:
            j = feature[node]
            if is_cat[j]:
                code = int(X[i, j])
                go_left = 0 <= code < MAX_CATEGORIES and (
                    (int(catmask[node]) >> code) & 1
                ) == 1
            else:
                go_left = X[i, j] <= threshold[node]
            node = left[node] if go_left else right[node]
        out[i] = value[node]
    return out
