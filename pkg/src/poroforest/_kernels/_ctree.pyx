# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled tree kernel.

Mirrors ``_pytree`` operation for operation — same scan order, same
floating-point operation sequence, same tie rules — so both backends grow
bit-identical trees. Keep the two files in sync; the cross-backend test
asserts equality on randomized inputs. The build disables FP contraction
(see setup.py) so the C arithmetic matches Python's one-op-at-a-time
semantics.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NO_SPLIT_RSS_EPS = 1e-12
SPLIT_TIE_RTOL = 1e-9
LEAF = -1
MAX_CATEGORIES = 63
BACKEND_NAME = "cython"

cdef double C_NO_SPLIT_EPS = 1e-12
cdef double C_TIE_RTOL = 1e-9
cdef int C_MAX_CAT = 63
cdef double C_INF = float("inf")


cdef void _merge_sort(double* vals, long long* idx, long long* buf,
                      Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    """Stable sort of idx[lo:hi) by vals[idx[.]] (merge sort)."""
    cdef Py_ssize_t mid, i, j, k
    if hi - lo <= 1:
        return
    mid = (lo + hi) // 2
    _merge_sort(vals, idx, buf, lo, mid)
    _merge_sort(vals, idx, buf, mid, hi)
    i = lo
    j = mid
    k = lo
    while i < mid and j < hi:
        if vals[idx[j]] < vals[idx[i]]:
            buf[k] = idx[j]
            j += 1
        else:
            buf[k] = idx[i]
            i += 1
        k += 1
    while i < mid:
        buf[k] = idx[i]
        i += 1
        k += 1
    while j < hi:
        buf[k] = idx[j]
        j += 1
        k += 1
    for i in range(lo, hi):
        idx[i] = buf[i]


cdef bint _lex_smaller(long long a, long long b) noexcept nogil:
    """True if mask a's sorted category tuple is lexicographically smaller."""
    cdef long long la, lb
    while True:
        if a == 0 and b == 0:
            return 0
        if a == 0:
            return 1
        if b == 0:
            return 0
        la = a & (-a)
        lb = b & (-b)
        if la != lb:
            return la < lb
        a ^= la
        b ^= lb


cdef int _search(const double[:, ::1] X, const double[::1] y,
                 const long long* rows, Py_ssize_t cnt,
                 const long long* feats, Py_ssize_t n_feats,
                 const unsigned char[::1] is_cat, long long min_leaf,
                 double sum_y, double sum_y2, double tol,
                 double* key_buf, long long* idx_buf, long long* merge_buf,
                 int* out_feature, double* out_threshold, long long* out_mask,
                 double* out_rss, long long* out_nleft) noexcept nogil:
    """Best split over the given features; returns 1 when a candidate exists."""
    cdef int best_feature = -1
    cdef double best_threshold = 0.0
    cdef long long best_mask = 0
    cdef double best_rss = C_INF
    cdef long long best_n_left = 0
    cdef Py_ssize_t fi, i, k, n_present
    cdef int j
    cdef long long r, c, n_left, n_right, acc_n
    cdef double v, cum1, cum2, acc1, acc2, rss_left, rss_right, total, d
    cdef double left_val, right_val
    cdef long long mask
    cdef double cat_sum[63]
    cdef double cat_sum2[63]
    cdef long long cat_count[63]
    cdef long long present[63]
    cdef long long tmp_code
    cdef double mean_a, mean_b
    cdef Py_ssize_t a, b

    for fi in range(n_feats):
        j = <int>feats[fi]
        if is_cat[j]:
            for c in range(C_MAX_CAT):
                cat_count[c] = 0
                cat_sum[c] = 0.0
                cat_sum2[c] = 0.0
            for i in range(cnt):
                r = rows[i]
                c = <long long>X[r, j]
                cat_count[c] += 1
                v = y[r]
                cat_sum[c] += v
                cat_sum2[c] += v * v
            n_present = 0
            for c in range(C_MAX_CAT):
                if cat_count[c] > 0:
                    present[n_present] = c
                    n_present += 1
            if n_present < 2:
                continue
            # insertion sort by (mean response, code)
            for a in range(1, n_present):
                tmp_code = present[a]
                mean_a = cat_sum[tmp_code] / cat_count[tmp_code]
                b = a - 1
                while b >= 0:
                    mean_b = cat_sum[present[b]] / cat_count[present[b]]
                    if mean_b > mean_a or (mean_b == mean_a and present[b] > tmp_code):
                        present[b + 1] = present[b]
                        b -= 1
                    else:
                        break
                present[b + 1] = tmp_code
            acc_n = 0
            acc1 = 0.0
            acc2 = 0.0
            mask = 0
            for k in range(n_present - 1):
                c = present[k]
                acc_n += cat_count[c]
                acc1 += cat_sum[c]
                acc2 += cat_sum2[c]
                mask |= (<long long>1) << c
                n_left = acc_n
                n_right = cnt - acc_n
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
                elif (total <= best_rss + tol and best_feature == j
                      and best_mask != 0 and _lex_smaller(mask, best_mask)):
                    best_mask = mask
                    best_rss = total
                    best_n_left = n_left
        else:
            for i in range(cnt):
                key_buf[i] = X[rows[i], j]
                idx_buf[i] = i
            _merge_sort(key_buf, idx_buf, merge_buf, 0, cnt)
            cum1 = 0.0
            cum2 = 0.0
            for k in range(cnt - 1):
                v = y[rows[idx_buf[k]]]
                cum1 += v
                cum2 += v * v
                left_val = key_buf[idx_buf[k]]
                right_val = key_buf[idx_buf[k + 1]]
                if left_val == right_val:
                    continue
                n_left = k + 1
                n_right = cnt - n_left
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
        return 0
    out_feature[0] = best_feature
    out_threshold[0] = best_threshold
    out_mask[0] = best_mask
    out_rss[0] = best_rss
    out_nleft[0] = best_n_left
    return 1


def best_split(X, y, rows, feats, is_cat, min_leaf):
    """Best split for one node; None when no admissible reducing split exists."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const long long[::1] rv = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const long long[::1] fv = np.ascontiguousarray(feats, dtype=np.int64)
    cdef const unsigned char[::1] cv = np.ascontiguousarray(is_cat, dtype=np.uint8)
    cdef Py_ssize_t cnt = rv.shape[0]
    if cnt == 0:
        raise ValueError("empty sample")
    cdef double sum_y = 0.0, sum_y2 = 0.0, v
    cdef Py_ssize_t i
    for i in range(cnt):
        v = yv[rv[i]]
        sum_y += v
        sum_y2 += v * v
    cdef double rss_parent = sum_y2 - sum_y * sum_y / cnt
    if rss_parent < 0.0:
        rss_parent = 0.0
    cdef double tol = C_TIE_RTOL * (rss_parent if rss_parent > 1.0 else 1.0)

    key_buf = np.empty(cnt, dtype=np.float64)
    idx_buf = np.empty(cnt, dtype=np.int64)
    merge_buf = np.empty(cnt, dtype=np.int64)
    cdef double[::1] kb = key_buf
    cdef long long[::1] ib = idx_buf
    cdef long long[::1] mb = merge_buf

    cdef int f = -1
    cdef double thr = 0.0
    cdef double split_rss = 0.0
    cdef long long mask = 0
    cdef long long n_left = 0
    cdef int found = _search(Xv, yv, &rv[0], cnt, &fv[0], fv.shape[0], cv,
                             min_leaf, sum_y, sum_y2, tol,
                             &kb[0], &ib[0], &mb[0],
                             &f, &thr, &mask, &split_rss, &n_left)
    if not found:
        return None
    if rss_parent - split_rss <= C_NO_SPLIT_EPS:
        return None
    return (int(f), float(thr), int(mask), float(split_rss),
            int(n_left), int(cnt - n_left))


def grow_tree(X, y, rows, is_cat, max_splits, min_leaf, features_per_split, rng):
    """Grow a regression tree breadth-first; returns parallel node arrays."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    root_rows_arr = np.array(rows, dtype=np.int64)
    cdef const long long[::1] root_rows = root_rows_arr
    cdef const unsigned char[::1] cv = np.ascontiguousarray(is_cat, dtype=np.uint8)
    cdef Py_ssize_t n_rows = root_rows.shape[0]
    cdef Py_ssize_t p = Xv.shape[1]
    if n_rows == 0:
        raise ValueError("cannot grow a tree on zero rows")
    cdef long long c_min_leaf = min_leaf
    cdef long long c_max_splits = max_splits
    cdef long long c_fps = features_per_split
    cdef bint use_subset = c_fps < p

    cdef Py_ssize_t max_internal = n_rows - 1
    if c_max_splits < max_internal:
        max_internal = <Py_ssize_t>c_max_splits
    if max_internal < 0:
        max_internal = 0
    cdef Py_ssize_t cap = 2 * max_internal + 1

    feature_arr = np.full(cap, -1, dtype=np.int32)
    threshold_arr = np.full(cap, np.nan, dtype=np.float64)
    catmask_arr = np.zeros(cap, dtype=np.int64)
    left_arr = np.full(cap, -1, dtype=np.int32)
    right_arr = np.full(cap, -1, dtype=np.int32)
    value_arr = np.zeros(cap, dtype=np.float64)
    count_arr = np.zeros(cap, dtype=np.int32)
    rss_arr = np.zeros(cap, dtype=np.float64)
    cdef int[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef long long[::1] catmask = catmask_arr
    cdef int[::1] left = left_arr
    cdef int[::1] right = right_arr
    cdef double[::1] value = value_arr
    cdef int[::1] count = count_arr
    cdef double[::1] rss = rss_arr

    # row workspace: each node owns ws[start:end)
    ws_arr = np.empty(n_rows, dtype=np.int64)
    tmp_arr = np.empty(n_rows, dtype=np.int64)
    cdef long long[::1] ws = ws_arr
    cdef long long[::1] tmp = tmp_arr
    cdef Py_ssize_t i
    for i in range(n_rows):
        ws[i] = root_rows[i]

    q_start_arr = np.zeros(cap, dtype=np.int64)
    q_end_arr = np.zeros(cap, dtype=np.int64)
    cdef long long[::1] q_start = q_start_arr
    cdef long long[::1] q_end = q_end_arr

    key_buf = np.empty(n_rows, dtype=np.float64)
    idx_buf = np.empty(n_rows, dtype=np.int64)
    merge_buf = np.empty(n_rows, dtype=np.int64)
    feats_buf = np.empty(p, dtype=np.int64)
    cdef double[::1] kb = key_buf
    cdef long long[::1] ib = idx_buf
    cdef long long[::1] mb = merge_buf
    cdef long long[::1] fb = feats_buf

    cdef Py_ssize_t n_nodes = 1, head = 0, splits_used = 0
    q_start[0] = 0
    q_end[0] = n_rows

    cdef Py_ssize_t node, start, end, cnt, n_feats, n_kept
    cdef double v, sum_y, sum_y2, mean, rss_parent, tol
    cdef int f = -1
    cdef double thr = 0.0
    cdef double split_rss = 0.0
    cdef long long mask = 0
    cdef long long n_left = 0
    cdef int found
    cdef bint go_left
    cdef long long code, rr

    while head < n_nodes:
        node = head
        start = <Py_ssize_t>q_start[head]
        end = <Py_ssize_t>q_end[head]
        head += 1
        cnt = end - start
        sum_y = 0.0
        sum_y2 = 0.0
        for i in range(start, end):
            v = yv[ws[i]]
            sum_y += v
            sum_y2 += v * v
        mean = sum_y / cnt
        rss_parent = sum_y2 - sum_y * sum_y / cnt
        if rss_parent < 0.0:
            rss_parent = 0.0
        value[node] = mean
        count[node] = <int>cnt
        rss[node] = rss_parent

        if splits_used >= c_max_splits or cnt < 2 * c_min_leaf or cnt < 2:
            continue

        if use_subset:
            drawn = np.sort(rng.choice(p, size=features_per_split, replace=False))
            n_feats = len(drawn)
            for i in range(n_feats):
                fb[i] = drawn[i]
        else:
            n_feats = p
            for i in range(p):
                fb[i] = i
        tol = C_TIE_RTOL * (rss_parent if rss_parent > 1.0 else 1.0)
        found = _search(Xv, yv, &ws[start], cnt, &fb[0], n_feats, cv,
                        c_min_leaf, sum_y, sum_y2, tol,
                        &kb[0], &ib[0], &mb[0],
                        &f, &thr, &mask, &split_rss, &n_left)
        if not found:
            continue
        if rss_parent - split_rss <= C_NO_SPLIT_EPS:
            continue

        # stable partition into tmp (left block, then right block)
        n_kept = 0
        if cv[f]:
            for i in range(start, end):
                rr = ws[i]
                code = <long long>Xv[rr, f]
                if (mask >> code) & 1:
                    tmp[start + n_kept] = rr
                    n_kept += 1
            n_left = n_kept
            for i in range(start, end):
                rr = ws[i]
                code = <long long>Xv[rr, f]
                if not ((mask >> code) & 1):
                    tmp[start + n_kept] = rr
                    n_kept += 1
        else:
            for i in range(start, end):
                rr = ws[i]
                if Xv[rr, f] <= thr:
                    tmp[start + n_kept] = rr
                    n_kept += 1
            n_left = n_kept
            for i in range(start, end):
                rr = ws[i]
                if not (Xv[rr, f] <= thr):
                    tmp[start + n_kept] = rr
                    n_kept += 1
        for i in range(start, end):
            ws[i] = tmp[i]

        feature[node] = f
        if cv[f]:
            threshold[node] = np.nan
        else:
            threshold[node] = thr
        catmask[node] = mask
        left[node] = <int>n_nodes
        right[node] = <int>(n_nodes + 1)
        q_start[n_nodes] = start
        q_end[n_nodes] = start + n_left
        q_start[n_nodes + 1] = start + n_left
        q_end[n_nodes + 1] = end
        n_nodes += 2
        splits_used += 1

    return (feature_arr[:n_nodes].copy(), threshold_arr[:n_nodes].copy(),
            catmask_arr[:n_nodes].copy(), left_arr[:n_nodes].copy(),
            right_arr[:n_nodes].copy(), value_arr[:n_nodes].copy(),
            count_arr[:n_nodes].copy(), rss_arr[:n_nodes].copy())


def predict_rows(feature, threshold, catmask, left, right, value, is_cat, X):
    """Route every row of X through the tree; returns leaf values."""
    cdef const int[::1] fv = np.ascontiguousarray(feature, dtype=np.int32)
    cdef const double[::1] tv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const long long[::1] mv = np.ascontiguousarray(catmask, dtype=np.int64)
    cdef const int[::1] lv = np.ascontiguousarray(left, dtype=np.int32)
    cdef const int[::1] rv = np.ascontiguousarray(right, dtype=np.int32)
    cdef const double[::1] vv = np.ascontiguousarray(value, dtype=np.float64)
    cdef const unsigned char[::1] cv = np.ascontiguousarray(is_cat, dtype=np.uint8)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, node
    cdef int j
    cdef long long code
    cdef bint go_left
    with nogil:
        for i in range(n):
            node = 0
            while fv[node] != -1:
                j = fv[node]
                if cv[j]:
                    code = <long long>Xv[i, j]
                    go_left = (0 <= code < C_MAX_CAT
                               and ((mv[node] >> code) & 1) == 1)
                else:
                    go_left = Xv[i, j] <= tv[node]
                if go_left:
                    node = lv[node]
                else:
                    node = rv[node]
            out[i] = vv[node]
    return out_arr
