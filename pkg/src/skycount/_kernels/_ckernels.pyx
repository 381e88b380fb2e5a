# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the numeric kernels.

Mirrors `_pykernels` operation-for-operation: accumulations run in row
order, bin prefix sums in bin order, and tree nodes are laid out in BFS
order, so results are bit-identical to the numpy fallback.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

cdef double _SSE_TOL = 1e-12


def polyline_min_dist(double[:, ::1] points, double[:, ::1] vertices):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t m = vertices.shape[0]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, s
    cdef double ax, ay, dx, dy, seg_len2, px, py, t, ddx, ddy, d2, best
    cdef double inf = np.inf
    cdef bint any_valid = False

    for s in range(m - 1):
        dx = vertices[s + 1, 0] - vertices[s, 0]
        dy = vertices[s + 1, 1] - vertices[s, 1]
        if dx * dx + dy * dy > 0.0:
            any_valid = True
            break

    for i in range(n):
        if not any_valid:
            ddx = points[i, 0] - vertices[0, 0]
            ddy = points[i, 1] - vertices[0, 1]
            out[i] = (ddx * ddx + ddy * ddy) ** 0.5
            continue
        best = inf
        for s in range(m - 1):
            ax = vertices[s, 0]
            ay = vertices[s, 1]
            dx = vertices[s + 1, 0] - ax
            dy = vertices[s + 1, 1] - ay
            seg_len2 = dx * dx + dy * dy
            if seg_len2 <= 0.0:
                continue
            px = points[i, 0] - ax
            py = points[i, 1] - ay
            t = (px * dx + py * dy) / seg_len2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            ddx = px - t * dx
            ddy = py - t * dy
            d2 = ddx * ddx + ddy * ddy
            if d2 < best:
                best = d2
        out[i] = best ** 0.5
    return out_arr


def iou_matrix(double[:, ::1] rects_a, double[:, ::1] rects_b):
    cdef Py_ssize_t n = rects_a.shape[0]
    cdef Py_ssize_t m = rects_b.shape[0]
    out_arr = np.empty((n, m))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double iw, ih, inter, union_, area_a

    for i in range(n):
        area_a = (rects_a[i, 2] - rects_a[i, 0]) * (rects_a[i, 3] - rects_a[i, 1])
        for j in range(m):
            iw = min(rects_a[i, 2], rects_b[j, 2]) - max(rects_a[i, 0], rects_b[j, 0])
            ih = min(rects_a[i, 3], rects_b[j, 3]) - max(rects_a[i, 1], rects_b[j, 1])
            inter = max(iw, 0.0) * max(ih, 0.0)
            union_ = area_a + (rects_b[j, 2] - rects_b[j, 0]) * (rects_b[j, 3] - rects_b[j, 1]) - inter
            out[i, j] = inter / union_ if union_ > 0.0 else 0.0
    return out_arr


def grow_tree(long[:, ::1] X, double[::1] y, long n_bins, long min_leaf):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_feat = X.shape[1]
    if n == 0:
        raise ValueError("grow_tree needs at least one row")

    cdef Py_ssize_t cap = 2 * max(1, n // min_leaf) + 3
    feat_arr = np.full(cap, -1, dtype=np.int64)
    thr_arr = np.full(cap, -1, dtype=np.int64)
    left_arr = np.full(cap, -1, dtype=np.int64)
    right_arr = np.full(cap, -1, dtype=np.int64)
    cnt_arr = np.zeros(cap, dtype=np.int64)
    sum_arr = np.zeros(cap)
    ssq_arr = np.zeros(cap)
    cdef long[::1] feat = feat_arr
    cdef long[::1] thr = thr_arr
    cdef long[::1] left = left_arr
    cdef long[::1] right = right_arr
    cdef long[::1] cnt = cnt_arr
    cdef double[::1] sums = sum_arr
    cdef double[::1] ssqs = ssq_arr

    cdef Py_ssize_t i, f, t, j
    cdef double yv
    cnt[0] = n
    for i in range(n):
        yv = y[i]
        sums[0] += yv
        ssqs[0] += yv * yv
    cdef Py_ssize_t n_nodes = 1

    # level state: row subsets kept in ascending original order
    cdef long[:, ::1] X_act = X.copy()
    cdef double[::1] y_act = y.copy()
    cdef long[::1] assign = np.zeros(n, dtype=np.int64)
    level_ids_arr = np.array([0], dtype=np.int64)
    cdef long[::1] level_ids = level_ids_arr
    cdef Py_ssize_t n_rows = n

    cdef Py_ssize_t k, n_thr, gid, n_children, pos, n_next
    cdef long idx, best_idx
    cdef double cl, sl, ql, cr, sr, qr, total, best_sse, node_sse, tol
    cdef double inf = np.inf
    cdef long[::1] hc
    cdef double[::1] hs
    cdef double[::1] hq
    cdef long[::1] best_f
    cdef long[::1] best_t
    cdef long[::1] do_split
    cdef long[::1] split_rank
    cdef long[:, ::1] Xn
    cdef double[::1] yn
    cdef long[::1] new_assign

    while level_ids.shape[0] > 0 and n_bins >= 2:
        k = level_ids.shape[0]
        n_thr = n_bins - 1

        hc = np.zeros(k * n_feat * n_bins, dtype=np.int64)
        hs = np.zeros(k * n_feat * n_bins)
        hq = np.zeros(k * n_feat * n_bins)
        for i in range(n_rows):
            yv = y_act[i]
            for f in range(n_feat):
                idx = (assign[i] * n_feat + f) * n_bins + X_act[i, f]
                hc[idx] += 1
                hs[idx] += yv
                hq[idx] += yv * yv
        # prefix sums over bins
        for j in range(k):
            for f in range(n_feat):
                idx = (j * n_feat + f) * n_bins
                for t in range(1, n_bins):
                    hc[idx + t] += hc[idx + t - 1]
                    hs[idx + t] += hs[idx + t - 1]
                    hq[idx + t] += hq[idx + t - 1]

        best_f = np.full(k, -1, dtype=np.int64)
        best_t = np.full(k, -1, dtype=np.int64)
        do_split = np.zeros(k, dtype=np.int64)
        split_rank = np.zeros(k, dtype=np.int64)

        n_children = 0
        for j in range(k):
            gid = level_ids[j]
            best_sse = inf
            best_idx = -1
            for f in range(n_feat):
                idx = (j * n_feat + f) * n_bins
                for t in range(n_thr):
                    cl = <double> hc[idx + t]
                    if cl < min_leaf:
                        continue
                    cr = <double> cnt[gid] - cl
                    if cr < min_leaf:
                        continue
                    sl = hs[idx + t]
                    ql = hq[idx + t]
                    sr = sums[gid] - sl
                    qr = ssqs[gid] - ql
                    total = (ql - sl * sl / cl) + (qr - sr * sr / cr)
                    if total < best_sse:
                        best_sse = total
                        best_idx = f * n_thr + t
            node_sse = ssqs[gid] - sums[gid] * sums[gid] / (<double> cnt[gid])
            tol = _SSE_TOL * max(1.0, ssqs[gid])
            if (
                cnt[gid] >= 2 * min_leaf
                and node_sse > tol
                and best_idx >= 0
                and best_sse < node_sse - tol
            ):
                do_split[j] = 1
                best_f[j] = best_idx // n_thr
                best_t[j] = best_idx % n_thr
                split_rank[j] = n_children // 2
                n_children += 2

        if n_children == 0:
            break

        # wire up parents; children take ids n_nodes .. n_nodes + n_children - 1
        for j in range(k):
            if do_split[j]:
                gid = level_ids[j]
                feat[gid] = best_f[j]
                thr[gid] = best_t[j]
                left[gid] = n_nodes + 2 * split_rank[j]
                right[gid] = n_nodes + 2 * split_rank[j] + 1

        # partition rows (stable: ascending row order preserved)
        n_next = 0
        for i in range(n_rows):
            if do_split[assign[i]]:
                n_next += 1
        Xn = np.empty((n_next, n_feat), dtype=np.int64)
        yn = np.empty(n_next)
        new_assign = np.empty(n_next, dtype=np.int64)
        pos = 0
        for i in range(n_rows):
            j = assign[i]
            if not do_split[j]:
                continue
            if X_act[i, best_f[j]] <= best_t[j]:
                idx = 2 * split_rank[j]
            else:
                idx = 2 * split_rank[j] + 1
            for f in range(n_feat):
                Xn[pos, f] = X_act[i, f]
            yv = y_act[i]
            yn[pos] = yv
            new_assign[pos] = idx
            gid = n_nodes + idx
            cnt[gid] += 1
            sums[gid] += yv
            ssqs[gid] += yv * yv
            pos += 1

        level_ids_arr = np.arange(n_nodes, n_nodes + n_children, dtype=np.int64)
        level_ids = level_ids_arr
        n_nodes += n_children
        X_act = Xn
        y_act = yn
        assign = new_assign
        n_rows = n_next

    value_arr = sum_arr[:n_nodes] / cnt_arr[:n_nodes]
    return (
        feat_arr[:n_nodes].copy(),
        thr_arr[:n_nodes].copy(),
        left_arr[:n_nodes].copy(),
        right_arr[:n_nodes].copy(),
        value_arr,
    )


def predict_tree(long[::1] feature, long[::1] threshold, long[::1] left,
                 long[::1] right, double[::1] value, long[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef long node
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out_arr
