"""Numpy implementations of the numeric kernels.

This is the fallback backend; `skycount._kernels._ckernels` is the compiled
twin. Both must produce bit-identical output, so every accumulation here is
sequential in row order (``np.bincount`` / ``np.cumsum``, never ``np.sum``,
which uses pairwise summation) and tree nodes are laid out in BFS order with
children appended left-then-right.
"""

import numpy as np

BACKEND = "python"

# Relative tolerance used both for the node-purity check and for requiring a
# strict SSE improvement before splitting.
_SSE_TOL = 1e-12


def polyline_min_dist(points, vertices):
    """Min distance from each point to a polyline (zero-length segments skipped).

    points: (N, 2) float64, vertices: (M, 2) float64 with M >= 2.
    Returns (N,) float64.
    """
    a = vertices[:-1]
    d = vertices[1:] - a
    seg_len2 = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]
    valid = seg_len2 > 0.0
    if not valid.any():
        dx = points[:, 0] - vertices[0, 0]
        dy = points[:, 1] - vertices[0, 1]
        return np.sqrt(dx * dx + dy * dy)
    a = a[valid]
    d = d[valid]
    seg_len2 = seg_len2[valid]

    px = points[:, 0][:, None] - a[:, 0][None, :]
    py = points[:, 1][:, None] - a[:, 1][None, :]
    t = (px * d[:, 0] + py * d[:, 1]) / seg_len2
    t = np.clip(t, 0.0, 1.0)
    dx = px - t * d[:, 0]
    dy = py - t * d[:, 1]
    d2 = dx * dx + dy * dy
    return np.sqrt(d2.min(axis=1))


def iou_matrix(rects_a, rects_b):
    """Pairwise IoU of axis-aligned rectangles given as (xmin, ymin, xmax, ymax).

    rects_a: (N, 4), rects_b: (M, 4). Returns (N, M) float64; disjoint or
    zero-union pairs give 0.
    """
    ax0 = rects_a[:, 0][:, None]
    ay0 = rects_a[:, 1][:, None]
    ax1 = rects_a[:, 2][:, None]
    ay1 = rects_a[:, 3][:, None]
    bx0 = rects_b[:, 0][None, :]
    by0 = rects_b[:, 1][None, :]
    bx1 = rects_b[:, 2][None, :]
    by1 = rects_b[:, 3][None, :]

    iw = np.minimum(ax1, bx1) - np.maximum(ax0, bx0)
    ih = np.minimum(ay1, by1) - np.maximum(ay0, by0)
    inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0.0, inter / union, 0.0)
    return iou


def grow_tree(X, y, n_bins, min_leaf):
    """Grow a CART regression tree on small-integer features.

    X: (n, n_feat) int64 with values in [0, n_bins); y: (n,) float64.
    Split criterion: minimal child SSE, both children >= min_leaf rows,
    strict improvement over the node SSE required. Candidate thresholds are
    scanned feature-major then bin-ascending; first minimum wins.

    Returns (feature, threshold, left, right, value) int64/float64 arrays in
    BFS node order; feature == -1 marks a leaf.
    """
    n, n_feat = X.shape
    if n == 0:
        raise ValueError("grow_tree needs at least one row")

    feat_l = [-1]
    thr_l = [-1]
    left_l = [-1]
    right_l = [-1]
    cnt_l = [n]
    sum_l = [float(np.bincount(np.zeros(n, dtype=np.int64), weights=y, minlength=1)[0])]
    ssq_l = [float(np.bincount(np.zeros(n, dtype=np.int64), weights=y * y, minlength=1)[0])]

    # active level state: rows kept in ascending original order
    X_act = X
    y_act = y
    assign = np.zeros(n, dtype=np.int64)  # local node index within the level
    level_ids = np.array([0], dtype=np.int64)  # global ids of the level's nodes

    while level_ids.size and n_bins >= 2:
        k = level_ids.size
        node_cnt = np.array([cnt_l[i] for i in level_ids], dtype=np.int64)
        node_sum = np.array([sum_l[i] for i in level_ids])
        node_ssq = np.array([ssq_l[i] for i in level_ids])

        yy_act = y_act * y_act
        base = assign * n_bins
        ccnt = np.empty((k, n_feat, n_bins))
        csum = np.empty((k, n_feat, n_bins))
        cssq = np.empty((k, n_feat, n_bins))
        for f in range(n_feat):
            combo = base + X_act[:, f]
            c = np.bincount(combo, minlength=k * n_bins).reshape(k, n_bins)
            s = np.bincount(combo, weights=y_act, minlength=k * n_bins).reshape(k, n_bins)
            q = np.bincount(combo, weights=yy_act, minlength=k * n_bins).reshape(k, n_bins)
            ccnt[:, f] = np.cumsum(c, axis=1)
            csum[:, f] = np.cumsum(s, axis=1)
            cssq[:, f] = np.cumsum(q, axis=1)

        cl = ccnt[:, :, :-1]
        sl = csum[:, :, :-1]
        ql = cssq[:, :, :-1]
        cr = node_cnt[:, None, None] - cl
        sr = node_sum[:, None, None] - sl
        qr = node_ssq[:, None, None] - ql
        admissible = (cl >= min_leaf) & (cr >= min_leaf)
        with np.errstate(divide="ignore", invalid="ignore"):
            total = (ql - sl * sl / cl) + (qr - sr * sr / cr)
        total = np.where(admissible, total, np.inf)

        flat = total.reshape(k, -1)
        best_idx = np.argmin(flat, axis=1)
        best_sse = flat[np.arange(k), best_idx]
        node_sse = node_ssq - node_sum * node_sum / node_cnt
        tol = _SSE_TOL * np.maximum(1.0, node_ssq)
        do_split = (
            (node_cnt >= 2 * min_leaf)
            & (node_sse > tol)
            & np.isfinite(best_sse)
            & (best_sse < node_sse - tol)
        )

        if not do_split.any():
            break

        n_thr = n_bins - 1
        best_f = best_idx // n_thr
        best_t = best_idx % n_thr

        # allocate children in level order, left then right
        split_rank = np.cumsum(do_split) - 1
        n_before = len(feat_l)
        split_ids = np.nonzero(do_split)[0]
        for j in split_ids:
            gid = int(level_ids[j])
            feat_l[gid] = int(best_f[j])
            thr_l[gid] = int(best_t[j])
            left_l[gid] = n_before + 2 * int(split_rank[j])
            right_l[gid] = n_before + 2 * int(split_rank[j]) + 1

        row_split = do_split[assign]
        Xn = X_act[row_split]
        yn = y_act[row_split]
        old_local = assign[row_split]
        f_rows = best_f[old_local]
        goes_left = Xn[np.arange(Xn.shape[0]), f_rows] <= best_t[old_local]
        child_local = 2 * split_rank[old_local] + np.where(goes_left, 0, 1)

        n_children = 2 * int(do_split.sum())
        ch_cnt = np.bincount(child_local, minlength=n_children)
        ch_sum = np.bincount(child_local, weights=yn, minlength=n_children)
        ch_ssq = np.bincount(child_local, weights=yn * yn, minlength=n_children)
        for c in range(n_children):
            feat_l.append(-1)
            thr_l.append(-1)
            left_l.append(-1)
            right_l.append(-1)
            cnt_l.append(int(ch_cnt[c]))
            sum_l.append(float(ch_sum[c]))
            ssq_l.append(float(ch_ssq[c]))

        X_act = Xn
        y_act = yn
        assign = child_local
        level_ids = np.arange(n_before, n_before + n_children, dtype=np.int64)

    value = np.array(sum_l) / np.array(cnt_l)
    return (
        np.array(feat_l, dtype=np.int64),
        np.array(thr_l, dtype=np.int64),
        np.array(left_l, dtype=np.int64),
        np.array(right_l, dtype=np.int64),
        value,
    )


def predict_tree(feature, threshold, left, right, value, X):
    """Evaluate a grown tree on X ((n, n_feat) int64). Returns (n,) float64."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.nonzero(feature[node] >= 0)[0]
    while rows.size:
        cur = node[rows]
        go_left = X[rows, feature[cur]] <= threshold[cur]
        node[rows] = np.where(go_left, left[cur], right[cur])
        rows = rows[feature[node[rows]] >= 0]
    return value[node]
