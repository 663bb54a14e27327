"""numpy implementations of the hot kernels.

These define the arithmetic the Cython module must reproduce bit for bit:
every sum is a left-to-right accumulation (``np.add.accumulate``/``cumsum``,
never ``np.sum``), and every expression keeps the same operation order.
"""
import numpy as np


def iou_matrix(a, b):
    """Pairwise IoU of center-size boxes ``a`` (P, 4) and ``b`` (G, 4)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax1 = a[:, 0] - a[:, 2] / 2.0
    ay1 = a[:, 1] - a[:, 3] / 2.0
    ax2 = a[:, 0] + a[:, 2] / 2.0
    ay2 = a[:, 1] + a[:, 3] / 2.0
    bx1 = b[:, 0] - b[:, 2] / 2.0
    by1 = b[:, 1] - b[:, 3] / 2.0
    bx2 = b[:, 0] + b[:, 2] / 2.0
    by2 = b[:, 1] + b[:, 3] / 2.0
    iw = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(ax1[:, None], bx1[None, :])
    ih = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(ay1[:, None], by1[None, :])
    hit = (iw > 0.0) & (ih > 0.0)
    inter = np.where(hit, iw * ih, 0.0)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=hit)
    # corner rounding can push identical boxes a few ulps past 1
    np.minimum(out, 1.0, out=out)
    return out


def greedy_match(ious, iou_threshold):
    """Greedy assignment of confidence-sorted predictions (rows) to ground truths (columns).

    Returns the matched column per row, or -1 for a false positive.
    """
    ious = np.asarray(ious, dtype=np.float64)
    n_pred, n_gt = ious.shape
    taken = np.zeros(n_gt, dtype=bool)
    out = np.full(n_pred, -1, dtype=np.int64)
    for i in range(n_pred):
        best, best_j = -1.0, -1
        row = ious[i]
        for j in range(n_gt):
            if not taken[j] and row[j] >= iou_threshold and row[j] > best:
                best, best_j = row[j], j
        if best_j >= 0:
            taken[best_j] = True
            out[i] = best_j
    return out


def best_split(X, r, order, in_node, min_samples_leaf, min_gain):
    """Exact greedy variance-reduction split over the rows flagged in ``in_node``.

    ``order[f]`` lists all row indices sorted by feature ``f``. Returns
    ``(feature, threshold, gain)``; feature is -1 when no split beats ``min_gain``.
    Ties go to the lowest feature index, then the lowest threshold.
    """
    n_features = X.shape[1]
    best_f, best_t, best_gain = -1, 0.0, float(min_gain)
    for f in range(n_features):
        rows = order[f][in_node[order[f]].astype(bool)]
        m = rows.shape[0]
        if m < 2 * min_samples_leaf or m < 2:
            return -1, 0.0, 0.0
        v = X[rows, f]
        cs = np.cumsum(r[rows])
        total = cs[-1]
        parent = total * total / m
        i = np.arange(min_samples_leaf - 1, m - min_samples_leaf)
        if i.size == 0:
            continue
        nl = (i + 1).astype(np.float64)
        nr = m - nl
        sl = cs[i]
        sr = total - sl
        gain = sl * sl / nl + sr * sr / nr - parent
        gain = np.where(v[i] < v[i + 1], gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best_gain:
            lo, hi = v[i[k]], v[i[k] + 1]
            t = (lo + hi) * 0.5
            if t >= hi:
                t = lo
            best_f, best_t, best_gain = f, float(t), float(gain[k])
    return best_f, best_t, best_gain


def predict_raw(X, feature, threshold, left, right, value, roots, base_score, learning_rate):
    """Raw ensemble score ``base + lr*t1(x) + lr*t2(x) + ...`` accumulated in stage order."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    n_trees = roots.shape[0]
    if n_trees == 0:
        return np.full(n, float(base_score))
    node = np.broadcast_to(roots, (n, n_trees)).copy()
    rows = np.arange(n)[:, None]
    while True:
        internal = left[node] >= 0
        if not internal.any():
            break
        f = np.where(internal, feature[node], 0)
        go_left = X[rows, f] <= threshold[node]
        node = np.where(internal, np.where(go_left, left[node], right[node]), node)
    acc = np.empty((n, n_trees + 1))
    acc[:, 0] = base_score
    acc[:, 1:] = learning_rate * value[node]
    return np.add.accumulate(acc, axis=1)[:, -1].copy()
