"""Independent reference implementations used as test oracles.

Plain Python, no numpy, and no imports of the code paths they check.
"""
import math


def corners(box):
    cx, cy, w, h = box
    return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2


def iou_ref(a, b):
    ax1, ay1, ax2, ay2 = corners(a)
    bx1, by1, bx2, by2 = corners(b)
    inter = max(0.0, min(ax2, bx2) - max(ax1, bx1)) * max(0.0, min(ay2, by2) - max(ay1, by1))
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union


def _partial_injections(n_pred, n_gt):
    """Every assignment pred -> gt-or-None that uses each gt at most once."""
    def extend(prefix, used):
        if len(prefix) == n_pred:
            yield tuple(prefix)
            return
        for g in [None] + [j for j in range(n_gt) if j not in used]:
            yield from extend(prefix + [g], used | ({g} if g is not None else set()))

    yield from extend([], frozenset())


def _obeys_greedy_rule(assign, ious, thr):
    claimed = set()
    for i, g in enumerate(assign):
        open_hits = [(ious[i][j], -j) for j in range(len(ious[i])) if j not in claimed and ious[i][j] >= thr]
        if not open_hits:
            if g is not None:
                return False
            continue
        _, neg_j = max(open_hits)
        if g != -neg_j:
            return False
        claimed.add(g)
    return True


def brute_force_match(pred_boxes, pred_confs, gt_boxes, thr):
    """Enumerate every assignment and keep the one satisfying the greedy rule.

    Predictions are visited by descending confidence, ties by input index.
    Returns ``{pred_index: gt_index or None}`` in original indices.
    """
    order = sorted(range(len(pred_boxes)), key=lambda i: (-pred_confs[i], i))
    ious = [[iou_ref(pred_boxes[i], g) for g in gt_boxes] for i in order]
    valid = [a for a in _partial_injections(len(order), len(gt_boxes)) if _obeys_greedy_rule(a, ious, thr)]
    assert len(valid) == 1, f"expected exactly one greedy-consistent assignment, found {len(valid)}"
    return {order[k]: g for k, g in enumerate(valid[0])}


def ap_101_ref(flags, total_gt, points=101):
    """Max precision at recall >= r, averaged over r = 0, 1/(points-1), ..., 1."""
    prs = []
    tp = fp = 0
    for f in flags:
        tp += bool(f)
        fp += not f
        prs.append((tp / total_gt, tp / (tp + fp)))
    total = 0.0
    for k in range(points):
        r = k / (points - 1)
        best = 0.0
        for rec, prec in prs:
            if rec >= r and prec > best:
                best = prec
        total += best
    return total / points


def ap_allpoints_ref(flags, total_gt):
    prs = []
    tp = fp = 0
    for f in flags:
        tp += bool(f)
        fp += not f
        prs.append((tp / total_gt, tp / (tp + fp)))
    area, prev_r = 0.0, 0.0
    for k, (rec, _) in enumerate(prs):
        env = max(p for _, p in prs[k:])
        area += (rec - prev_r) * env
        prev_r = rec
    return area


def reference_evaluate(gt_frames, pred_frames, classes, iou_thr=0.5, conf_thr=0.001, max_det=300):
    """From-scratch evaluator over plain dict scenes.

    Frames: ``{frame_id: {"gt": [(box, cls)], "pred": [(box, cls, conf)]}}`` merged from both inputs.
    Returns ``{cls: ap or None}`` and the mean over classes with ground truth.
    """
    per_class_entries = {c: [] for c in classes}
    n_gt = {c: 0 for c in classes}
    for fid in sorted(gt_frames):
        gts = gt_frames[fid]
        preds = [(i, p) for i, p in enumerate(pred_frames[fid]) if p[2] >= conf_thr]
        preds.sort(key=lambda t: (-t[1][2], t[0]))
        preds = preds[:max_det]
        for c in classes:
            cg = [g[0] for g in gts if g[1] == c]
            n_gt[c] += len(cg)
            cp = [(i, p) for i, p in preds if p[1] == c]
            if not cp:
                continue
            m = brute_force_match([p[0] for _, p in cp], [p[2] for _, p in cp], cg, iou_thr) if cg else {}
            for k, (i, p) in enumerate(cp):
                per_class_entries[c].append((-p[2], fid, i, m.get(k) is not None))
    aps = {}
    for c in classes:
        entries = sorted(per_class_entries[c])
        aps[c] = ap_101_ref([e[3] for e in entries], n_gt[c]) if n_gt[c] else None
    scored = [v for v in aps.values() if v is not None]
    return aps, (sum(scored) / len(scored) if scored else None)


# --- boosting ---------------------------------------------------------------

def _sse(vals):
    if not vals:
        return 0.0
    mean = sum(vals) / len(vals)
    return sum((v - mean) ** 2 for v in vals)


def best_stump_ref(X, r, rows, min_leaf=1, min_gain=1e-12):
    """Exhaustive (feature, threshold) search by direct SSE reduction; first best wins."""
    parent = _sse([r[i] for i in rows])
    best = None
    for f in range(len(X[0])):
        values = sorted({X[i][f] for i in rows})
        for lo, hi in zip(values, values[1:]):
            t = (lo + hi) * 0.5
            if t >= hi:
                t = lo
            left = [i for i in rows if X[i][f] <= t]
            right = [i for i in rows if X[i][f] > t]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            gain = parent - _sse([r[i] for i in left]) - _sse([r[i] for i in right])
            if gain > min_gain and (best is None or gain > best[2] + 1e-12):
                best = (f, t, gain)
    return best


def _grow(X, r, h, rows, depth, max_depth):
    if depth < max_depth:
        split = best_stump_ref(X, r, rows)
        if split is not None:
            f, t, _ = split
            return ("split", f, t,
                    _grow(X, r, h, [i for i in rows if X[i][f] <= t], depth + 1, max_depth),
                    _grow(X, r, h, [i for i in rows if X[i][f] > t], depth + 1, max_depth))
    num = sum(r[i] for i in rows)
    den = max(sum(h[i] for i in rows), 1e-12)
    return ("leaf", num / den)


def _tree_out(node, x):
    while node[0] == "split":
        node = node[3] if x[node[1]] <= node[2] else node[4]
    return node[1]


def naive_boost(X, y, stages, max_depth, lr):
    """Logistic boosting with Newton leaves; returns (base, trees)."""
    n = len(y)
    pbar = min(max(sum(y) / n, 1e-6), 1 - 1e-6)
    base = math.log(pbar / (1 - pbar))
    F = [base] * n
    trees = []
    for _ in range(stages):
        p = [1 / (1 + math.exp(-f)) for f in F]
        r = [y[i] - p[i] for i in range(n)]
        h = [p[i] * (1 - p[i]) for i in range(n)]
        tree = _grow(X, r, h, list(range(n)), 0, max_depth)
        trees.append(tree)
        F = [F[i] + lr * _tree_out(tree, X[i]) for i in range(n)]
    return base, trees


def naive_proba(base, trees, lr, x):
    F = base + sum(lr * _tree_out(t, x) for t in trees)
    return 1 / (1 + math.exp(-F))
