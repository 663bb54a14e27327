# cython: language_level=3
"""Compiled versions of the kernels in ``_pykernels``.

Arithmetic mirrors the numpy code operation for operation so both backends
return identical bits.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def iou_matrix(a, b):
    cdef const double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    cdef const double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t P = A.shape[0], G = B.shape[0], i, j
    out = np.zeros((P, G), dtype=np.float64)
    cdef double[:, ::1] O = out
    cdef double ax1, ay1, ax2, ay2, bx1, by1, bx2, by2, iw, ih, inter, area_a, v
    for i in range(P):
        ax1 = A[i, 0] - A[i, 2] / 2.0
        ay1 = A[i, 1] - A[i, 3] / 2.0
        ax2 = A[i, 0] + A[i, 2] / 2.0
        ay2 = A[i, 1] + A[i, 3] / 2.0
        area_a = A[i, 2] * A[i, 3]
        for j in range(G):
            bx1 = B[j, 0] - B[j, 2] / 2.0
            by1 = B[j, 1] - B[j, 3] / 2.0
            bx2 = B[j, 0] + B[j, 2] / 2.0
            by2 = B[j, 1] + B[j, 3] / 2.0
            iw = (ax2 if ax2 < bx2 else bx2) - (ax1 if ax1 > bx1 else bx1)
            ih = (ay2 if ay2 < by2 else by2) - (ay1 if ay1 > by1 else by1)
            if iw > 0.0 and ih > 0.0:
                inter = iw * ih
                v = inter / (area_a + B[j, 2] * B[j, 3] - inter)
                O[i, j] = v if v < 1.0 else 1.0
    return out


def greedy_match(ious, double iou_threshold):
    cdef const double[:, ::1] M = np.ascontiguousarray(ious, dtype=np.float64)
    cdef Py_ssize_t P = M.shape[0], G = M.shape[1], i, j, best_j
    cdef double best
    out = np.full(P, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] O = out
    taken_arr = np.zeros(G, dtype=np.uint8)
    cdef cnp.uint8_t[::1] taken = taken_arr
    for i in range(P):
        best = -1.0
        best_j = -1
        for j in range(G):
            if not taken[j] and M[i, j] >= iou_threshold and M[i, j] > best:
                best = M[i, j]
                best_j = j
        if best_j >= 0:
            taken[best_j] = 1
            O[i] = best_j
    return out


def best_split(X, r, order, in_node, Py_ssize_t min_samples_leaf, double min_gain):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] ov = np.ascontiguousarray(order, dtype=np.int64)
    cdef const cnp.uint8_t[::1] mask = np.ascontiguousarray(in_node, dtype=np.uint8)
    cdef Py_ssize_t n = Xv.shape[0], F = Xv.shape[1], f, k, m, i, row
    cdef Py_ssize_t best_f = -1
    cdef double best_t = 0.0, best_gain = min_gain
    cdef double total, parent, sl, sr, nl, nr, gain, lo, hi, t

    m = 0
    for k in range(n):
        if mask[k]:
            m += 1
    if m < 2 * min_samples_leaf or m < 2:
        return -1, 0.0, 0.0

    rows_arr = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] rows = rows_arr
    for f in range(F):
        i = 0
        for k in range(n):
            row = ov[f, k]
            if mask[row]:
                rows[i] = row
                i += 1
        # prefix sums in sorted order, same order as np.cumsum
        total = 0.0
        for i in range(m):
            total = total + rv[rows[i]]
        parent = total * total / m
        sl = 0.0
        for i in range(m - min_samples_leaf):
            sl = sl + rv[rows[i]]
            if i < min_samples_leaf - 1:
                continue
            lo = Xv[rows[i], f]
            hi = Xv[rows[i + 1], f]
            if not lo < hi:
                continue
            nl = <double>(i + 1)
            nr = m - nl
            sr = total - sl
            gain = sl * sl / nl + sr * sr / nr - parent
            if gain > best_gain:
                t = (lo + hi) * 0.5
                if t >= hi:
                    t = lo
                best_f = f
                best_t = t
                best_gain = gain
    return best_f, best_t, best_gain


def predict_raw(X, feature, threshold, left, right, value, roots, double base_score, double learning_rate):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const cnp.int64_t[::1] fv = np.ascontiguousarray(feature, dtype=np.int64)
    cdef const double[::1] tv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const cnp.int64_t[::1] lv = np.ascontiguousarray(left, dtype=np.int64)
    cdef const cnp.int64_t[::1] rv = np.ascontiguousarray(right, dtype=np.int64)
    cdef const double[::1] vv = np.ascontiguousarray(value, dtype=np.float64)
    cdef const cnp.int64_t[::1] roots_v = np.ascontiguousarray(roots, dtype=np.int64)
    cdef Py_ssize_t n = Xv.shape[0], T = roots_v.shape[0], i, t, node
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] O = out
    cdef double acc
    for i in range(n):
        acc = base_score
        for t in range(T):
            node = roots_v[t]
            while lv[node] >= 0:
                if Xv[i, fv[node]] <= tv[node]:
                    node = lv[node]
                else:
                    node = rv[node]
            acc = acc + learning_rate * vv[node]
        O[i] = acc
    return out
