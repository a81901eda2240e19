"""Numba kernels for exhaustive-split CART regression trees.

Candidate thresholds are midpoints between consecutive distinct sorted
values of each feature; the split minimizing total child squared error
wins. Near-ties (within 1e-9 relative) are resolved toward the lowest
feature index, then the lowest threshold, by scanning features and
positions in ascending order and only replacing the incumbent on a
clear improvement.
"""

import numpy as np
from numba import njit

TIE_REL_TOL = 1e-9

_LCG_MULT = np.uint64(6364136223846793005)
_LCG_ADD = np.uint64(1442695040888963407)


@njit(cache=True, nogil=True)
def build_tree(x, y, sorted_idx, min_samples_split, min_samples_leaf, max_depth, max_features, lcg):
    """Grow one tree; returns (feature, threshold, left, right, value, n_nodes).

    x: (n, d) float64; y: (n,) float64; sorted_idx: (d, n) int32 where row f
    holds sample indices sorted by feature f. sorted_idx is clobbered.
    max_depth < 0 means unlimited; lcg is a 1-element uint64 state used only
    when max_features < d.
    """
    n, d = x.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    value = np.zeros(cap, np.float64)

    stack_node = np.empty(cap, np.int32)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    tmp = np.empty(n, np.int32)
    feat_pool = np.empty(d, np.int32)

    n_nodes = 1
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0

    while top >= 0:
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        top -= 1
        m = end - start

        row0 = sorted_idx[0]
        s = 0.0
        s2 = 0.0
        ymin = y[row0[start]]
        ymax = ymin
        for j in range(start, end):
            yi = y[row0[j]]
            s += yi
            s2 += yi * yi
            if yi < ymin:
                ymin = yi
            if yi > ymax:
                ymax = yi
        pure = ymax == ymin

        best_f = -1
        best_thr = 0.0
        best_sse = np.inf
        splittable = (
            m >= min_samples_split
            and not pure
            and (max_depth < 0 or depth < max_depth)
        )
        if splittable:
            if max_features >= d:
                n_feats = d
                for f in range(d):
                    feat_pool[f] = f
            else:
                for f in range(d):
                    feat_pool[f] = f
                for k in range(max_features):
                    lcg[0] = lcg[0] * _LCG_MULT + _LCG_ADD
                    r = k + np.int64(lcg[0] >> np.uint64(33)) % (d - k)
                    swap = feat_pool[k]
                    feat_pool[k] = feat_pool[r]
                    feat_pool[r] = swap
                n_feats = max_features
                for a in range(1, n_feats):  # evaluate subset in ascending order
                    key = feat_pool[a]
                    b = a - 1
                    while b >= 0 and feat_pool[b] > key:
                        feat_pool[b + 1] = feat_pool[b]
                        b -= 1
                    feat_pool[b + 1] = key

            for fi in range(n_feats):
                f = feat_pool[fi]
                row = sorted_idx[f]
                sl = 0.0
                s2l = 0.0
                for j in range(start, end - 1):
                    i = row[j]
                    yi = y[i]
                    sl += yi
                    s2l += yi * yi
                    xc = x[i, f]
                    xn = x[row[j + 1], f]
                    if xn <= xc:
                        continue
                    nl = j - start + 1
                    nr = m - nl
                    if nl < min_samples_leaf or nr < min_samples_leaf:
                        continue
                    ssel = s2l - sl * sl / nl
                    sser = (s2 - s2l) - (s - sl) * (s - sl) / nr
                    if ssel < 0.0:
                        ssel = 0.0
                    if sser < 0.0:
                        sser = 0.0
                    total = ssel + sser
                    if best_f < 0 or best_sse - total > TIE_REL_TOL * max(1.0, best_sse):
                        best_sse = total
                        best_f = f
                        best_thr = 0.5 * (xc + xn)

        if best_f < 0:
            feature[node] = -1
            value[node] = y[row0[start]] if pure else s / m
            continue

        n_left = 0
        for j in range(start, end):
            if x[row0[j], best_f] <= best_thr:
                n_left += 1
        for f in range(d):
            row = sorted_idx[f]
            for j in range(m):
                tmp[j] = row[start + j]
            k = start
            for j in range(m):
                i = tmp[j]
                if x[i, best_f] <= best_thr:
                    row[k] = i
                    k += 1
            for j in range(m):
                i = tmp[j]
                if x[i, best_f] > best_thr:
                    row[k] = i
                    k += 1

        feature[node] = best_f
        threshold[node] = best_thr
        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        left[node] = left_id
        right[node] = right_id
        top += 1
        stack_node[top] = left_id
        stack_start[top] = start
        stack_end[top] = start + n_left
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = right_id
        stack_start[top] = start + n_left
        stack_end[top] = end
        stack_depth[top] = depth + 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def predict_tree(x, feature, threshold, left, right, value, out):
    for srow in range(x.shape[0]):
        node = 0
        while feature[node] >= 0:
            if x[srow, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[srow] = value[node]
