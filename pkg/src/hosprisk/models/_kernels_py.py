"""NumPy fallback for the compiled tree kernels.

Same arithmetic, same evaluation order, same tie-breaking as ``_kernels.pyx``.
"""

import numpy as np

GINI = 0
MSE = 1


def best_split(X, y, w, idx, features, min_leaf, criterion):
    """Return ``(feature, threshold, score)``; feature is -1 if no valid split."""
    n = idx.shape[0]
    best_feature, best_threshold, best_score = -1, np.nan, -np.inf
    if n < 2 * min_leaf or n < 2:
        return best_feature, best_threshold, best_score

    y_node = y[idx]
    w_node = w[idx]
    wy_node = w_node * y_node
    lo, hi = min_leaf - 1, n - min_leaf
    for f in features:
        values = X[idx, f]
        order = np.argsort(values, kind="stable")
        xs = values[order]
        cw = np.cumsum(w_node[order])
        cp = np.cumsum(wy_node[order])
        wl = cw[lo:hi]
        pl = cp[lo:hi]
        wr = cw[-1] - wl
        pr = cp[-1] - pl
        if criterion == GINI:
            score = -(pl * (wl - pl) / wl + pr * (wr - pr) / wr)
        else:
            score = pl * pl / wl + pr * pr / wr
        score = np.where(xs[lo:hi] < xs[lo + 1 : hi + 1], score, -np.inf)
        if score.size == 0:
            continue
        i = int(np.argmax(score))
        if score[i] > best_score:
            best_score = float(score[i])
            best_feature = int(f)
            best_threshold = float(xs[lo + i])
    if best_feature < 0:
        return -1, np.nan, -np.inf
    return best_feature, best_threshold, best_score


def apply_tree(X, feature, threshold, left, right):
    """Leaf index reached by every row of ``X``."""
    node = np.zeros(X.shape[0], dtype=np.intp)
    rows = np.arange(X.shape[0])
    active = left[node] >= 0
    while active.any():
        r = rows[active]
        cur = node[active]
        go_left = X[r, feature[cur]] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
        active = left[node] >= 0
    return node
