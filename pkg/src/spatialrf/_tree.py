"""Compiled kernels for CART growth and traversal.

Trees are flat arrays: ``feature[i] < 0`` marks a leaf; otherwise rows with
``x[feature] <= threshold`` descend to ``left[i]``, the rest to ``right[i]``.
Leaf ``value`` rows hold the class distribution (classification) or the
mean response (regression, one column).
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


@njit(cache=True, nogil=True)
def splitmix_next(state):
    """Advance a one-element uint64 state array; return 64 random bits."""
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def rand_below(state, n):
    return np.int64(splitmix_next(state) % np.uint64(n))


@njit(cache=True, nogil=True)
def bootstrap_indices(state, n):
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = rand_below(state, n)
    return out


@njit(cache=True, nogil=True)
def grow_tree(X, y, classes, n_classes, sample, mtry, min_node_size, seed):
    """Grow one CART tree on the rows listed in ``sample`` (may repeat).

    ``n_classes == 0`` selects regression on ``y``; otherwise Gini splits on
    the integer labels in ``classes``. Returns the node arrays, the node
    count and the per-feature impurity decrease.

    Every feature keeps the node's sample positions in sorted order; a split
    stable-partitions these lists, so no sorting happens below the root.
    """
    n_features = X.shape[1]
    n = sample.shape[0]
    cap = 2 * n + 1
    width = n_classes if n_classes > 0 else 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, width))
    importance = np.zeros(n_features)

    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    perm = np.arange(n_features)
    cand = np.empty(mtry, dtype=np.int64)

    xs = np.empty((n_features, n))
    ys = np.empty(n)
    cs = np.empty(n, dtype=np.int64)
    for i in range(n):
        ys[i] = y[sample[i]]
        cs[i] = classes[sample[i]]
        for j in range(n_features):
            xs[j, i] = X[sample[i], j]
    order = np.empty((n_features, n), dtype=np.int64)
    for j in range(n_features):
        order[j] = np.argsort(xs[j], kind="mergesort")
    goes_left = np.zeros(n, dtype=np.bool_)
    buf = np.empty(n, dtype=np.int64)
    counts = np.zeros(width)
    left_counts = np.zeros(width)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        m = end - start
        rows = order[0]

        # node statistics
        pure = True
        if n_classes > 0:
            counts[:] = 0.0
            for i in range(start, end):
                counts[cs[rows[i]]] += 1.0
            sq = 0.0
            for k in range(width):
                sq += counts[k] * counts[k]
                if counts[k] > 0 and counts[k] < m:
                    pure = False
            parent = m - sq / m
            for k in range(width):
                value[node, k] = counts[k] / m
        else:
            s = 0.0
            ss = 0.0
            first = ys[rows[start]]
            for i in range(start, end):
                v = ys[rows[i]]
                s += v
                ss += v * v
                if v != first:
                    pure = False
            parent = ss - s * s / m
            value[node, 0] = s / m

        if pure or m <= min_node_size:
            continue

        # draw mtry candidate features without replacement
        for j in range(mtry):
            r = j + rand_below(state, n_features - j)
            tmp = perm[j]
            perm[j] = perm[r]
            perm[r] = tmp
        for j in range(mtry):
            cand[j] = perm[j]
        cand.sort()

        # scores within ``tol`` count as ties so that rounding in the running
        # sums cannot override the lower-feature, lower-threshold rule
        tol = 1e-10 * parent
        best_score = np.inf
        best_feature = -1
        best_threshold = 0.0
        for ci in range(mtry):
            f = cand[ci]
            fo = order[f]
            fx = xs[f]
            if fx[fo[start]] == fx[fo[end - 1]]:
                continue
            if n_classes > 0:
                left_counts[:] = 0.0
                sq_left = 0.0
                sq_right = sq
                for i in range(m - 1):
                    pos = fo[start + i]
                    k = cs[pos]
                    sq_left += 2.0 * left_counts[k] + 1.0
                    left_counts[k] += 1.0
                    sq_right -= 2.0 * (counts[k] - left_counts[k]) + 1.0
                    lo = fx[pos]
                    hi = fx[fo[start + i + 1]]
                    if lo < hi:
                        n_left = i + 1.0
                        n_right = m - n_left
                        score = (n_left - sq_left / n_left) + (n_right - sq_right / n_right)
                        if score < best_score - tol:
                            best_score = score
                            best_feature = f
                            t = 0.5 * (lo + hi)
                            if not t < hi:
                                t = lo
                            best_threshold = t
            else:
                s_left = 0.0
                ss_left = 0.0
                for i in range(m - 1):
                    pos = fo[start + i]
                    v = ys[pos]
                    s_left += v
                    ss_left += v * v
                    lo = fx[pos]
                    hi = fx[fo[start + i + 1]]
                    if lo < hi:
                        n_left = i + 1.0
                        n_right = m - n_left
                        s_right = s - s_left
                        ss_right = ss - ss_left
                        score = (ss_left - s_left * s_left / n_left) + (
                            ss_right - s_right * s_right / n_right
                        )
                        if score < best_score - tol:
                            best_score = score
                            best_feature = f
                            t = 0.5 * (lo + hi)
                            if not t < hi:
                                t = lo
                            best_threshold = t

        if best_feature < 0:
            continue

        gain = parent - best_score
        if gain > 0.0:
            importance[best_feature] += gain

        fx = xs[best_feature]
        n_left_rows = 0
        for i in range(start, end):
            pos = rows[i]
            goes_left[pos] = fx[pos] <= best_threshold
            if goes_left[pos]:
                n_left_rows += 1
        # stable partition of every feature's sorted list
        for j in range(n_features):
            fo = order[j]
            a = start
            b = 0
            for i in range(start, end):
                pos = fo[i]
                if goes_left[pos]:
                    fo[a] = pos
                    a += 1
                else:
                    buf[b] = pos
                    b += 1
            for i in range(b):
                fo[a + i] = buf[i]

        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        feature[node] = best_feature
        threshold[node] = best_threshold
        left[node] = lnode
        right[node] = rnode
        # push right first so the left subtree is expanded first
        stack_node[top] = rnode
        stack_start[top] = start + n_left_rows
        stack_end[top] = end
        top += 1
        stack_node[top] = lnode
        stack_start[top] = start
        stack_end[top] = start + n_left_rows
        top += 1

    return feature, threshold, left, right, value, n_nodes, importance


@njit(cache=True, nogil=True)
def apply_tree(feature, threshold, left, right, X):
    """Leaf index reached by every row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def leaf_votes(value):
    """Class index per node: argmax of the distribution, lowest index on ties."""
    n = value.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = 0
        for k in range(1, value.shape[1]):
            if value[i, k] > value[i, best]:
                best = k
        out[i] = best
    return out
