"""Compiled kernels for tree growing and evaluation.

Trees are grown level-wise over presorted feature columns: one global argsort
per feature, then per level a stable partition keeps each node's rows
contiguous in every feature's sorted order, so split search is a linear scan.
All randomness (bootstrap counts, per-node feature subsets) is drawn outside
with seeded numpy generators; the kernels are deterministic.
"""

from __future__ import annotations

import os

import numpy as np

if os.environ.get("ACSEL_NO_JIT"):
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
else:
    from numba import njit


@njit(cache=True)
def grow_tree(X, y, weights, order, feat_sets, max_depth, min_leaf):
    """Grow one weighted least-squares tree.

    X: (n, d) covariates; y: (n,) targets; weights: (n,) nonneg int counts
    (bootstrap multiplicity, 0 = out of bag); order: (d, n) rows sorted per
    feature; feat_sets: (max_nodes, k) candidate features per node.
    Returns (feature, threshold, left, right, value) flat arrays.
    """
    n, d = X.shape
    max_nodes = feat_sets.shape[0]
    k = feat_sets.shape[1]

    nb = 0
    for i in range(n):
        nb += weights[i]

    feat = np.full(max_nodes, -1, np.int64)
    thr = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    val = np.zeros(max_nodes)

    # per-feature sorted row slots, with bootstrap multiplicity expanded
    slots = np.empty((d, nb), np.int64)
    for f in range(d):
        pos = 0
        for t in range(n):
            r = order[f, t]
            for _ in range(weights[r]):
                slots[f, pos] = r
                pos += 1

    node_of = np.zeros(n, np.int64)
    node_start = np.zeros(max_nodes, np.int64)
    node_end = np.zeros(max_nodes, np.int64)
    node_depth = np.zeros(max_nodes, np.int64)
    node_sum = np.zeros(max_nodes)
    node_end[0] = nb
    wsum = 0.0
    for i in range(n):
        wsum += weights[i] * y[i]
    node_sum[0] = wsum

    n_nodes = 1
    level_lo = 0
    level_hi = 1
    buf = np.empty(nb, np.int64)

    while level_lo < level_hi:
        any_split = False
        for node in range(level_lo, level_hi):
            s, e = node_start[node], node_end[node]
            size = e - s
            tot = node_sum[node]
            val[node] = tot / size
            if node_depth[node] >= max_depth or size < 2 * min_leaf:
                continue
            best_gain = 1e-12
            best_f = -1
            best_t = 0.0
            base = tot * tot / size
            for fj in range(k):
                f = feat_sets[node, fj]
                lsum = 0.0
                prev = X[slots[f, s], f]
                for j in range(size - 1):
                    r = slots[f, s + j]
                    lsum += y[r]
                    cur = X[slots[f, s + j + 1], f]
                    if cur != prev:
                        cnt = j + 1
                        if cnt >= min_leaf and size - cnt >= min_leaf:
                            gain = lsum * lsum / cnt + (tot - lsum) ** 2 / (size - cnt) - base
                            if gain > best_gain:
                                best_gain = gain
                                best_f = f
                                best_t = 0.5 * (prev + cur)
                        prev = cur
            if best_f < 0 or n_nodes + 2 > max_nodes:
                continue
            lnode, rnode = n_nodes, n_nodes + 1
            n_nodes += 2
            feat[node] = best_f
            thr[node] = best_t
            left[node] = lnode
            right[node] = rnode
            lsum = 0.0
            lcnt = 0
            for j in range(s, e):
                r = slots[best_f, j]
                if X[r, best_f] <= best_t:
                    node_of[r] = lnode
                    lsum += y[r]
                    lcnt += 1
                else:
                    node_of[r] = rnode
            node_start[lnode] = s
            node_end[lnode] = s + lcnt
            node_start[rnode] = s + lcnt
            node_end[rnode] = e
            node_depth[lnode] = node_depth[node] + 1
            node_depth[rnode] = node_depth[node] + 1
            node_sum[lnode] = lsum
            node_sum[rnode] = tot - lsum
            any_split = True

        if not any_split:
            break
        # stable partition of every feature's slots within each split segment
        for f in range(d):
            for node in range(level_lo, level_hi):
                if feat[node] < 0:
                    continue
                s, e = node_start[node], node_end[node]
                lnode = left[node]
                nl = 0
                nr = node_end[lnode] - s
                for j in range(s, e):
                    r = slots[f, j]
                    if node_of[r] == lnode:
                        buf[nl] = r
                        nl += 1
                    else:
                        buf[nr] = r
                        nr += 1
                for j in range(e - s):
                    slots[f, s + j] = buf[j]
        level_lo = level_hi
        level_hi = n_nodes

    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], val[:n_nodes]


@njit(cache=True)
def predict_tree(feat, thr, left, right, val, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += val[node]


def warmup():
    """Trigger kernel compilation on a tiny problem."""
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    w = np.ones(4, np.int64)
    order = np.argsort(X[:, 0], kind="stable")[None, :]
    fs = np.zeros((3, 1), np.int64)
    tree = grow_tree(X, y, w, order, fs, 1, 1)
    out = np.zeros(4)
    predict_tree(*tree, X, out)
