"""Compiled CART growing and routing kernels.

Trees are stored as flat node arrays. ``feature[k] == -1`` marks a leaf.
For a numeric split, rows go left iff ``x <= threshold``; for a categorical
one-vs-rest split ``threshold`` holds a level code and rows go left iff
``x == threshold``.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _splitmix(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def _randbelow(state, bound):
    u = np.float64(_splitmix(state) >> _S11) * _INV53
    k = np.int64(u * bound)
    return k if k < bound else bound - 1


@njit(cache=True)
def _draw_features(state, p, mtry):
    perm = np.arange(p)
    for i in range(mtry):
        j = i + _randbelow(state, p - i)
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
    return np.sort(perm[:mtry])


@njit(cache=True)
def _score(sum_l, sq_l, n_l, sum_r, sq_r, n_r):
    # larger is better: sum_l^2/n_l + sum_r^2/n_r (regression) or the
    # class-count analogue (Gini); child impurity = const - score
    return sum_l * sum_l / n_l + sum_r * sum_r / n_r


TIE_TOL = 1e-12


@njit(cache=True)
def _better(s, best, have):
    # scores are >= 0; a candidate must beat the incumbent by a relative
    # margin so rounding noise cannot overturn the scan-order tie-break
    return (not have) or s > best + TIE_TOL * best


@njit(cache=True, nogil=True)
def grow_tree(X, y, is_cat, n_levels, n_classes, boot, mtry, min_node_size, rng_seed):
    """Grow one CART tree on the bootstrap multiset ``boot``.

    Returns (feature, threshold, left, right, value, leaf_start, leaf_end,
    members). ``members[leaf_start[k]:leaf_end[k]]`` lists the training row
    ids (with multiplicity) that fell into leaf ``k``.
    """
    p = X.shape[1]
    m_total = boot.shape[0]
    max_nodes = 2 * m_total + 1
    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes, np.float64)
    leaf_start = np.zeros(max_nodes, np.int64)
    leaf_end = np.zeros(max_nodes, np.int64)

    samples = boot.copy()
    buf = np.empty(m_total, np.int64)
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(rng_seed)

    max_lv = 1
    for f in range(p):
        if is_cat[f] and n_levels[f] > max_lv:
            max_lv = n_levels[f]
    k_cls = n_classes if n_classes > 0 else 1
    lv_count = np.zeros(max_lv, np.float64)
    lv_sum = np.zeros(max_lv, np.float64)
    lv_cls = np.zeros((max_lv, k_cls), np.float64)
    cls_l = np.zeros(k_cls, np.float64)
    cls_tot = np.zeros(k_cls, np.float64)
    vals = np.empty(m_total, np.float64)

    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = m_total
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        m = hi - lo

        # node statistics
        total = 0.0
        if n_classes > 0:
            cls_tot[:] = 0.0
            for i in range(lo, hi):
                cls_tot[np.int64(y[samples[i]])] += 1.0
            best_c = 0
            n_present = 0
            for c in range(n_classes):
                if cls_tot[c] > cls_tot[best_c]:
                    best_c = c
                if cls_tot[c] > 0:
                    n_present += 1
            value[node] = best_c
            pure = n_present <= 1
        else:
            ymin = y[samples[lo]]
            ymax = ymin
            for i in range(lo, hi):
                v = y[samples[i]]
                total += v
                if v < ymin:
                    ymin = v
                if v > ymax:
                    ymax = v
            value[node] = total / m
            pure = ymin == ymax

        best_f = -1
        best_t = 0.0
        best_score = -np.inf
        if m >= 2 * min_node_size and not pure:
            feats = _draw_features(state, p, mtry)
            for fi in range(feats.shape[0]):
                f = feats[fi]
                if is_cat[f]:
                    nl = n_levels[f]
                    lv_count[:nl] = 0.0
                    if n_classes > 0:
                        lv_cls[:nl, :] = 0.0
                    else:
                        lv_sum[:nl] = 0.0
                    for i in range(lo, hi):
                        r = samples[i]
                        code = np.int64(X[r, f])
                        if code >= nl:
                            continue
                        lv_count[code] += 1.0
                        if n_classes > 0:
                            lv_cls[code, np.int64(y[r])] += 1.0
                        else:
                            lv_sum[code] += y[r]
                    for code in range(nl):
                        n_l = lv_count[code]
                        n_r = m - n_l
                        if n_l < min_node_size or n_r < min_node_size or n_l == 0 or n_r == 0:
                            continue
                        if n_classes > 0:
                            s = 0.0
                            for c in range(n_classes):
                                a = lv_cls[code, c]
                                b = cls_tot[c] - a
                                s += a * a / n_l + b * b / n_r
                        else:
                            a = lv_sum[code]
                            s = _score(a, 0.0, n_l, total - a, 0.0, n_r)
                        if _better(s, best_score, best_f >= 0):
                            best_score = s
                            best_f = f
                            best_t = np.float64(code)
                else:
                    for i in range(m):
                        vals[i] = X[samples[lo + i], f]
                    order = np.argsort(vals[:m], kind="mergesort")
                    if vals[order[0]] == vals[order[m - 1]]:
                        continue
                    sum_l = 0.0
                    if n_classes > 0:
                        cls_l[:] = 0.0
                    for i in range(m - 1):
                        r = samples[lo + order[i]]
                        if n_classes > 0:
                            cls_l[np.int64(y[r])] += 1.0
                        else:
                            sum_l += y[r]
                        n_l = i + 1
                        n_r = m - n_l
                        a_v = vals[order[i]]
                        b_v = vals[order[i + 1]]
                        if a_v == b_v or n_l < min_node_size or n_r < min_node_size:
                            continue
                        if n_classes > 0:
                            s = 0.0
                            for c in range(n_classes):
                                a = cls_l[c]
                                b = cls_tot[c] - a
                                s += a * a / n_l + b * b / n_r
                        else:
                            s = _score(sum_l, 0.0, n_l, total - sum_l, 0.0, n_r)
                        if _better(s, best_score, best_f >= 0):
                            best_score = s
                            best_f = f
                            t = 0.5 * (a_v + b_v)
                            if not (a_v <= t < b_v):
                                t = a_v
                            best_t = t

        if best_f < 0:
            leaf_start[node] = lo
            leaf_end[node] = hi
            continue

        # stable partition of samples[lo:hi]
        n_left = 0
        cat = is_cat[best_f]
        for i in range(lo, hi):
            x = X[samples[i], best_f]
            if (x == best_t) if cat else (x <= best_t):
                samples[lo + n_left] = samples[i]
                n_left += 1
            else:
                buf[i - lo - n_left] = samples[i]
        for i in range(m - n_left):
            samples[lo + n_left + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree is grown first
        stack_node[top] = n_nodes + 1
        stack_lo[top] = lo + n_left
        stack_hi[top] = hi
        top += 1
        stack_node[top] = n_nodes
        stack_lo[top] = lo
        stack_hi[top] = lo + n_left
        top += 1
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), leaf_start[:n_nodes].copy(),
            leaf_end[:n_nodes].copy(), samples)


@njit(cache=True, nogil=True)
def route(X, is_cat, node_off, feature, threshold, left, right):
    """Leaf id (local node index) reached by every row in every tree: (T, n)."""
    n = X.shape[0]
    T = node_off.shape[0] - 1
    out = np.empty((T, n), np.int64)
    for t in range(T):
        base = node_off[t]
        for i in range(n):
            k = 0
            while feature[base + k] >= 0:
                f = feature[base + k]
                x = X[i, f]
                th = threshold[base + k]
                if (x == th) if is_cat[f] else (x <= th):
                    k = left[base + k]
                else:
                    k = right[base + k]
            out[t, i] = k
    return out


@njit(cache=True, nogil=True)
def qrf_weights(leaves, node_off, member_off, leaf_start, leaf_end, members, n_train):
    """Quantile-forest weights for every query row: (n_query, n_train).

    ``leaves`` is the (T, n_query) output of :func:`route`.
    """
    T, nq = leaves.shape
    w = np.zeros((nq, n_train), np.float64)
    for q in range(nq):
        for t in range(T):
            k = node_off[t] + leaves[t, q]
            s = leaf_start[k]
            e = leaf_end[k]
            inc = 1.0 / ((e - s) * T)
            base = member_off[t]
            for j in range(s, e):
                w[q, members[base + j]] += inc
    return w


@njit(cache=True)
def weighted_quantiles(w, y_sorted_idx, y, qs, tol):
    """Generalized inverse of the weighted empirical CDF, per row and level."""
    nq = w.shape[0]
    n = y_sorted_idx.shape[0]
    out = np.empty((nq, qs.shape[0]), np.float64)
    for r in range(nq):
        for a in range(qs.shape[0]):
            q = qs[a]
            cum = 0.0
            last = np.nan
            res = np.nan
            for j in range(n):
                i = y_sorted_idx[j]
                if w[r, i] <= 0.0:
                    continue
                cum += w[r, i]
                last = y[i]
                if cum >= q - tol:
                    res = y[i]
                    break
            out[r, a] = res if res == res else last
    return out
