"""Compiled tree growing and routing.

Trees are stored as flat node arrays: ``feature[i] == -1`` marks a leaf, in
which case ``leaf_id[i]`` and ``value[i]`` are set. Rows with
``x[feature] <= threshold`` go to ``left``.
"""

import numba as nb
import numpy as np

REGRESSION = 0
CLASSIFICATION = 1
SURVIVAL = 2

_NO_SPLIT = -1


@nb.njit(cache=True)
def _draw_features(p, mtry):
    perm = np.arange(p)
    for k in range(mtry):
        j = k + np.random.randint(0, p - k)
        tmp = perm[k]
        perm[k] = perm[j]
        perm[j] = tmp
    return np.sort(perm[:mtry])


@nb.njit(cache=True)
def _leaf_value(kind, y, event, idx, start, end):
    m = end - start
    if kind == SURVIVAL:
        ev = 0.0
        tt = 0.0
        for k in range(start, end):
            ev += event[idx[k]]
            tt += y[idx[k]]
        return ev / tt
    s = 0.0
    for k in range(start, end):
        s += y[idx[k]]
    return s / m


@nb.njit(cache=True)
def _is_pure(kind, y, event, idx, start, end):
    if kind == SURVIVAL:
        for k in range(start, end):
            if event[idx[k]] > 0.0:
                return False
        return True
    first = y[idx[start]]
    for k in range(start + 1, end):
        if y[idx[k]] != first:
            return False
    return True


@nb.njit(cache=True)
def _midpoint(lo, hi):
    t = 0.5 * (lo + hi)
    if t >= hi:
        t = lo
    return t


@nb.njit(cache=True)
def _scan_sum_of_squares(sv, sy, min_leaf):
    # fraction of the node's sum of squares removed by the split
    m = sv.shape[0]
    total = 0.0
    for k in range(m):
        total += sy[k]
    parent = total * total / m
    mean = total / m
    sst = 0.0
    for k in range(m):
        sst += (sy[k] - mean) ** 2
    best = -np.inf
    best_pos = -1
    if sst <= 0.0:
        return best, best_pos
    sl = 0.0
    for i in range(1, m):
        sl += sy[i - 1]
        if i < min_leaf or m - i < min_leaf:
            continue
        if sv[i - 1] == sv[i]:
            continue
        sr = total - sl
        score = (sl * sl / i + sr * sr / (m - i) - parent) / sst
        if score > best:
            best = score
            best_pos = i
    return best, best_pos


@nb.njit(cache=True)
def _scan_gini(sv, sy, min_leaf):
    # sy holds class codes 0..K-1; weighted Gini decrease
    m = sv.shape[0]
    n_classes = 0
    for k in range(m):
        n_classes = max(n_classes, int(sy[k]) + 1)
    total = np.zeros(n_classes)
    for k in range(m):
        total[int(sy[k])] += 1.0
    parent = 0.0
    for c in range(n_classes):
        parent += total[c] * total[c]
    parent /= m
    left = np.zeros(n_classes)
    best = -np.inf
    best_pos = -1
    for i in range(1, m):
        c_prev = int(sy[i - 1])
        left[c_prev] += 1.0
        if i < min_leaf or m - i < min_leaf:
            continue
        if sv[i - 1] == sv[i]:
            continue
        sl = 0.0
        sr = 0.0
        for c in range(n_classes):
            sl += left[c] * left[c]
            r = total[c] - left[c]
            sr += r * r
        score = sl / i + sr / (m - i) - parent
        if score > best:
            best = score
            best_pos = i
    return best, best_pos


@nb.njit(cache=True)
def _scan_logrank(sv, pos, ev, cumhaz, d, risk, w, min_leaf):
    """Log-rank chi-square over all admissible cut points.

    ``pos[r]`` is the number of event times at which row r is at risk;
    moving r to the left group shifts the score by ``ev[r] - cumhaz[pos[r]]``.
    """
    m = sv.shape[0]
    n_times = d.shape[0]
    risk_left = np.zeros(n_times)
    u = 0.0
    best = -np.inf
    best_pos = -1
    for i in range(1, m):
        r = i - 1
        u += ev[r] - cumhaz[pos[r]]
        for k in range(pos[r]):
            risk_left[k] += 1.0
        if i < min_leaf or m - i < min_leaf:
            continue
        if sv[i - 1] == sv[i]:
            continue
        v = 0.0
        for k in range(n_times):
            frac = risk_left[k] / risk[k]
            v += w[k] * frac * (1.0 - frac)
        if v <= 0.0:
            continue
        score = u * u / v
        if score > best:
            best = score
            best_pos = i
    return best, best_pos


@nb.njit(cache=True)
def _survival_node_stats(y, event, idx, start, end):
    m = end - start
    times = np.empty(m)
    n_ev = 0
    for k in range(m):
        times[k] = y[idx[start + k]]
        if event[idx[start + k]] > 0.0:
            n_ev += 1
    ev_times = np.empty(n_ev)
    j = 0
    for k in range(m):
        if event[idx[start + k]] > 0.0:
            ev_times[j] = times[k]
            j += 1
    grid = np.unique(ev_times)
    n_times = grid.shape[0]
    d = np.zeros(n_times)
    risk = np.zeros(n_times)
    pos = np.empty(m, dtype=np.int64)
    for k in range(m):
        t = times[k]
        pk = np.searchsorted(grid, t, side="right")
        pos[k] = pk
        for q in range(pk):
            risk[q] += 1.0
        if event[idx[start + k]] > 0.0:
            d[pk - 1] += 1.0
    cumhaz = np.zeros(n_times + 1)
    w = np.zeros(n_times)
    for q in range(n_times):
        cumhaz[q + 1] = cumhaz[q] + d[q] / risk[q]
        if risk[q] > 1.0:
            w[q] = d[q] * (risk[q] - d[q]) / (risk[q] - 1.0)
    return pos, d, risk, cumhaz, w


@nb.njit(cache=True)
def _best_split(X, y, event, kind, idx, start, end, mtry, min_leaf):
    m = end - start
    p = X.shape[1]
    feats = _draw_features(p, mtry)
    if kind == SURVIVAL:
        pos_node, d, risk, cumhaz, w = _survival_node_stats(y, event, idx, start, end)
    else:
        pos_node = np.empty(0, dtype=np.int64)
        d = np.empty(0)
        risk = np.empty(0)
        cumhaz = np.empty(0)
        w = np.empty(0)
    vals = np.empty(m)
    sv = np.empty(m)
    sy = np.empty(m)
    spos = np.empty(m, dtype=np.int64)
    best = -np.inf
    best_f = _NO_SPLIT
    best_t = 0.0
    for fi in range(mtry):
        f = feats[fi]
        for k in range(m):
            vals[k] = X[idx[start + k], f]
        order = np.argsort(vals, kind="mergesort")
        for k in range(m):
            o = order[k]
            sv[k] = vals[o]
            if kind == SURVIVAL:
                sy[k] = event[idx[start + o]]
                spos[k] = pos_node[o]
            else:
                sy[k] = y[idx[start + o]]
        if sv[0] == sv[m - 1]:
            continue
        if kind == REGRESSION:
            score, cut = _scan_sum_of_squares(sv, sy, min_leaf)
        elif kind == CLASSIFICATION:
            score, cut = _scan_gini(sv, sy, min_leaf)
        else:
            score, cut = _scan_logrank(sv, spos, sy, cumhaz, d, risk, w, min_leaf)
        if cut > 0 and score > best:
            best = score
            best_f = f
            best_t = _midpoint(sv[cut - 1], sv[cut])
    return best_f, best_t, best


@nb.njit(cache=True)
def grow_tree(X, y, event, kind, n_boot, mtry, min_leaf, max_depth, seed):
    """Draw a bootstrap sample and grow one tree on it.

    Returns node arrays plus the bootstrap row indices.
    """
    np.random.seed(seed)
    n = X.shape[0]
    boot = np.random.randint(0, n, n_boot)
    idx = boot.copy()

    cap = 2 * n_boot + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap)
    depth_of = np.zeros(cap, dtype=np.int32)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_boot
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        m = end - start
        dep = depth_of[node]

        split_f = _NO_SPLIT
        split_t = 0.0
        if m >= 2 * min_leaf and dep < max_depth and not _is_pure(kind, y, event, idx, start, end):
            split_f, split_t, score = _best_split(X, y, event, kind, idx, start, end, mtry, min_leaf)
            if not score > 1e-12:
                split_f = _NO_SPLIT

        if split_f == _NO_SPLIT:
            value[node] = _leaf_value(kind, y, event, idx, start, end)
            continue

        # partition idx[start:end] in place, keeping relative order
        buf = idx[start:end].copy()
        a = start
        for k in range(m):
            if X[buf[k], split_f] <= split_t:
                idx[a] = buf[k]
                a += 1
        for k in range(m):
            if X[buf[k], split_f] > split_t:
                idx[a] = buf[k]
                a += 1
        mid = start
        for k in range(m):
            if X[buf[k], split_f] <= split_t:
                mid += 1

        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        feature[node] = split_f
        threshold[node] = split_t
        left[node] = lchild
        right[node] = rchild
        depth_of[lchild] = dep + 1
        depth_of[rchild] = dep + 1

        # push right first so the left subtree is grown first
        st_node[top] = rchild
        st_start[top] = mid
        st_end[top] = end
        top += 1
        st_node[top] = lchild
        st_start[top] = start
        st_end[top] = mid
        top += 1

    leaf_id = np.full(n_nodes, -1, dtype=np.int32)
    nxt = 0
    for i in range(n_nodes):
        if feature[i] == -1:
            leaf_id[i] = nxt
            nxt += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), leaf_id, value[:n_nodes].copy(),
            depth_of[:n_nodes].copy(), boot)


@nb.njit(cache=True)
def route(X, feature, threshold, left, right, leaf_id, offsets):
    """Leaf id reached by every row in every packed tree, shape (rows, trees)."""
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.empty((n, n_trees), dtype=np.int32)
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            node = base
            while feature[node] != -1:
                if X[i, feature[node]] <= threshold[node]:
                    node = base + left[node]
                else:
                    node = base + right[node]
            out[i, t] = leaf_id[node]
    return out


@nb.njit(cache=True)
def route_values(X, feature, threshold, left, right, value, offsets):
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.empty((n, n_trees))
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            node = base
            while feature[node] != -1:
                if X[i, feature[node]] <= threshold[node]:
                    node = base + left[node]
                else:
                    node = base + right[node]
            out[i, t] = value[node]
    return out
