"""Compiled inner loops for tree growth: histograms and split search."""
import numpy as np
from numba import njit

MIN_HESS = 1e-3


@njit(cache=True)
def build_histogram(codes, rows, g, h, n_bins):
    """(F, B, 3) sums of gradient, hessian and count; ``codes`` is (n, F)."""
    n_feat = codes.shape[1]
    hist = np.zeros((n_feat, n_bins, 3))
    for i in range(rows.shape[0]):
        r = rows[i]
        gr = g[r]
        hr = h[r]
        for f in range(n_feat):
            b = codes[r, f]
            hist[f, b, 0] += gr
            hist[f, b, 1] += hr
            hist[f, b, 2] += 1.0
    return hist


@njit(cache=True)
def _score(G, H, lam):
    return G * G / (H + lam)


@njit(cache=True)
def find_split(hist, is_cat, G, H, C, lam, min_leaf):
    """Best split over all features.

    Returns (gain, feature, threshold, default_left, order, n_left) where
    categorical splits send ``order[:n_left]`` left. Ties keep the lowest
    feature index, then the lowest threshold, then missing-right.
    """
    n_feat, n_bins, _ = hist.shape
    miss = n_bins - 1
    parent = _score(G, H, lam)
    best_gain = -np.inf
    best_f = -1
    best_thr = -1
    best_dl = False
    best_order = np.empty(0, dtype=np.int64)
    best_nl = 0
    for f in range(n_feat):
        gm = hist[f, miss, 0]
        hm = hist[f, miss, 1]
        cm = hist[f, miss, 2]
        if is_cat[f]:
            cnt = 0
            for b in range(miss):
                if hist[f, b, 2] > 0:
                    cnt += 1
            if cnt == 0:
                continue
            cats = np.empty(cnt, dtype=np.int64)
            ratio = np.empty(cnt)
            k = 0
            for b in range(miss):
                if hist[f, b, 2] > 0:
                    cats[k] = b
                    ratio[k] = hist[f, b, 0] / (hist[f, b, 1] + lam)
                    k += 1
            order = cats[np.argsort(ratio, kind="mergesort")]
            n_cand = cnt
        else:
            order = np.arange(miss)
            n_cand = miss - 1
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for j in range(n_cand):
            b = order[j]
            gl += hist[f, b, 0]
            hl += hist[f, b, 1]
            cl += hist[f, b, 2]
            for opt in range(2):
                if opt == 1:
                    if cm == 0:
                        continue
                    GL, HL, CL = gl + gm, hl + hm, cl + cm
                else:
                    GL, HL, CL = gl, hl, cl
                GR, HR, CR = G - GL, H - HL, C - CL
                if CL < min_leaf or CR < min_leaf or HL < MIN_HESS or HR < MIN_HESS:
                    continue
                gain = _score(GL, HL, lam) + _score(GR, HR, lam) - parent
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    if cm == 0:
                        best_dl = CL >= CR
                    else:
                        best_dl = opt == 1
                    if is_cat[f]:
                        best_thr = -1
                        best_order = order.copy()
                        best_nl = j + 1
                    else:
                        best_thr = b
                        best_order = np.empty(0, dtype=np.int64)
                        best_nl = 0
    return best_gain, best_f, best_thr, best_dl, best_order, best_nl


@njit(cache=True)
def partition(codes, rows, feature, threshold, left_mask, default_left, miss):
    """Split ``rows`` into (left, right) keeping their order."""
    n = rows.shape[0]
    go = np.empty(n, dtype=np.bool_)
    n_left = 0
    for i in range(n):
        b = codes[rows[i], feature]
        if b == miss:
            left = default_left
        elif threshold >= 0:
            left = b <= threshold
        else:
            left = left_mask[b]
        go[i] = left
        if left:
            n_left += 1
    out_l = np.empty(n_left, dtype=np.int64)
    out_r = np.empty(n - n_left, dtype=np.int64)
    a = 0
    c = 0
    for i in range(n):
        if go[i]:
            out_l[a] = rows[i]
            a += 1
        else:
            out_r[c] = rows[i]
            c += 1
    return out_l, out_r


@njit(cache=True)
def apply_tree(codes, feature, lut, left, right):
    """Leaf index per row of ``codes`` (n, F) for one tree."""
    n = codes.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if lut[node, codes[i, feature[node]]]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
