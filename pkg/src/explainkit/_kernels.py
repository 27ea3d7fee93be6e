"""Compiled inner loops for permutation-sampled Shapley values."""

import numpy as np
from numba import njit


@njit(cache=True)
def permutation_marginals(feat, lo, hi, ratio, width, value, X, missing, perms, phi):
    """Accumulate mean marginal contributions over sampled permutations.

    Each leaf contributes ``value * prod_d (d in S ? ok_d : ratio_d)`` to
    the model output for coalition S, where ``ok_d`` says whether the row
    satisfies every split on feature d along the leaf's path. Walking a
    permutation adds features one at a time; a leaf's output only moves
    when one of its own path features is added.
    """
    n_rows, n_feat = X.shape
    n_leaves, depth = feat.shape
    n_perm = perms.shape[1]
    pos = np.empty(n_feat, np.int64)
    keys = np.empty(depth, np.int64)
    feats = np.empty(depth, np.int64)
    oks = np.empty(depth, np.bool_)
    rs = np.empty(depth, np.float64)
    suffix = np.empty(depth + 1, np.float64)
    ok_all = np.empty((n_leaves, depth), np.bool_)
    for b in range(n_rows):
        for l in range(n_leaves):
            for i in range(width[l]):
                x = X[b, feat[l, i]]
                ok_all[l, i] = x >= lo[l, i] and x < hi[l, i]
        for q in range(n_perm):
            for k in range(n_feat):
                pos[perms[b, q, k]] = k
            for l in range(n_leaves):
                v = value[l]
                cnt = 0
                for i in range(width[l]):
                    f = feat[l, i]
                    if missing[b, f]:
                        v *= ratio[l, i]
                        continue
                    # insertion sort by permutation position
                    key = pos[f]
                    j = cnt
                    while j > 0 and keys[j - 1] > key:
                        keys[j] = keys[j - 1]
                        feats[j] = feats[j - 1]
                        oks[j] = oks[j - 1]
                        rs[j] = rs[j - 1]
                        j -= 1
                    keys[j] = key
                    feats[j] = f
                    oks[j] = ok_all[l, i]
                    rs[j] = ratio[l, i]
                    cnt += 1
                suffix[cnt] = 1.0
                for j in range(cnt - 1, -1, -1):
                    suffix[j] = suffix[j + 1] * rs[j]
                prev = v * suffix[0]
                for j in range(cnt):
                    if oks[j]:
                        cur = v * suffix[j + 1]
                        phi[b, feats[j]] += cur - prev
                        prev = cur
                    else:
                        phi[b, feats[j]] -= prev
                        break
        for k in range(n_feat):
            phi[b, k] /= n_perm
