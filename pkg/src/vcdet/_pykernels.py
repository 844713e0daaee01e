"""Pure-numpy versions of the compiled kernels, same signatures and tie rules."""
from __future__ import annotations

import numpy as np


def tn_best_path(values, mask, max_step):
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    nq, nr = values.shape
    best = np.full((nq, nr), -np.inf)
    pred = np.full((nq, nr), -1, dtype=np.int64)
    cols = np.arange(nr)
    for i in range(nq):
        row_mask = mask[i]
        if not row_mask.any():
            continue
        bp = np.full(nr, -np.inf)
        arg = np.full(nr, -1, dtype=np.int64)
        # candidates visited in lexicographic (row, col) order; strict '>' keeps the first
        for ii in range(max(0, i - max_step), i):
            for dj in range(max_step, 0, -1):
                if dj >= nr:
                    continue
                cand = np.full(nr, -np.inf)
                cand[dj:] = best[ii, :-dj]
                better = cand > bp
                if better.any():
                    bp[better] = cand[better]
                    arg[better] = ii * nr + (cols[better] - dj)
        link = (arg >= 0) & (bp >= 0)
        b = values[i] + np.where(link, bp, 0.0)
        best[i] = np.where(row_mask, b, -np.inf)
        pred[i] = np.where(row_mask & link, arg, -1)
    if not np.isfinite(best).any():
        return None, -np.inf
    end = int(np.argmax(best))
    top = float(best.flat[end])
    nodes = []
    while end >= 0:
        nodes.append((end // nr, end % nr))
        end = int(pred.flat[end])
    nodes.reverse()
    return np.asarray(nodes, dtype=np.int64), top


def segment_topk_sum(block, offsets, k):
    block = np.asarray(block)
    offsets = np.asarray(offsets, dtype=np.int64)
    out = np.zeros(len(offsets) - 1, dtype=np.float64)
    for s in range(len(offsets) - 1):
        vals = block[:, offsets[s]:offsets[s + 1]].ravel().astype(np.float64)
        if vals.size > k:
            vals = np.partition(vals, vals.size - k)[vals.size - k:]
        acc = 0.0
        for v in np.sort(vals)[::-1]:
            acc += v
        out[s] = acc
    return out
