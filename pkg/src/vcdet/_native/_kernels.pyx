# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Scalar-loop kernels: Temporal Network DP and segmented top-k sums."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def tn_best_path(const double[:, ::1] values, const unsigned char[:, ::1] mask, Py_ssize_t max_step):
    """Maximum-weight monotone path over admitted cells.

    Returns ``(path, weight)`` with ``path`` an ``(L, 2)`` int64 array of
    (row, col) indices, or ``(None, -inf)`` when no cell is admitted.
    """
    cdef Py_ssize_t nq = values.shape[0], nr = values.shape[1]
    cdef Py_ssize_t i, j, ii, jj, i0, j0, arg, end = -1
    cdef double bp, b, top = -INFINITY
    best_arr = np.full((nq, nr), -np.inf)
    pred_arr = np.full((nq, nr), -1, dtype=np.int64)
    cdef double[:, ::1] best = best_arr
    cdef cnp.int64_t[:, ::1] pred = pred_arr
    with nogil:
        for i in range(nq):
            i0 = i - max_step if i >= max_step else 0
            for j in range(nr):
                if not mask[i, j]:
                    continue
                j0 = j - max_step if j >= max_step else 0
                bp = -INFINITY
                arg = -1
                for ii in range(i0, i):
                    for jj in range(j0, j):
                        if best[ii, jj] > bp:
                            bp = best[ii, jj]
                            arg = ii * nr + jj
                if arg >= 0 and bp >= 0:
                    b = values[i, j] + bp
                    pred[i, j] = arg
                else:
                    b = values[i, j]
                best[i, j] = b
                if b > top:
                    top = b
                    end = i * nr + j
    if end < 0:
        return None, -np.inf
    nodes = []
    while end >= 0:
        nodes.append((end // nr, end % nr))
        end = pred[end // nr, end % nr]
    nodes.reverse()
    return np.asarray(nodes, dtype=np.int64), top


def segment_topk_sum(const float[:, ::1] block, const cnp.int64_t[::1] offsets, Py_ssize_t k):
    """Sum of the ``k`` largest entries of each column segment of ``block``.

    Segment ``s`` spans columns ``offsets[s]:offsets[s + 1]``; segments with
    fewer than ``k`` entries sum everything they have.
    """
    cdef Py_ssize_t nseg = offsets.shape[0] - 1, nrow = block.shape[0]
    cdef Py_ssize_t s, r, c, p, filled
    cdef double v, acc
    out_arr = np.zeros(nseg, dtype=np.float64)
    cdef double[::1] out = out_arr
    heap_arr = np.empty(max(k, 1), dtype=np.float64)
    cdef double[::1] top = heap_arr
    with nogil:
        for s in range(nseg):
            filled = 0
            for r in range(nrow):
                for c in range(offsets[s], offsets[s + 1]):
                    v = block[r, c]
                    # top[0..filled) kept sorted descending
                    if filled < k:
                        p = filled
                        filled += 1
                    elif v > top[k - 1]:
                        p = k - 1
                    else:
                        continue
                    while p > 0 and top[p - 1] < v:
                        top[p] = top[p - 1]
                        p -= 1
                    top[p] = v
            acc = 0.0
            for p in range(filled):
                acc += top[p]
            out[s] = acc
    return out_arr
