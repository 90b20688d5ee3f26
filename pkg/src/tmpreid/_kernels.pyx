# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Semantics must match ``tmpreid._fallback`` exactly."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def min_overlap(double[:, ::1] v):
    """``out[p, g] = sum_c min(v[p, c], v[g, c])`` over the sparse support of ``v``."""
    cdef Py_ssize_t n = v.shape[0], m = v.shape[1]
    cdef Py_ssize_t p, g, c, a, b
    cdef double vp, vg

    # row-wise (CSR) and column-wise (CSC) nonzero indices
    row_ptr_np = np.zeros(n + 1, dtype=np.intp)
    col_ptr_np = np.zeros(m + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] row_ptr = row_ptr_np
    cdef Py_ssize_t[::1] col_ptr = col_ptr_np
    cdef Py_ssize_t nnz = 0
    for p in range(n):
        for c in range(m):
            if v[p, c] != 0.0:
                nnz += 1
                col_ptr[c + 1] += 1
        row_ptr[p + 1] = nnz
    for c in range(m):
        col_ptr[c + 1] += col_ptr[c]
    row_idx_np = np.empty(nnz, dtype=np.intp)
    col_idx_np = np.empty(nnz, dtype=np.intp)
    fill_np = col_ptr_np[:m].copy()
    cdef Py_ssize_t[::1] row_idx = row_idx_np
    cdef Py_ssize_t[::1] col_idx = col_idx_np
    cdef Py_ssize_t[::1] fill = fill_np
    a = 0
    for p in range(n):
        for c in range(m):
            if v[p, c] != 0.0:
                row_idx[a] = c
                a += 1
                col_idx[fill[c]] = p
                fill[c] += 1

    out_np = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    for p in range(n):
        for a in range(row_ptr[p], row_ptr[p + 1]):
            c = row_idx[a]
            vp = v[p, c]
            for b in range(col_ptr[c], col_ptr[c + 1]):
                g = col_idx[b]
                vg = v[g, c]
                out[p, g] += vp if vp < vg else vg
    return out_np


def expand_clusters(cnp.intp_t[::1] indptr, cnp.intp_t[::1] indices, cnp.uint8_t[::1] is_core):
    """Connected components over core points, then border points by lowest-index core neighbour.

    ``indptr``/``indices`` is the CSR eps-neighbourhood graph with ascending
    neighbour lists. Cluster ids follow the lowest core index; noise is -1.
    """
    cdef Py_ssize_t n = is_core.shape[0]
    labels_np = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] labels = labels_np
    stack_np = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] stack = stack_np
    cdef Py_ssize_t i, j, q, a, top
    cdef cnp.int64_t cluster = 0
    for i in range(n):
        if not is_core[i] or labels[i] >= 0:
            continue
        labels[i] = cluster
        top = 0
        stack[top] = i
        top += 1
        while top > 0:
            top -= 1
            q = stack[top]
            for a in range(indptr[q], indptr[q + 1]):
                j = indices[a]
                if is_core[j] and labels[j] < 0:
                    labels[j] = cluster
                    stack[top] = j
                    top += 1
        cluster += 1
    for i in range(n):
        if is_core[i]:
            continue
        for a in range(indptr[i], indptr[i + 1]):
            j = indices[a]
            if is_core[j]:
                labels[i] = labels[j]
                break
    return labels_np
