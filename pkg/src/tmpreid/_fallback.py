"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""
from collections import deque

import numpy as np


def min_overlap(v):
    v = np.ascontiguousarray(v, dtype=np.float64)
    n = v.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    col_rows = [np.flatnonzero(v[:, c]) for c in range(v.shape[1])]
    for p in range(n):
        for c in np.flatnonzero(v[p]):
            rows = col_rows[c]
            out[p, rows] += np.minimum(v[p, c], v[rows, c])
    return out


def expand_clusters(indptr, indices, is_core):
    n = len(is_core)
    labels = np.full(n, -1, dtype=np.int64)
    core = np.asarray(is_core, dtype=bool)
    cluster = 0
    for i in range(n):
        if not core[i] or labels[i] >= 0:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            q = queue.popleft()
            for j in indices[indptr[q]:indptr[q + 1]]:
                if core[j] and labels[j] < 0:
                    labels[j] = cluster
                    queue.append(j)
        cluster += 1
    for i in np.flatnonzero(~core):
        nbrs = indices[indptr[i]:indptr[i + 1]]
        hits = nbrs[core[nbrs]]
        if hits.size:
            labels[i] = labels[hits[0]]
    return labels
