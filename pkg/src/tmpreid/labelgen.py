"""Pseudo-label generation: k-reciprocal Jaccard distance + DBSCAN, or PUL-style k-means."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import kernels
from .loss import ZeroNormError

log = logging.getLogger(__name__)

NOISE = -1


@dataclass
class ClusterConfig:
    epsilon: float = 0.75
    min_samples: int = 4
    # None selects the desk-scale default min(30, n // 4) / min(6, k1)
    k1: Optional[int] = None
    k2: Optional[int] = None

    def resolve(self, n: int) -> tuple[int, int]:
        k1 = self.k1 if self.k1 is not None else max(1, min(30, n // 4))
        k2 = self.k2 if self.k2 is not None else min(6, k1)
        return k1, k2

    def validate(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.min_samples < 2:
            raise ValueError("min_samples must be >= 2")
        if self.k1 is not None and self.k1 < 1:
            raise ValueError("k1 must be positive")
        if self.k2 is not None and self.k2 < 1:
            raise ValueError("k2 must be positive")
        if self.k1 is not None and self.k2 is not None and self.k2 > self.k1:
            raise ValueError("k2 must not exceed k1")


@dataclass
class PulConfig:
    k_means_k: int = 50
    reliability: float = 0.6
    max_iters: int = 100
    restarts: int = 3

    def validate(self, n: Optional[int] = None) -> None:
        if self.k_means_k < 1 or self.max_iters < 1 or self.restarts < 1:
            raise ValueError("k_means_k, max_iters and restarts must be positive")
        if n is not None and self.k_means_k > n:
            raise ValueError(f"k_means_k={self.k_means_k} exceeds n={n}")


@dataclass
class PseudoLabeling:
    labels: np.ndarray
    num_classes: int
    is_singleton: np.ndarray

    @property
    def num_singletons(self) -> int:
        return int(self.is_singleton.sum())

    @property
    def num_clusters(self) -> int:
        """Classes with more than one member."""
        return self.num_classes - self.num_singletons

    def members(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.searchsorted(self.labels[order], np.arange(self.num_classes + 1))
        return [order[bounds[c]:bounds[c + 1]] for c in range(self.num_classes)]


class Generator(str, Enum):
    DBSCAN = "dbscan"
    PUL = "pul"


# ---------------------------------------------------------------------------
# k-reciprocal Jaccard distance
# ---------------------------------------------------------------------------

def _unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("embeddings must be a 2-D matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("embeddings contain NaN or inf")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise ZeroNormError(f"{int((norms == 0).sum())} zero-norm embedding row(s)")
    return x / norms[:, None]


def normalized_euclidean(x: np.ndarray) -> np.ndarray:
    u = _unit_rows(x)
    d2 = np.clip(2.0 - 2.0 * (u @ u.T), 0.0, None)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def neighbor_ranking(dist: np.ndarray) -> np.ndarray:
    """Row-wise ascending ranking with the row's own index always first, ties by index."""
    keyed = dist.copy()
    np.fill_diagonal(keyed, -1.0)
    return np.argsort(keyed, axis=1, kind="stable")


def _reciprocal(rank: np.ndarray, in_top: np.ndarray, p: int, k: int) -> np.ndarray:
    cand = rank[p, :k + 1]
    return cand[in_top[cand, p]]


def jaccard_distance(embeddings, k1: int, k2: int) -> np.ndarray:
    """Jaccard distance between k-reciprocal encodings of ℓ2-normalised embeddings.

    kNN(p, k) is the first ``k + 1`` entries of p's ranking (p itself plus k
    neighbours). Candidate q's half-size set R(q, k1 // 2) is merged into R*(p)
    when at least two thirds of it lies in R(p, k1). Query expansion averages
    the encodings of p's first ``k2`` ranked points (p included).
    """
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if n <= k1:
        raise ValueError(f"need more points than k1 (n={n}, k1={k1})")
    if k1 < 1 or k2 < 1:
        raise ValueError("k1 and k2 must be positive")
    base = normalized_euclidean(x)
    rank = neighbor_ranking(base)
    half = k1 // 2

    def top_mask(k):
        m = np.zeros((n, n), dtype=bool)
        np.put_along_axis(m, rank[:, :k + 1], True, axis=1)
        return m

    top_full, top_half = top_mask(k1), top_mask(half)
    recip_full = [_reciprocal(rank, top_full, p, k1) for p in range(n)]
    recip_half = [_reciprocal(rank, top_half, q, half) for q in range(n)]

    v = np.zeros((n, n), dtype=np.float64)
    for p in range(n):
        r_p = recip_full[p]
        members = np.zeros(n, dtype=bool)
        members[r_p] = True
        expanded = members.copy()
        for q in r_p:
            r_q = recip_half[q]
            if 3 * int(members[r_q].sum()) >= 2 * len(r_q):
                expanded[r_q] = True
        idx = np.flatnonzero(expanded)
        v[p, idx] = np.exp(-base[p, idx])

    if k2 > 1:
        v = v[rank[:, :k2]].mean(axis=1)

    mins = kernels.min_overlap(v)
    mins = 0.5 * (mins + mins.T)
    mass = v.sum(axis=1)
    maxs = mass[:, None] + mass[None, :] - mins
    dist = 1.0 - mins / maxs
    np.clip(dist, 0.0, None, out=dist)
    np.fill_diagonal(dist, 0.0)
    return dist


# ---------------------------------------------------------------------------
# DBSCAN
# ---------------------------------------------------------------------------

def dbscan(dist: np.ndarray, cfg: ClusterConfig) -> np.ndarray:
    """Density clustering on a precomputed distance matrix.

    Neighbourhood is ``d <= eps`` including the point itself. Border points join
    the cluster of their lowest-index core neighbour. Returns cluster ids (in
    order of each cluster's lowest core index) with -1 for noise.
    """
    d = np.asarray(dist, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    adj = d <= cfg.epsilon
    np.fill_diagonal(adj, True)
    is_core = adj.sum(axis=1) >= cfg.min_samples
    indptr = np.zeros(d.shape[0] + 1, dtype=np.intp)
    np.cumsum(adj.sum(axis=1), out=indptr[1:])
    indices = np.nonzero(adj)[1].astype(np.intp)
    return kernels.expand_clusters(indptr, indices, is_core.astype(np.uint8))


def assign_pseudo_labels(raw: np.ndarray) -> PseudoLabeling:
    """Clusters become classes, each noise point its own class; ids in order of first appearance."""
    raw = np.asarray(raw, dtype=np.int64)
    labels = np.empty_like(raw)
    mapping: dict[int, int] = {}
    nxt = 0
    for i, r in enumerate(raw):
        if r == NOISE:
            labels[i] = nxt
            nxt += 1
        else:
            if r not in mapping:
                mapping[r] = nxt
                nxt += 1
            labels[i] = mapping[r]
    sizes = np.bincount(labels, minlength=nxt)
    return PseudoLabeling(labels, nxt, sizes[labels] == 1)


def _renumber(groups: np.ndarray) -> PseudoLabeling:
    _, first, inverse = np.unique(groups, return_index=True, return_inverse=True)
    # order classes by first appearance
    order = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    labels = order[inverse].astype(np.int64)
    sizes = np.bincount(labels)
    return PseudoLabeling(labels, len(first), sizes[labels] == 1)


# ---------------------------------------------------------------------------
# PUL: spherical k-means with a reliability threshold
# ---------------------------------------------------------------------------

def spherical_kmeans(u: np.ndarray, k: int, rng: np.random.Generator, max_iters: int):
    """One run of cosine k-means on unit rows. Returns ``(assign, centroids, cost)``.

    An empty cluster is re-seeded at the point least similar to its current centroid.
    """
    n = u.shape[0]
    centroids = u[rng.choice(n, size=k, replace=False)].copy()
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iters):
        sims = u @ centroids.T
        new = sims.argmax(axis=1)
        for c in range(k):
            if not np.any(new == c):
                own = sims[np.arange(n), new]
                far = int(np.argmin(own))
                centroids[c] = u[far]
                new[far] = c
                sims[far] = u[far] @ centroids.T
        if np.array_equal(new, assign):
            break
        assign = new
        for c in range(k):
            s = u[assign == c].sum(axis=0)
            norm = np.linalg.norm(s)
            if norm > 0:
                centroids[c] = s / norm
    cost = float(np.sum(1.0 - np.sum(u * centroids[assign], axis=1)))
    return assign, centroids, cost


def pul_labels(embeddings, cfg: PulConfig, rng: np.random.Generator) -> PseudoLabeling:
    u = _unit_rows(embeddings)
    n = u.shape[0]
    cfg.validate(n)
    best = None
    for _ in range(cfg.restarts):
        run = spherical_kmeans(u, cfg.k_means_k, rng, cfg.max_iters)
        if best is None or run[2] < best[2]:
            best = run
    assign, centroids, _ = best
    sim_to_own = np.sum(u * centroids[assign], axis=1)
    reliable = sim_to_own >= cfg.reliability
    groups = np.where(reliable, assign, cfg.k_means_k + np.arange(n))
    return _renumber(groups)


# ---------------------------------------------------------------------------
# Dispatcher and debug dumps
# ---------------------------------------------------------------------------

def generate_labels(
    embeddings,
    generator: Generator | str = Generator.DBSCAN,
    cluster: Optional[ClusterConfig] = None,
    pul: Optional[PulConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> PseudoLabeling:
    generator = Generator(generator)
    x = np.asarray(embeddings, dtype=np.float64)
    if generator is Generator.DBSCAN:
        cluster = cluster or ClusterConfig()
        cluster.validate()
        k1, k2 = cluster.resolve(x.shape[0])
        dist = jaccard_distance(x, k1, k2)
        labeling = assign_pseudo_labels(dbscan(dist, cluster))
    else:
        if rng is None:
            raise ValueError("PUL label generation needs an rng")
        labeling = pul_labels(x, pul or PulConfig(), rng)
    log.info("labels: %d classes, %d singletons", labeling.num_classes, labeling.num_singletons)
    return labeling


def write_distance_csv(dist: np.ndarray, path) -> None:
    """Header ``row,0,1,...,n-1``; one line per row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", *range(dist.shape[1])])
        for i, row in enumerate(dist):
            w.writerow([i, *(repr(float(x)) for x in row)])


def write_labeling_csv(labeling: PseudoLabeling, path) -> None:
    """Header ``index,label,is_singleton``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "label", "is_singleton"])
        for i, (lab, single) in enumerate(zip(labeling.labels, labeling.is_singleton)):
            w.writerow([i, int(lab), int(bool(single))])
