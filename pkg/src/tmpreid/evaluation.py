"""Retrieval metrics (mAP, CMC) on ℓ2-normalised features under the cross-camera protocol."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .loss import ZeroNormError


class ProtocolError(RuntimeError):
    """No query has a cross-camera match in the gallery."""


@dataclass
class EvalSplit:
    """Query/gallery dataset indices plus per-dataset-index identity and camera."""

    query: np.ndarray
    gallery: np.ndarray
    identities: np.ndarray
    cameras: np.ndarray

    def __post_init__(self):
        self.query = np.asarray(self.query, dtype=np.int64)
        self.gallery = np.asarray(self.gallery, dtype=np.int64)
        self.identities = np.asarray(self.identities, dtype=np.int64)
        self.cameras = np.asarray(self.cameras, dtype=np.int64)


@dataclass
class EvalReport:
    mAP: float
    cmc: np.ndarray
    num_queries: int = 0
    num_skipped: int = 0
    extra: dict = field(default_factory=dict)

    def rows(self) -> list[tuple[str, str]]:
        out = [("mAP", repr(float(self.mAP))),
               ("num_queries", str(self.num_queries)),
               ("num_skipped", str(self.num_skipped))]
        out += [(f"cmc_rank_{r}", repr(float(v))) for r, v in enumerate(self.cmc, start=1)]
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            w.writerows(self.rows())


def split_by_identity(identities, cameras, query_fraction: float = 0.25) -> EvalSplit:
    """Last ``query_fraction`` of each identity's samples (dataset order) become queries."""
    ids = np.asarray(identities, dtype=np.int64)
    if np.any(ids < 0):
        raise ValueError("evaluation split needs ground-truth identities for every sample")
    query, gallery = [], []
    for ident in np.unique(ids):
        members = np.flatnonzero(ids == ident)
        n_q = int(round(query_fraction * len(members)))
        cut = len(members) - n_q
        gallery.extend(members[:cut].tolist())
        query.extend(members[cut:].tolist())
    return EvalSplit(np.sort(query), np.sort(gallery), ids, cameras)


def _normalize(x):
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise ZeroNormError("zero-norm feature row in evaluation")
    return x / norms[:, None]


def pairwise_euclidean_normed(queries, gallery) -> np.ndarray:
    q, g = _normalize(queries), _normalize(gallery)
    if q.shape[1] != g.shape[1]:
        raise ValueError("query and gallery dimensions differ")
    sq = (q * q).sum(1)[:, None] + (g * g).sum(1)[None, :] - 2.0 * (q @ g.T)
    return np.sqrt(np.clip(sq, 0.0, None))


def average_precision(relevant) -> float:
    """AP of a ranked 0/1 relevance list: mean over hits of precision at that hit."""
    rel = np.asarray(relevant, dtype=bool)
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        raise ValueError("average precision undefined without a relevant item")
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


def evaluate(embeddings, split: EvalSplit, max_rank: int = 20) -> EvalReport:
    z = np.asarray(embeddings, dtype=np.float64)
    dist = pairwise_euclidean_normed(z[split.query], z[split.gallery])
    q_ids, g_ids = split.identities[split.query], split.identities[split.gallery]
    q_cams, g_cams = split.cameras[split.query], split.cameras[split.gallery]

    cmc_sum = np.zeros(max_rank)
    aps = []
    skipped = 0
    for qi in range(len(split.query)):
        # ascending distance, ties broken by dataset index
        order = np.lexsort((split.gallery, dist[qi]))
        same_id = g_ids[order] == q_ids[qi]
        junk = same_id & (g_cams[order] == q_cams[qi])
        rel = same_id[~junk]
        if not rel.any():
            skipped += 1
            continue
        aps.append(average_precision(rel))
        first = int(np.argmax(rel))
        if first < max_rank:
            cmc_sum[first:] += 1
    if not aps:
        raise ProtocolError(f"all {len(split.query)} queries lack a cross-camera match")
    return EvalReport(float(np.mean(aps)), cmc_sum / len(aps), len(aps), skipped)
