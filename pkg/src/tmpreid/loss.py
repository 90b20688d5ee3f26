"""Contrastive objectives over a batch of paired views.

For anchor view ``i`` with positives ``P_i = {j != i : y_j == y_i}``::

    L_ij = -log( exp(s_ij/t) / sum_{k in den(i, j)} exp(s_ik/t) )
    L_i  = sum_{j in P_i} L_ij
    L    = mean_i L_i

``den(i, j)`` is ``{j} ∪ {k : y_k != y_i}`` for TMP (other positives are left
out) and ``{k != i}`` for SCL. INSTANCE mode is TMP with every origin as its own
class, i.e. NT-Xent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class ZeroNormError(ValueError):
    """An embedding with zero length has no defined cosine similarity."""


class LossMode(str, Enum):
    TMP = "tmp"
    SCL = "scl"
    INSTANCE = "instance"


@dataclass
class LossConfig:
    temperature: float = 0.05
    mode: LossMode = LossMode.TMP

    def __post_init__(self):
        self.mode = LossMode(self.mode)
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise ValueError(f"temperature must be positive, got {self.temperature}")


@dataclass
class ViewBatch:
    """``2N`` view embeddings; views ``2k`` and ``2k+1`` come from the same sample."""

    embeddings: np.ndarray
    origin: np.ndarray
    labels: np.ndarray
    pair_of: np.ndarray

    @classmethod
    def from_pairs(cls, embeddings, origin, labels) -> "ViewBatch":
        m = len(origin)
        pair_of = np.arange(m) ^ 1
        return cls(np.asarray(embeddings, dtype=np.float64), np.asarray(origin),
                   np.asarray(labels), pair_of)

    def validate(self) -> None:
        m = self.embeddings.shape[0]
        if m < 2 or m % 2:
            raise ValueError(f"need an even number (>= 2) of views, got {m}")
        if len(self.origin) != m or len(self.labels) != m or len(self.pair_of) != m:
            raise ValueError("origin/labels/pair_of length must equal number of views")
        idx = np.arange(m)
        if np.any(self.pair_of == idx) or np.any(self.pair_of[self.pair_of] != idx):
            raise ValueError("pair_of must be a fixed-point-free involution")
        if np.any(self.origin[self.pair_of] != self.origin) or np.any(self.labels[self.pair_of] != self.labels):
            raise ValueError("sibling views must share origin and label")


@dataclass
class LossOutput:
    value: float
    grad: np.ndarray


def cosine_sim(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroNormError("cosine similarity undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _normalize(z: np.ndarray):
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0)
        raise ZeroNormError(f"zero-norm embedding at view(s) {bad[:10].tolist()}")
    return z / norms[:, None], norms


def _contrastive(z: np.ndarray, labels: np.ndarray, tau: float, all_in_denominator: bool) -> LossOutput:
    m = z.shape[0]
    u, norms = _normalize(z)
    logits = (u @ u.T) / tau
    eye = np.eye(m, dtype=bool)
    same = labels[:, None] == labels[None, :]
    pos = same & ~eye
    neg = ~same

    # Every denominator is (negative mass of the anchor) + (positive mass of the
    # pair): the pair's own positive for TMP, all of the anchor's positives for SCL.
    # Negatives are summed once per row, relative to their own max.
    has_neg = neg.any(axis=1, keepdims=True)
    neg_max = np.where(neg, logits, -np.inf).max(axis=1, keepdims=True)
    ref = np.where(has_neg, neg_max, 0.0)
    e_neg = np.exp(np.where(neg, logits - ref, -np.inf))
    neg_mass = e_neg.sum(axis=1, keepdims=True)
    if all_in_denominator:
        c = np.maximum(neg_max, np.where(pos, logits, -np.inf).max(axis=1, keepdims=True))
        pos_mass = np.exp(np.where(pos, logits - c, -np.inf)).sum(axis=1, keepdims=True)
    else:
        c = np.maximum(neg_max, logits)
        pos_mass = np.exp(logits - c)
    # c is the largest term in each denominator, so the bracket is >= 1
    with np.errstate(over="ignore", invalid="ignore"):
        neg_term = np.where(has_neg, np.exp(ref - c) * neg_mass, 0.0)
    log_den = np.where(pos, c + np.log(neg_term + pos_mass), 0.0)

    pair_loss = np.where(pos, log_den - logits, 0.0)
    m_f = float(m)
    value = pair_loss.sum() / m_f

    # negatives appear in every denominator of the row; ref <= log_den
    w = np.where(pos, np.exp(np.minimum(ref - log_den, 0.0)), 0.0)
    g = e_neg * w.sum(axis=1, keepdims=True)
    if all_in_denominator:
        n_pos = pos.sum(axis=1, keepdims=True)
        row_den = np.where(pos, log_den, -np.inf).max(axis=1, keepdims=True)
        g += np.exp(np.where(pos, logits - row_den, -np.inf)) * n_pos
    else:
        g += np.exp(np.where(pos, logits - log_den, -np.inf))
    g -= pos
    g /= tau * m_f

    grad_u = (g + g.T) @ u
    radial = np.sum(grad_u * u, axis=1, keepdims=True)
    grad_z = (grad_u - radial * u) / norms[:, None]
    return LossOutput(float(value), grad_z)


def tmp_loss(batch: ViewBatch, cfg: LossConfig) -> LossOutput:
    batch.validate()
    return _contrastive(batch.embeddings, np.asarray(batch.labels), cfg.temperature, False)


def scl_loss(batch: ViewBatch, cfg: LossConfig) -> LossOutput:
    batch.validate()
    return _contrastive(batch.embeddings, np.asarray(batch.labels), cfg.temperature, True)


def instance_loss(batch: ViewBatch, cfg: LossConfig) -> LossOutput:
    batch.validate()
    return _contrastive(batch.embeddings, np.asarray(batch.origin), cfg.temperature, False)


def contrastive_loss(batch: ViewBatch, cfg: LossConfig) -> LossOutput:
    """Dispatch on ``cfg.mode``."""
    if cfg.mode is LossMode.TMP:
        return tmp_loss(batch, cfg)
    if cfg.mode is LossMode.SCL:
        return scl_loss(batch, cfg)
    return instance_loss(batch, cfg)
