"""Batch plans over pseudo-labels and the vector-space view generator."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .labelgen import PseudoLabeling

log = logging.getLogger(__name__)


@dataclass
class SamplerConfig:
    batch_size: int = 256
    k: int = 4
    use_pk: bool = True

    def validate(self) -> None:
        if self.batch_size < 1 or self.k < 1:
            raise ValueError("batch_size and k must be positive")
        if self.use_pk:
            if self.batch_size < self.k:
                raise ValueError(f"batch_size {self.batch_size} < K={self.k}")
            if self.batch_size % self.k:
                raise ValueError(f"K={self.k} must divide batch_size {self.batch_size}")

    @property
    def p(self) -> int:
        return self.batch_size // self.k


@dataclass
class ViewConfig:
    noise_std: float = 0.05
    mask_prob: float = 0.1
    scale_jitter: float = 0.1

    def validate(self) -> None:
        if self.noise_std < 0 or self.scale_jitter < 0:
            raise ValueError("noise_std and scale_jitter must be non-negative")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError("mask_prob must lie in [0, 1]")


def pk_sample_epoch(labeling: PseudoLabeling, cfg: SamplerConfig, rng: np.random.Generator) -> list[list[int]]:
    """One pass over all pseudo-classes in random order.

    Each class contributes a slot group: K members for clustered classes (drawn
    with replacement when the class is smaller than K), a single index for a
    singleton. Groups are never split; a batch is closed as soon as the next group
    would overflow ``batch_size``, and the epoch's final batch may be short.
    """
    cfg.validate()
    groups_of = labeling.members()
    batches: list[list[int]] = []
    current: list[int] = []
    for c in rng.permutation(labeling.num_classes):
        members = groups_of[c]
        if len(members) == 1:
            group = [int(members[0])]
        else:
            group = rng.choice(members, size=cfg.k, replace=len(members) < cfg.k).tolist()
        if len(current) + len(group) > cfg.batch_size:
            batches.append(current)
            current = []
        current.extend(group)
        if len(current) == cfg.batch_size:
            batches.append(current)
            current = []
    if current:
        if batches:
            log.debug("final PK batch truncated to %d of %d", len(current), cfg.batch_size)
        batches.append(current)
    return batches


def random_sample_epoch(n: int, batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    order = rng.permutation(n)
    return [order[i:i + batch_size].tolist() for i in range(0, n, batch_size)]


def make_views(raw: np.ndarray, cfg: ViewConfig, rng: np.random.Generator):
    """Two stochastic views per row: scale jitter, coordinate masking, Gaussian noise.

    Returns ``(views, origin_pos, pair_of)`` where views ``2k`` and ``2k+1`` come
    from row ``k`` of ``raw``.
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("make_views needs a non-empty (B, D) batch")
    views = np.repeat(x, 2, axis=0)
    m, d = views.shape
    scale = 1.0 + cfg.scale_jitter * rng.uniform(-1.0, 1.0, size=(m, 1))
    keep = rng.random((m, d)) >= cfg.mask_prob
    noise = cfg.noise_std * rng.standard_normal((m, d))
    views = views * scale * keep + noise
    origin_pos = np.repeat(np.arange(x.shape[0]), 2)
    pair_of = np.arange(m) ^ 1
    return views, origin_pos, pair_of
