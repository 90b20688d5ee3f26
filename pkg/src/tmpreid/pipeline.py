"""Alternating pseudo-label generation and contrastive encoder updates."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import Dataset, spawn_rngs
from .encoder import EncoderParams, OptimConfig, backward, cosine_lr, forward, init_encoder, sgd_step
from .labelgen import ClusterConfig, Generator, PulConfig, generate_labels
from .loss import LossConfig, ViewBatch, contrastive_loss
from .sampler import SamplerConfig, ViewConfig, make_views, pk_sample_epoch, random_sample_epoch

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "loss", "lr", "num_classes", "num_singletons", "map", "cmc1")


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, message: str = "non-finite loss"):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    epochs: int = 100
    label_interval: int = 1
    hidden_dim: int = 128
    embed_dim: int = 64
    loss: LossConfig = field(default_factory=LossConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    views: ViewConfig = field(default_factory=ViewConfig)
    generator: Generator = Generator.DBSCAN
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    pul: PulConfig = field(default_factory=PulConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.label_interval < 1:
            raise ValueError("label_interval must be positive")
        if self.epochs and self.label_interval > self.epochs:
            raise ValueError("label_interval must not exceed epochs")
        if self.hidden_dim < 1 or self.embed_dim < 1:
            raise ValueError("layer widths must be positive")
        self.generator = Generator(self.generator)
        self.sampler.validate()
        self.views.validate()
        self.cluster.validate()
        self.pul.validate()
        self.optim.validate()


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    lr: float
    num_classes: int
    num_singletons: int
    map: Optional[float] = None
    cmc1: Optional[float] = None

    def as_row(self) -> list[str]:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [str(self.epoch), fmt(self.loss), fmt(self.lr), str(self.num_classes),
                str(self.num_singletons), fmt(self.map), fmt(self.cmc1)]


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    label_generations: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_FIELDS)
            w.writerows(r.as_row() for r in self.records)

    def best(self) -> Optional[EpochRecord]:
        scored = [r for r in self.records if r.map is not None]
        return max(scored, key=lambda r: r.map) if scored else None


def embed_dataset(params: EncoderParams, features: np.ndarray, batch: int = 256) -> np.ndarray:
    """Encoder output for raw (un-augmented) features, in dataset order."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(f"features {x.shape} do not match encoder input width {params.in_dim}")
    if batch < 1:
        raise ValueError("batch must be positive")
    chunks = [forward(params, x[i:i + batch])[0] for i in range(0, x.shape[0], batch)]
    return np.concatenate(chunks) if chunks else np.zeros((0, params.out_dim))


# Called after each epoch with (epoch, params); returns (mAP, CMC@1) or None.
Evaluator = Callable[[int, EncoderParams], Optional[tuple[float, float]]]


def run_training(ds: Dataset, cfg: TrainConfig, evaluator: Optional[Evaluator] = None):
    """Returns ``(params, TrainLog)``. Reads only ``ds.features``; identities stay untouched."""
    cfg.validate()
    rng_init, rng_label, rng_sample, rng_view = spawn_rngs(cfg.seed, 4)
    features = np.asarray(ds.features, dtype=np.float64)
    params = init_encoder((features.shape[1], cfg.hidden_dim, cfg.embed_dim), rng_init)
    optim = OptimConfig(**{**cfg.optim.__dict__, "total_epochs": max(cfg.epochs, 1)})
    train_log = TrainLog()
    labeling = None

    for epoch in range(cfg.epochs):
        if epoch % cfg.label_interval == 0:
            emb = embed_dataset(params, features)
            labeling = generate_labels(emb, cfg.generator, cfg.cluster, cfg.pul, rng_label)
            train_log.label_generations += 1

        if cfg.sampler.use_pk:
            batches = pk_sample_epoch(labeling, cfg.sampler, rng_sample)
        else:
            batches = random_sample_epoch(features.shape[0], cfg.sampler.batch_size, rng_sample)

        lr = cosine_lr(epoch, optim, cfg.sampler.batch_size)
        losses = []
        for idx in batches:
            idx = np.asarray(idx)
            views, pos, pair_of = make_views(features[idx], cfg.views, rng_view)
            z, cache = forward(params, views)
            batch = ViewBatch(z, idx[pos], labeling.labels[idx[pos]], pair_of)
            out = contrastive_loss(batch, cfg.loss)
            if not math.isfinite(out.value) or not np.all(np.isfinite(out.grad)):
                raise TrainingDivergedError(epoch)
            sgd_step(params, backward(params, cache, out.grad), lr, optim)
            losses.append(out.value)

        record = EpochRecord(epoch, float(np.mean(losses)), lr, labeling.num_classes,
                             labeling.num_singletons)
        if evaluator is not None:
            scores = evaluator(epoch, params)
            if scores is not None:
                record.map, record.cmc1 = scores
        log.info("epoch %d loss %.4f lr %.4g classes %d singletons %d", epoch, record.loss,
                 lr, record.num_classes, record.num_singletons)
        train_log.records.append(record)

    return params, train_log
