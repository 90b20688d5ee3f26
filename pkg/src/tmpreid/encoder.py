"""Small MLP encoder with hand-written backprop, momentum SGD and cosine schedule.

Checkpoint layout (little-endian)::

    magic b"TMPW", version u16, num_layers u32,
    per layer: rows u32, cols u32            (weight is rows x cols = in x out)
    then per layer: rows*cols f64 weight values (row-major), cols f64 bias values
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

CKPT_MAGIC = b"TMPW"
CKPT_VERSION = 1


class ShapeError(ValueError):
    pass


class CheckpointFormatError(ValueError):
    pass


@dataclass
class OptimConfig:
    base_lr: float = 0.1
    batch_ref: int = 256
    weight_decay: float = 1e-4
    momentum: float = 0.9
    total_epochs: int = 100

    def effective_lr(self, batch_size: int) -> float:
        return self.base_lr * batch_size / self.batch_ref

    def validate(self) -> None:
        if self.base_lr <= 0 or self.batch_ref < 1 or self.total_epochs < 1:
            raise ValueError("base_lr, batch_ref and total_epochs must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class EncoderParams:
    """Layer list of ``(W, b)`` with ``W`` shaped (in, out); plus momentum buffers."""

    layers: List[Tuple[np.ndarray, np.ndarray]]
    buffers: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        self.layers = [(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for w, b in self.layers]
        for (w0, _), (w1, _) in zip(self.layers, self.layers[1:]):
            if w0.shape[1] != w1.shape[0]:
                raise ShapeError(f"layer widths do not compose: {w0.shape} then {w1.shape}")
        for w, b in self.layers:
            if b.shape != (w.shape[1],):
                raise ShapeError(f"bias shape {b.shape} does not match weight {w.shape}")
        if not self.buffers:
            self.buffers = [(np.zeros_like(w), np.zeros_like(b)) for w, b in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            [(w.copy(), b.copy()) for w, b in self.layers],
            [(w.copy(), b.copy()) for w, b in self.buffers],
        )


def init_encoder(sizes: Sequence[int], rng: np.random.Generator) -> EncoderParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases.

    ``sizes`` is the width chain, e.g. ``(64, 128, 64)``.
    """
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f"invalid layer sizes {sizes}")
    layers = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append((w, b))
    return EncoderParams(layers)


def forward(params: EncoderParams, inputs: np.ndarray):
    """Affine + ReLU on hidden layers, affine output. Returns ``(z, cache)``.

    The cache holds each layer's input and pre-activation.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ShapeError(f"input shape {x.shape} does not match encoder input width {params.in_dim}")
    cache = []
    h = x
    last = len(params.layers) - 1
    for li, (w, b) in enumerate(params.layers):
        pre = h @ w + b
        cache.append((h, pre))
        h = pre if li == last else np.maximum(pre, 0.0)
    return h, cache


def backward(params: EncoderParams, cache, grad_z: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    if len(cache) != len(params.layers):
        raise ShapeError("cache does not belong to these params")
    g = np.asarray(grad_z, dtype=np.float64)
    if g.shape != cache[-1][1].shape:
        raise ShapeError(f"upstream gradient shape {g.shape} != output shape {cache[-1][1].shape}")
    grads = [None] * len(params.layers)
    for li in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[li]
        h_in, pre = cache[li]
        if li != len(params.layers) - 1:
            g = g * (pre > 0)
        grads[li] = (h_in.T @ g, g.sum(axis=0))
        if li:
            g = g @ w.T
    return grads


def sgd_step(params: EncoderParams, grads, lr: float, cfg: OptimConfig) -> None:
    """In place: ``buf = momentum*buf + grad + wd*param``; ``param -= lr*buf``."""
    if len(grads) != len(params.layers):
        raise ShapeError("gradient list length does not match layers")
    for (gw, gb), (w, b) in zip(grads, params.layers):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ShapeError("gradient shape mismatch")
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise FloatingPointError("non-finite gradient passed to sgd_step")
    for (gw, gb), (w, b), (bw, bb) in zip(grads, params.layers, params.buffers):
        for p, g, buf in ((w, gw, bw), (b, gb, bb)):
            buf *= cfg.momentum
            buf += g + cfg.weight_decay * p
            p -= lr * buf


def cosine_lr(epoch: int, cfg: OptimConfig, batch_size: int) -> float:
    if not 0 <= epoch <= cfg.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.total_epochs}]")
    return cfg.effective_lr(batch_size) * 0.5 * (1.0 + math.cos(math.pi * epoch / cfg.total_epochs))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(params: EncoderParams, path) -> None:
    parts = [struct.pack("<4sHI", CKPT_MAGIC, CKPT_VERSION, len(params.layers))]
    for w, _ in params.layers:
        parts.append(struct.pack("<II", *w.shape))
    for w, b in params.layers:
        parts.append(w.astype("<f8").tobytes(order="C"))
        parts.append(b.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> EncoderParams:
    raw = Path(path).read_bytes()
    if len(raw) < 10:
        raise CheckpointFormatError(f"{path}: too short for a checkpoint header")
    magic, version, num_layers = struct.unpack_from("<4sHI", raw)
    if magic != CKPT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
    if version != CKPT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    off = 10
    if len(raw) < off + 8 * num_layers:
        raise CheckpointFormatError(f"{path}: truncated shape table")
    shapes = [struct.unpack_from("<II", raw, off + 8 * i) for i in range(num_layers)]
    off += 8 * num_layers
    need = off + sum(8 * (r * c + c) for r, c in shapes)
    if len(raw) != need:
        raise CheckpointFormatError(f"{path}: expected {need} bytes, found {len(raw)}")
    layers = []
    for r, c in shapes:
        w = np.frombuffer(raw, dtype="<f8", count=r * c, offset=off).reshape(r, c).astype(np.float64)
        off += 8 * r * c
        b = np.frombuffer(raw, dtype="<f8", count=c, offset=off).astype(np.float64)
        off += 8 * c
        layers.append((w, b))
    return EncoderParams(layers)
