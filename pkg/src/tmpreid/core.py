"""Data model, deterministic RNG, synthetic identity data and the dataset file format.

Dataset file layout (all little-endian)::

    magic        4 bytes  b"TMPD"
    version      u16      (currently 1)
    n            u32      number of samples
    dim          u32      feature dimension D
    num_cameras  u32
    n records of:
        camera_id  u32
        identity   i64   (-1 = absent)
        feature    D x f32
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

MAGIC = b"TMPD"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")


class DatasetFormatError(ValueError):
    """Malformed dataset file header (bad magic, unsupported version, bad sizes)."""


class DimensionMismatchError(ValueError):
    """Record contents disagree with the declared dimensions."""


class TruncatedFileError(ValueError):
    """File ended before all declared records were read."""


# ---------------------------------------------------------------------------
# RNG
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator seeded through ``SeedSequence``; identical across platforms."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent child streams of ``seed``, one per consumer."""
    children = np.random.SeedSequence(int(seed) & (2**64 - 1)).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleRecord:
    raw_feature: np.ndarray
    true_identity: Optional[int]
    camera_id: int


class Dataset:
    """Immutable collection of feature vectors with optional identity and camera ids.

    Stored column-wise: ``features`` (n, D) float32, ``identities`` (n,) int64 with
    -1 for absent, ``cameras`` (n,) int64. Row index is the stable sample id.
    """

    def __init__(self, features, identities, cameras, num_cameras: int):
        features = np.array(features, dtype=np.float32, copy=True)
        if features.ndim != 2 or features.shape[1] < 1:
            raise DimensionMismatchError(f"features must be (n, D), got {features.shape}")
        n = features.shape[0]
        identities = np.array(identities, dtype=np.int64, copy=True).reshape(-1)
        cameras = np.array(cameras, dtype=np.int64, copy=True).reshape(-1)
        if identities.shape[0] != n or cameras.shape[0] != n:
            raise DimensionMismatchError("identities/cameras length differs from feature rows")
        if num_cameras < 1:
            raise ValueError("num_cameras must be positive")
        if n and (cameras.min() < 0 or cameras.max() >= num_cameras):
            raise DimensionMismatchError("camera_id out of range [0, num_cameras)")
        if n and identities.min() < -1:
            raise ValueError("identity must be non-negative or -1 (absent)")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        for arr in (features, identities, cameras):
            arr.flags.writeable = False
        self.features = features
        self.identities = identities
        self.cameras = cameras
        self.num_cameras = int(num_cameras)

    @classmethod
    def from_records(cls, samples: Sequence[SampleRecord], num_cameras: int) -> "Dataset":
        if not samples:
            raise ValueError("need at least one sample")
        feats = np.stack([np.asarray(s.raw_feature) for s in samples])
        ids = [-1 if s.true_identity is None else s.true_identity for s in samples]
        cams = [s.camera_id for s in samples]
        return cls(feats, ids, cams, num_cameras)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, i: int) -> SampleRecord:
        ident = int(self.identities[i])
        return SampleRecord(self.features[i], None if ident < 0 else ident, int(self.cameras[i]))

    def __iter__(self) -> Iterator[SampleRecord]:
        return (self[i] for i in range(len(self)))

    @property
    def samples(self) -> list[SampleRecord]:
        return list(self)

    def with_identities(self, identities) -> "Dataset":
        return Dataset(self.features, identities, self.cameras, self.num_cameras)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.num_cameras == other.num_cameras
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.identities, other.identities)
            and np.array_equal(self.cameras, other.cameras)
        )

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, dim={self.dim}, num_cameras={self.num_cameras})"


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    num_identities: int = 50
    samples_per_identity: int = 20
    dim: int = 64
    num_cameras: int = 6
    within_identity_noise: float = 0.05
    camera_offset_scale: float = 0.7

    def validate(self) -> None:
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        for name in ("num_identities", "samples_per_identity", "num_cameras"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.within_identity_noise < 0 or self.camera_offset_scale < 0:
            raise ValueError("noise and camera offset scale must be non-negative")


def _unit_rows(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((rows, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def generate_synthetic(config: SynthConfig, rng: np.random.Generator) -> Dataset:
    """Identity clusters: unit-sphere mean + isotropic noise + fixed per-camera offset.

    Draw order is fixed (means, camera offsets, cameras, noise, shuffle) so the
    result depends only on ``config`` and the generator state.
    """
    config.validate()
    n_ids, per_id, dim = config.num_identities, config.samples_per_identity, config.dim
    means = _unit_rows(rng, n_ids, dim)
    cam_offsets = config.camera_offset_scale * _unit_rows(rng, config.num_cameras, dim)
    identities = np.repeat(np.arange(n_ids, dtype=np.int64), per_id)
    cameras = rng.integers(0, config.num_cameras, size=identities.shape[0])
    noise = config.within_identity_noise * rng.standard_normal((identities.shape[0], dim))
    features = means[identities] + cam_offsets[cameras] + noise
    order = rng.permutation(identities.shape[0])
    return Dataset(features[order], identities[order], cameras[order], config.num_cameras)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("camera", "<u4"), ("identity", "<i8"), ("feature", "<f4", (dim,))])


def save_dataset(ds: Dataset, path) -> None:
    n, dim = ds.features.shape
    records = np.empty(n, dtype=_record_dtype(dim))
    records["camera"] = ds.cameras
    records["identity"] = ds.identities
    records["feature"] = ds.features
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, dim, ds.num_cameras))
        fh.write(records.tobytes())


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: file shorter than header ({len(raw)} bytes)")
    magic, version, n, dim, num_cameras = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    if dim < 1 or num_cameras < 1:
        raise DatasetFormatError(f"{path}: invalid header dim={dim} num_cameras={num_cameras}")
    dtype = _record_dtype(dim)
    body = len(raw) - _HEADER.size
    expected = n * dtype.itemsize
    if body < expected:
        raise TruncatedFileError(
            f"{path}: truncated, {body} payload bytes for {n} records of {dtype.itemsize} bytes"
        )
    if body > expected:
        raise DimensionMismatchError(
            f"{path}: {body - expected} trailing bytes; payload does not match n={n}, dim={dim}"
        )
    records = np.frombuffer(raw, dtype=dtype, count=n, offset=_HEADER.size)
    if n and int(records["camera"].max()) >= num_cameras:
        raise DimensionMismatchError(f"{path}: camera_id exceeds num_cameras={num_cameras}")
    return Dataset(records["feature"], records["identity"], records["camera"], num_cameras)
