"""Command-line front end: ``gen-data``, ``train``, ``eval``, ``sweep``.

Settings come from, in increasing precedence: built-in defaults, ``--preset``,
a ``--config`` file of ``key = value`` lines (``#`` starts a comment), and
explicit flags. Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Dataset, SynthConfig, generate_synthetic, load_dataset, make_rng, save_dataset
from .encoder import OptimConfig, load_checkpoint, save_checkpoint
from .evaluation import evaluate, split_by_identity
from .labelgen import ClusterConfig, PulConfig
from .loss import LossConfig
from .pipeline import TrainConfig, embed_dataset, run_training
from .sampler import SamplerConfig, ViewConfig


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    # synthetic data
    ids: int = 50
    per_id: int = 20
    dim: int = 64
    cameras: int = 6
    noise: float = 0.05
    camera_offset: float = 0.7
    data_seed: int = 0
    # training
    epochs: int = 100
    label_interval: int = 1
    mode: str = "tmp"
    tau: float = 0.05
    labels: str = "dbscan"
    epsilon: float = 0.75
    min_samples: int = 4
    k1: str = "auto"
    k2: str = "auto"
    pul_k: int = 50
    pul_lambda: float = 0.6
    pul_iters: int = 100
    pul_restarts: int = 3
    batch_size: int = 256
    k: int = 4
    sampler: str = "pk"
    view_noise: float = 0.05
    view_mask: float = 0.1
    view_scale: float = 0.1
    hidden_dim: int = 128
    embed_dim: int = 64
    lr: float = 0.1
    batch_ref: int = 256
    weight_decay: float = 1e-4
    momentum: float = 0.9
    seed: int = 0
    # evaluation
    query_frac: float = 0.25
    max_rank: int = 20
    eval_every: int = 1
    # output
    out_dir: str = "run"

    def synth(self) -> SynthConfig:
        return SynthConfig(self.ids, self.per_id, self.dim, self.cameras, self.noise, self.camera_offset)

    def train(self) -> TrainConfig:
        def auto(v):
            return None if str(v) == "auto" else int(v)

        if self.sampler not in ("pk", "random"):
            raise UsageError(f"sampler must be 'pk' or 'random', got {self.sampler!r}")
        cfg = TrainConfig(
            epochs=self.epochs,
            label_interval=self.label_interval,
            hidden_dim=self.hidden_dim,
            embed_dim=self.embed_dim,
            loss=LossConfig(self.tau, self.mode),
            sampler=SamplerConfig(self.batch_size, self.k, self.sampler == "pk"),
            views=ViewConfig(self.view_noise, self.view_mask, self.view_scale),
            generator=self.labels,
            cluster=ClusterConfig(self.epsilon, self.min_samples, auto(self.k1), auto(self.k2)),
            pul=PulConfig(self.pul_k, self.pul_lambda, self.pul_iters, self.pul_restarts),
            optim=OptimConfig(self.lr, self.batch_ref, self.weight_decay, self.momentum, max(self.epochs, 1)),
            seed=self.seed,
        )
        cfg.validate()
        return cfg


# Calibrated settings for the 50-identity synthetic benchmark (see benchmarks/calibration.md).
PRESETS = {
    "default": {},
    "desk": {"epochs": 60, "lr": 0.01, "epsilon": 0.55},
}

ALIASES = {"E": "label_interval", "lambda": "pul_lambda", "K": "k", "N": "batch_size"}

_FIELD_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def _coerce(key: str, raw) -> object:
    key = ALIASES.get(key, key)
    if key not in _FIELD_TYPES:
        raise UsageError(f"unknown config key {key!r}")
    typ = _FIELD_TYPES[key]
    try:
        return key, typ(raw)
    except ValueError:
        raise UsageError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        k, v = _coerce(key, value)
        out[k] = v
    return out


def build_config(args, overrides: Optional[dict] = None) -> RunConfig:
    values = dict(PRESETS[args.preset])
    if args.config:
        try:
            values.update(parse_config_text(Path(args.config).read_text(encoding="utf-8")))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    for name in _FIELD_TYPES:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    values.update(overrides or {})
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _load_or_generate(args, rc: RunConfig) -> Dataset:
    if getattr(args, "data", None):
        return load_dataset(args.data)
    return generate_synthetic(rc.synth(), make_rng(rc.data_seed))


def _evaluator(ds: Dataset, rc: RunConfig):
    if rc.eval_every < 1 or np.any(ds.identities < 0):
        return None, None
    split = split_by_identity(ds.identities, ds.cameras, rc.query_frac)

    def score(epoch, params):
        if (epoch + 1) % rc.eval_every and epoch + 1 != rc.epochs:
            return None
        rep = evaluate(embed_dataset(params, ds.features), split, rc.max_rank)
        return rep.mAP, float(rep.cmc[0])

    return score, split


def train_once(ds: Dataset, rc: RunConfig):
    """Train with per-epoch evaluation; returns ``(params, log, final_report)``."""
    cfg = rc.train()
    score, split = _evaluator(ds, rc)
    params, train_log = run_training(ds, cfg, score)
    report = None
    if split is not None:
        report = evaluate(embed_dataset(params, ds.features), split, rc.max_rank)
    return params, train_log, report


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args, rc: RunConfig) -> int:
    ds = generate_synthetic(rc.synth(), make_rng(rc.data_seed))
    save_dataset(ds, args.out)
    print(f"wrote {args.out}: n={len(ds)} D={ds.dim} identities={len(np.unique(ds.identities))}")
    return 0


def cmd_train(args, rc: RunConfig) -> int:
    ds = _load_or_generate(args, rc)
    out = Path(rc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params, train_log, report = train_once(ds, rc)
    train_log.write_csv(out / "train_log.csv")
    save_checkpoint(params, out / "encoder.tmpw")
    last = train_log.records[-1] if train_log.records else None
    if last:
        print(f"final epoch {last.epoch}: loss={last.loss:.4f} classes={last.num_classes} "
              f"singletons={last.num_singletons}")
    if report is not None:
        report.write_csv(out / "eval_report.csv")
        best = train_log.best()
        print(f"final mAP={report.mAP:.4f} CMC@1={report.cmc[0]:.4f}")
        if best is not None:
            print(f"best  mAP={best.map:.4f} CMC@1={best.cmc1:.4f} (epoch {best.epoch})")
    return 0


def cmd_eval(args, rc: RunConfig) -> int:
    ds = load_dataset(args.data)
    params = load_checkpoint(args.checkpoint)
    split = split_by_identity(ds.identities, ds.cameras, rc.query_frac)
    report = evaluate(embed_dataset(params, ds.features), split, rc.max_rank)
    if args.out:
        report.write_csv(args.out)
    else:
        buf = io.StringIO()
        csv.writer(buf).writerows([("metric", "value"), *report.rows()])
        sys.stdout.write(buf.getvalue())
    print(f"mAP={report.mAP:.4f} CMC@1={report.cmc[0]:.4f} queries={report.num_queries} "
          f"skipped={report.num_skipped}", file=sys.stderr)
    return 0


SWEEP_FIELDS = ("param", "value", "status", "final_map", "final_cmc1", "best_map", "best_epoch",
                "initial_num_classes", "num_classes", "num_singletons", "final_loss", "error")


def _sweep_row(ds: Dataset, rc: RunConfig, param: str, value: str) -> list[str]:
    try:
        _, train_log, report = train_once(ds, rc)
    except Exception as exc:  # recorded per row; the sweep keeps going
        return [param, value, "error"] + [""] * 8 + [f"{type(exc).__name__}: {exc}"]
    recs = train_log.records
    best = train_log.best()

    def f(v):
        return "" if v is None else repr(float(v))

    return [
        param, value, "ok",
        f(report.mAP if report else None), f(report.cmc[0] if report else None),
        f(best.map if best else None), "" if best is None else str(best.epoch),
        str(recs[0].num_classes) if recs else "", str(recs[-1].num_classes) if recs else "",
        str(recs[-1].num_singletons) if recs else "", f(recs[-1].loss if recs else None), "",
    ]


def _sweep_worker(job):
    ds, rc, param, value = job
    return _sweep_row(ds, rc, param, value)


def cmd_sweep(args, rc: RunConfig) -> int:
    key = ALIASES.get(args.param, args.param)
    if key not in _FIELD_TYPES:
        raise UsageError(f"unknown sweep parameter {args.param!r}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values is empty")
    ds = _load_or_generate(args, rc)
    jobs = []
    for raw in values:
        _, v = _coerce(key, raw)
        jobs.append((ds, dataclasses.replace(rc, **{key: v}), args.param, raw))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_worker, jobs))
    else:
        rows = [_sweep_worker(j) for j in jobs]

    out = Path(args.out)
    fresh = not out.exists() or out.stat().st_size == 0
    with open(out, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if fresh:
            w.writerow(SWEEP_FIELDS)
        w.writerows(rows)
    for r in rows:
        print(",".join(r))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser, names) -> None:
    for name in names:
        typ = _FIELD_TYPES[name]
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ, default=None,
                       help=f"(default {getattr(RunConfig, name)!r})")


TRAIN_KEYS = [f.name for f in fields(RunConfig)]
SYNTH_KEYS = ["ids", "per_id", "dim", "cameras", "noise", "camera_offset"]


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tmpreid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--preset", choices=sorted(PRESETS), default="default")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    common(p)
    _add_config_flags(p, SYNTH_KEYS)
    p.add_argument("--seed", dest="data_seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an encoder, write log CSV and checkpoint")
    common(p)
    p.add_argument("--data", help="dataset file (default: generate synthetic data)")
    _add_config_flags(p, TRAIN_KEYS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    _add_config_flags(p, ["query_frac", "max_rank"])
    p.add_argument("--out", help="report CSV path (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train+eval over a grid of one parameter")
    common(p)
    p.add_argument("--data", help="dataset file (default: generate synthetic data)")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True, help="CSV to append rows to")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p, TRAIN_KEYS)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = build_config(args)
        _validate(args.command, rc)
        return args.func(args, rc)
    except UsageError as exc:
        print(f"tmpreid: usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, OSError, RuntimeError) as exc:
        print(f"tmpreid: error: {exc}", file=sys.stderr)
        return 1


def _validate(command: str, rc: RunConfig) -> None:
    try:
        if command in ("gen-data", "train", "sweep"):
            rc.synth().validate()
        if command in ("train", "sweep"):
            rc.train()
        if not 0.0 < rc.query_frac < 1.0 or rc.max_rank < 1:
            raise ValueError("query_frac must lie in (0, 1) and max_rank be positive")
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


if __name__ == "__main__":
    sys.exit(main())
