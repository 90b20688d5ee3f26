import csv

import numpy as np
import pytest

from tmpreid.cli import main
from tmpreid.core import load_dataset
from tmpreid.encoder import load_checkpoint
from tmpreid.evaluation import evaluate, split_by_identity
from tmpreid.pipeline import embed_dataset

SMALL = ["--ids", "10", "--per-id", "8", "--dim", "12", "--cameras", "3"]
FAST = ["--epochs", "3", "--batch-size", "32", "--k", "4", "--hidden-dim", "16", "--embed-dim", "8",
        "--epsilon", "0.6", "--lr", "0.02"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def data_file(tmp_path):
    path = tmp_path / "d.tmpd"
    assert main(["gen-data", *SMALL, "--seed", "4", "--out", str(path)]) == 0
    return path


def test_gen_data_reproducible(tmp_path, data_file):
    other = tmp_path / "e.tmpd"
    assert main(["gen-data", *SMALL, "--seed", "4", "--out", str(other)]) == 0
    assert other.read_bytes() == data_file.read_bytes()
    assert len(load_dataset(other)) == 80


@pytest.mark.parametrize("argv", [
    ["gen-data"],
    ["gen-data", "--out", "x", "--noise", "-1"],
    ["train", "--tau", "0"],
    ["train", "--batch-size", "30", "--k", "4"],
    ["train", "--mode", "triplet"],
    ["sweep", "--param", "nope", "--values", "1", "--out", "x"],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(main(argv))
    assert exc.value.code == 2


def test_missing_file_exits_1(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "no.tmpw"), "--data", str(tmp_path / "no.tmpd")]) == 1


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("epochs = 2\nbogus = 1\n")
    assert main(["train", "--config", str(cfg)]) == 2


def test_config_precedence(tmp_path, data_file):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\nepochs = 5\nE = 2\n")
    out = tmp_path / "run"
    argv = ["train", "--data", str(data_file), "--config", str(cfg), *FAST[2:], "--epochs", "2",
            "--out-dir", str(out)]
    assert main(argv) == 0
    assert len(read_csv(out / "train_log.csv")) == 1 + 2


def test_train_then_eval(tmp_path, data_file, capsys):
    out = tmp_path / "run"
    assert main(["train", "--data", str(data_file), *FAST, "--out-dir", str(out)]) == 0
    log = read_csv(out / "train_log.csv")
    assert log[0] == ["epoch", "loss", "lr", "num_classes", "num_singletons", "map", "cmc1"]
    assert len(log) == 4 and all(row[5] for row in log[1:])
    assert "final mAP" in capsys.readouterr().out

    report = tmp_path / "r.csv"
    assert main(["eval", "--checkpoint", str(out / "encoder.tmpw"), "--data", str(data_file),
                 "--out", str(report)]) == 0
    assert report.read_bytes() == (out / "eval_report.csv").read_bytes()

    # same numbers as calling the library directly
    ds = load_dataset(data_file)
    rep = evaluate(embed_dataset(load_checkpoint(out / "encoder.tmpw"), ds.features),
                   split_by_identity(ds.identities, ds.cameras), 20)
    direct = tmp_path / "direct.csv"
    rep.write_csv(direct)
    assert direct.read_bytes() == report.read_bytes()

    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(out / "encoder.tmpw"), "--data", str(data_file),
                 "--max-rank", "3"]) == 0
    captured = capsys.readouterr()
    rows = list(csv.reader(captured.out.splitlines()))
    assert [r[0] for r in rows[-3:]] == ["cmc_rank_1", "cmc_rank_2", "cmc_rank_3"]
    assert "mAP=" in captured.err


def test_train_reproducible(tmp_path, data_file):
    for name in ("a", "b"):
        assert main(["train", "--data", str(data_file), *FAST, "--out-dir", str(tmp_path / name)]) == 0
    for f in ("train_log.csv", "encoder.tmpw", "eval_report.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_sweep_appends_and_records_errors(tmp_path, data_file):
    out = tmp_path / "sweep.csv"
    argv = ["sweep", "--data", str(data_file), *FAST, "--param", "tau", "--values", "0.1,-1", "--out", str(out)]
    assert main(argv) == 0
    rows = read_csv(out)
    assert rows[0][:3] == ["param", "value", "status"]
    assert [r[2] for r in rows[1:]] == ["ok", "error"]
    assert 0.0 <= float(rows[1][3]) <= 1.0
    assert main(["sweep", "--data", str(data_file), *FAST, "--param", "E", "--values", "1",
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 4 and rows[3][:2] == ["E", "1"]


def test_sweep_parallel_matches_serial(tmp_path, data_file):
    base = ["sweep", "--data", str(data_file), *FAST, "--param", "epsilon", "--values", "0.5,0.6"]
    assert main(base + ["--out", str(tmp_path / "s.csv")]) == 0
    assert main(base + ["--out", str(tmp_path / "p.csv"), "--jobs", "2"]) == 0
    assert (tmp_path / "s.csv").read_bytes() == (tmp_path / "p.csv").read_bytes()


def test_train_without_labels_skips_eval(tmp_path):
    from tmpreid.core import Dataset, save_dataset

    path = tmp_path / "u.tmpd"
    x = np.random.default_rng(0).normal(size=(40, 12))
    save_dataset(Dataset(x, np.full(40, -1), np.zeros(40, dtype=int), 1), path)
    out = tmp_path / "run"
    assert main(["train", "--data", str(path), *FAST, "--out-dir", str(out)]) == 0
    assert not (out / "eval_report.csv").exists()
    assert (out / "encoder.tmpw").exists()
