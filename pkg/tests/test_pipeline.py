import math

import numpy as np
import pytest

from tmpreid.core import SynthConfig, generate_synthetic, make_rng, spawn_rngs
from tmpreid.encoder import OptimConfig, backward, cosine_lr, forward, init_encoder, sgd_step
from tmpreid.labelgen import ClusterConfig, generate_labels
from tmpreid.loss import LossConfig, ViewBatch, contrastive_loss
from tmpreid.pipeline import TrainConfig, TrainLog, embed_dataset, run_training
from tmpreid.sampler import SamplerConfig, make_views, pk_sample_epoch


def small_data(seed=0):
    return generate_synthetic(SynthConfig(12, 8, 16, 3), make_rng(seed))


def small_config(**kw):
    base = dict(epochs=4, label_interval=1, hidden_dim=24, embed_dim=12,
                sampler=SamplerConfig(32, 4), cluster=ClusterConfig(epsilon=0.6),
                optim=OptimConfig(base_lr=0.02), seed=3)
    base.update(kw)
    return TrainConfig(**base)


def flat(params):
    return np.concatenate([a.ravel() for layer in params.layers for a in layer])


def test_zero_epochs_returns_initial_encoder():
    ds = small_data()
    params, log = run_training(ds, small_config(epochs=0))
    ref = init_encoder((16, 24, 12), spawn_rngs(3, 4)[0])
    np.testing.assert_array_equal(flat(params), flat(ref))
    assert log.records == []


def test_deterministic():
    ds = small_data()
    a, la = run_training(ds, small_config())
    b, lb = run_training(ds, small_config())
    assert flat(a).tobytes() == flat(b).tobytes()
    assert [r.as_row() for r in la.records] == [r.as_row() for r in lb.records]


@pytest.mark.parametrize("interval,expected", [(1, 5), (2, 3), (3, 2), (5, 1)])
def test_label_regeneration_count(interval, expected):
    _, log = run_training(small_data(), small_config(epochs=5, label_interval=interval))
    assert log.label_generations == expected == math.ceil(5 / interval)


def test_ground_truth_never_read():
    ds = small_data()
    poisoned = ds.with_identities(np.random.default_rng(0).permutation(ds.identities))
    hidden = ds.with_identities(np.full(len(ds), -1))
    ref = flat(run_training(ds, small_config())[0])
    for other in (poisoned, hidden):
        assert flat(run_training(other, small_config())[0]).tobytes() == ref.tobytes()


def test_embed_batching_invariant():
    params = init_encoder((16, 24, 12), make_rng(0))
    x = small_data().features
    np.testing.assert_allclose(embed_dataset(params, x, 7), embed_dataset(params, x, 1000), atol=1e-12)


def test_matches_hand_written_loop():
    ds = small_data()
    cfg = small_config(epochs=3)
    params, log = run_training(ds, cfg)

    r_init, r_label, r_sample, r_view = spawn_rngs(cfg.seed, 4)
    x = np.asarray(ds.features, dtype=np.float64)
    p = init_encoder((16, 24, 12), r_init)
    optim = OptimConfig(base_lr=0.02, total_epochs=3)
    losses = []
    for epoch in range(3):
        lab = generate_labels(embed_dataset(p, x), "dbscan", cfg.cluster, cfg.pul, r_label)
        lr = cosine_lr(epoch, optim, 32)
        vals = []
        for idx in pk_sample_epoch(lab, cfg.sampler, r_sample):
            idx = np.asarray(idx)
            views, pos, pair_of = make_views(x[idx], cfg.views, r_view)
            z, cache = forward(p, views)
            out = contrastive_loss(ViewBatch(z, idx[pos], lab.labels[idx[pos]], pair_of), LossConfig())
            sgd_step(p, backward(p, cache, out.grad), lr, optim)
            vals.append(out.value)
        losses.append(np.mean(vals))
    np.testing.assert_array_equal(flat(params), flat(p))
    assert [r.loss for r in log.records] == losses


def test_modes_differ_but_share_initial_labels():
    ds = small_data()
    _, tmp = run_training(ds, small_config(epochs=2))
    _, inst = run_training(ds, small_config(epochs=2, loss=LossConfig(mode="instance")))
    assert tmp.records[0].num_classes == inst.records[0].num_classes
    assert tmp.records[0].loss != inst.records[0].loss


def test_random_sampler_and_pul():
    cfg = small_config(epochs=2, sampler=SamplerConfig(32, 4, use_pk=False), generator="pul")
    cfg.pul.k_means_k = 10
    _, log = run_training(small_data(), cfg)
    assert len(log.records) == 2


def test_evaluator_callback_and_csv(tmp_path):
    calls = []

    def evaluator(epoch, params):
        calls.append(epoch)
        return (0.5 + epoch, 0.25) if epoch % 2 == 0 else None

    _, log = run_training(small_data(), small_config(), evaluator)
    assert calls == [0, 1, 2, 3]
    assert log.best().epoch == 2
    log.write_csv(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,lr,num_classes,num_singletons,map,cmc1"
    assert lines[2].endswith(",,")


@pytest.mark.parametrize("kw", [dict(epochs=-1), dict(label_interval=0), dict(epochs=2, label_interval=3),
                                dict(sampler=SamplerConfig(30, 4))])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        run_training(small_data(), small_config(**kw))


def test_empty_log_best():
    assert TrainLog().best() is None


def test_zero_encoder_reports_zero_norm():
    from tmpreid.encoder import EncoderParams
    from tmpreid.loss import ZeroNormError

    params = EncoderParams([(np.zeros((16, 24)), np.zeros(24)), (np.zeros((24, 12)), np.zeros(12))])
    emb = embed_dataset(params, small_data().features)
    assert not emb.any()
    with pytest.raises(ZeroNormError):
        generate_labels(emb, "dbscan", ClusterConfig())


def test_loss_decreases():
    _, log = run_training(small_data(), small_config(epochs=20))
    losses = [r.loss for r in log.records]
    assert np.mean(losses[-5:]) < np.mean(losses[:5])
