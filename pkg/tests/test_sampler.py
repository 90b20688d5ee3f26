import numpy as np
import pytest

from tmpreid.core import make_rng
from tmpreid.labelgen import assign_pseudo_labels
from tmpreid.loss import LossConfig, ViewBatch, ZeroNormError, tmp_loss
from tmpreid.sampler import (
    SamplerConfig,
    ViewConfig,
    make_views,
    pk_sample_epoch,
    random_sample_epoch,
)


def labeling_from(raw):
    return assign_pseudo_labels(np.asarray(raw))


class TestPK:
    def test_composition(self):
        # 3 clusters of 6, 4 singletons
        raw = np.array([0] * 6 + [1] * 6 + [2] * 6 + [-1] * 4)
        lab = labeling_from(raw)
        batches = pk_sample_epoch(lab, SamplerConfig(batch_size=8, k=4), make_rng(0))
        flat = np.concatenate(batches)
        assert len(flat) == 3 * 4 + 4
        assert all(len(b) <= 8 for b in batches)
        counts = np.bincount(lab.labels[flat], minlength=lab.num_classes)
        assert set(counts[~np.isin(np.arange(lab.num_classes), lab.labels[lab.is_singleton])]) == {4}
        assert set(counts[lab.labels[lab.is_singleton]]) == {1}

    def test_all_singletons(self):
        lab = labeling_from(np.full(10, -1))
        batches = pk_sample_epoch(lab, SamplerConfig(batch_size=4, k=2), make_rng(1))
        assert [len(b) for b in batches] == [4, 4, 2]
        assert sorted(np.concatenate(batches).tolist()) == list(range(10))

    def test_small_class_drawn_with_replacement(self):
        lab = labeling_from([0, 0, 1, 1, 1, 1, 1])
        for seed in range(5):
            batches = pk_sample_epoch(lab, SamplerConfig(batch_size=8, k=4), make_rng(seed))
            flat = np.concatenate(batches)
            assert np.sum(np.isin(flat, [0, 1])) == 4
            assert len(flat) == 8

    def test_counts_per_batch(self):
        rng = np.random.default_rng(3)
        raw = np.where(rng.random(200) < 0.2, -1, rng.integers(0, 15, size=200))
        lab = labeling_from(raw)
        k = 4
        for seed in range(10):
            batches = pk_sample_epoch(lab, SamplerConfig(batch_size=32, k=k), make_rng(seed))
            seen = []
            for b in batches:
                cls, cnt = np.unique(lab.labels[b], return_counts=True)
                assert set(cnt.tolist()) <= {1, k}
                seen.extend(cls.tolist())
            # each pseudo-class appears exactly once per epoch
            assert sorted(seen) == list(range(lab.num_classes))
            assert all(len(b) <= 32 for b in batches)

    def test_deterministic(self):
        lab = labeling_from(np.repeat(np.arange(10), 5))
        a = pk_sample_epoch(lab, SamplerConfig(16, 4), make_rng(9))
        b = pk_sample_epoch(lab, SamplerConfig(16, 4), make_rng(9))
        assert a == b

    @pytest.mark.parametrize("bs,k", [(6, 4), (2, 4), (0, 1)])
    def test_invalid_config(self, bs, k):
        with pytest.raises(ValueError):
            SamplerConfig(bs, k).validate()


def test_random_sampler_chunks():
    batches = random_sample_epoch(10, 4, make_rng(0))
    assert [len(b) for b in batches] == [4, 4, 2]
    assert sorted(sum(batches, [])) == list(range(10))


class TestViews:
    def test_identity_when_strengths_zero(self):
        x = np.random.default_rng(0).normal(size=(5, 3))
        views, pos, pair_of = make_views(x, ViewConfig(0.0, 0.0, 0.0), make_rng(0))
        np.testing.assert_array_equal(views, np.repeat(x, 2, axis=0))
        np.testing.assert_array_equal(pos, [0, 0, 1, 1, 2, 2, 3, 3, 4, 4])
        np.testing.assert_array_equal(pair_of, [1, 0, 3, 2, 5, 4, 7, 6, 9, 8])

    def test_full_mask_gives_zero_views(self):
        x = np.ones((3, 4))
        views, pos, pair_of = make_views(x, ViewConfig(0.0, 1.0, 0.0), make_rng(0))
        assert not views.any()
        with pytest.raises(ZeroNormError):
            tmp_loss(ViewBatch(views, pos, pos, pair_of), LossConfig())

    def test_monte_carlo_moments(self):
        cfg = ViewConfig(noise_std=0.2, mask_prob=0.3, scale_jitter=0.5)
        x = np.array([[2.0, -1.0, 0.5]])
        rng = make_rng(4)
        draws = np.concatenate([make_views(x, cfg, rng)[0] for _ in range(20000)])
        # E[scale] = 1, E[keep] = 0.7, noise is zero mean
        np.testing.assert_allclose(draws.mean(0), 0.7 * x[0], atol=0.02)

    def test_invalid(self):
        with pytest.raises(ValueError):
            ViewConfig(mask_prob=1.5).validate()
        with pytest.raises(ValueError):
            make_views(np.zeros((0, 3)), ViewConfig(), make_rng(0))
