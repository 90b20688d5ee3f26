"""The compiled and pure-Python kernels must agree bit for bit."""
import numpy as np
import pytest

from tmpreid import kernels

BACKENDS = kernels.available_backends()


def sparse_rows(rng, n, density):
    v = rng.uniform(0, 1, size=(n, n))
    v[rng.uniform(size=(n, n)) > density] = 0.0
    return v


def naive_min_overlap(v):
    n = v.shape[0]
    return np.array([[np.minimum(v[p], v[g]).sum() for g in range(n)] for p in range(n)])


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_min_overlap_matches_dense(name):
    v = sparse_rows(np.random.default_rng(0), 30, 0.2)
    np.testing.assert_allclose(BACKENDS[name].min_overlap(v), naive_min_overlap(v), atol=1e-12)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_min_overlap_empty_rows(name):
    v = np.zeros((4, 4))
    v[1, 2] = 0.5
    out = BACKENDS[name].min_overlap(v)
    assert out[1, 1] == 0.5 and out.sum() == 0.5


def _graph(rng, n):
    pts = rng.uniform(size=n)
    adj = np.abs(pts[:, None] - pts[None]) <= 0.05
    indptr = np.zeros(n + 1, dtype=np.intp)
    np.cumsum(adj.sum(1), out=indptr[1:])
    indices = np.nonzero(adj)[1].astype(np.intp)
    core = (adj.sum(1) >= 3).astype(np.uint8)
    return indptr, indices, core


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")
@pytest.mark.parametrize("seed", range(10))
def test_backends_identical(seed):
    rng = np.random.default_rng(seed)
    v = sparse_rows(rng, 50, 0.15)
    a = BACKENDS["cython"].min_overlap(v)
    b = BACKENDS["python"].min_overlap(v)
    assert a.tobytes() == b.tobytes()
    g = _graph(rng, 80)
    np.testing.assert_array_equal(BACKENDS["cython"].expand_clusters(*g),
                                  BACKENDS["python"].expand_clusters(*g))


def test_backend_name():
    assert kernels.BACKEND in BACKENDS
