"""Compare the compiled and pure-Python kernel backends.

Times the two hot kernels on inputs shaped like the ones label generation
produces, plus the full Jaccard + DBSCAN step with each backend swapped in.

    python benchmarks/bench_kernels.py --sizes 500 1000 2000 --repeat 3
"""
import argparse
import time

import numpy as np

from tmpreid import kernels
from tmpreid.core import SynthConfig, generate_synthetic, make_rng
from tmpreid.labelgen import ClusterConfig, dbscan, jaccard_distance


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def encoding_like(n, nnz, rng):
    # a few dozen positive weights per row, like a k-reciprocal encoding
    v = np.zeros((n, n))
    for i in range(n):
        cols = rng.choice(n, size=nnz, replace=False)
        v[i, cols] = rng.uniform(0.1, 1.0, size=nnz)
    return v


def neighbourhood_graph(dist, eps, min_samples):
    adj = dist <= eps
    indptr = np.zeros(len(dist) + 1, dtype=np.intp)
    np.cumsum(adj.sum(1), out=indptr[1:])
    indices = np.nonzero(adj)[1].astype(np.intp)
    return indptr, indices, (adj.sum(1) >= min_samples).astype(np.uint8)


def swap_backend(module):
    kernels.min_overlap = module.min_overlap
    kernels.expand_clusters = module.expand_clusters


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 1000, 2000])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the fallback is timed")
    original = (kernels.min_overlap, kernels.expand_clusters)
    rng = np.random.default_rng(0)

    print(f"{'n':>6} {'step':<16} " + " ".join(f"{b:>10}" for b in backends) + "   speedup")
    for n in args.sizes:
        v = encoding_like(n, 40, rng)
        ids = max(2, n // 20)
        ds = generate_synthetic(SynthConfig(ids, n // ids, 64, 6), make_rng(n))
        x = ds.features.astype(np.float64)
        cfg = ClusterConfig(epsilon=0.55)
        dist = jaccard_distance(x, *cfg.resolve(len(x)))
        graph = neighbourhood_graph(dist, cfg.epsilon, cfg.min_samples)

        rows = {"min_overlap": {}, "expand_clusters": {}, "jaccard+dbscan": {}}
        for name, mod in backends.items():
            rows["min_overlap"][name] = best_of(lambda: mod.min_overlap(v), args.repeat)
            rows["expand_clusters"][name] = best_of(lambda: mod.expand_clusters(*graph), args.repeat)
            swap_backend(mod)
            rows["jaccard+dbscan"][name] = best_of(
                lambda: dbscan(jaccard_distance(x, *cfg.resolve(len(x))), cfg), args.repeat)
        kernels.min_overlap, kernels.expand_clusters = original

        for step, t in rows.items():
            speed = f"{t['python'] / t['cython']:8.1f}x" if "cython" in t else ""
            print(f"{n:>6} {step:<16} " + " ".join(f"{t[b]:9.4f}s" for b in backends) + f"  {speed}")


if __name__ == "__main__":
    main()
