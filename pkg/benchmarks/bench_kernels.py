"""Compare the compiled and numpy segment kernels.

    python benchmarks/bench_kernels.py [--graphs 128] [--nodes 18] [--f 160] [--repeat 5] [--train]

Every kernel is timed on the same batch with both backends, and the outputs
are checked for agreement. ``--train`` additionally times a short cross-
validated run on a synthetic dataset with each backend in a subprocess.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from sopool import _fallback

try:
    from sopool import _kernels
except ImportError:  # extension not built
    _kernels = None


def make_inputs(rng, graphs, nodes, f):
    sizes = rng.integers(max(1, nodes // 2), nodes * 3 // 2 + 1, size=graphs)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n = int(offsets[-1])
    H = rng.normal(size=(n, f))
    mu = rng.normal(size=(4, f))
    # ring plus chords, stored as CSR neighbourhoods for csr_max
    nbrs = [[(i + 1) % n, (i - 1) % n, int(rng.integers(n))] for i in range(n)]
    indptr = np.arange(0, 3 * n + 1, 3, dtype=np.int64)
    indices = np.array(nbrs, dtype=np.int64).ravel()
    scores = rng.normal(size=n)
    G = rng.normal(size=(graphs, f * f))
    return {
        "segment_cross": (H, H, offsets),
        "segment_cross_backward": (G, H, H, offsets),
        "row_products": (H, mu),
        "csr_max": (indptr, indices, H),
        "segment_softmax": (scores, offsets),
        "segment_softmax_backward": (_fallback.segment_softmax(scores, offsets), scores, offsets),
    }


def agree(a, b):
    if isinstance(a, tuple):
        return max(agree(x, y) for x, y in zip(a, b))
    return float(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)).max())


def bench_kernels(args):
    rng = np.random.default_rng(args.seed)
    inputs = make_inputs(rng, args.graphs, args.nodes, args.f)
    n = inputs["row_products"][0].shape[0]
    print(f"batch: {args.graphs} graphs, {n} nodes, f={args.f}, best of {args.repeat}")
    print(f"{'kernel':<26} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}  max |diff|")
    for name, call_args in inputs.items():
        py = getattr(_fallback, name)
        t_py = min(timeit.repeat(lambda: py(*call_args), number=1, repeat=args.repeat)) * 1e3
        if _kernels is None:
            print(f"{name:<26} {t_py:>10.3f} {'n/a':>10}")
            continue
        cy = getattr(_kernels, name)
        t_cy = min(timeit.repeat(lambda: cy(*call_args), number=1, repeat=args.repeat)) * 1e3
        diff = agree(py(*call_args), cy(*call_args))
        print(f"{name:<26} {t_py:>10.3f} {t_cy:>10.3f} {t_py / t_cy:>7.1f}x  {diff:.1e}")


TRAIN_SNIPPET = """
import time, numpy as np
from sopool.graphdata import Dataset, Graph, build_features
from sopool.trainer import ExperimentConfig, train_cv
from sopool import kernels
rng = np.random.default_rng(0)
graphs = []
for i in range(60):
    n = int(rng.integers(10, 30))
    edges = [(j, j + 1) for j in range(n - 1)] + [(int(rng.integers(n)), int(rng.integers(n))) for _ in range(n // 2)]
    edges = [(a, b) for a, b in edges if a != b]
    graphs.append(Graph(n, np.array(edges), np.zeros((n, 0)), i % 2))
ds = build_features(Dataset("BENCH", graphs, 2, 0, "none", [0, 1]), "degree-onehot")
cfg = ExperimentConfig(dataset="BENCH", pool="{pool}", f_prime=32, k=[4], hidden=32, epochs={epochs}, folds=3)
t = time.perf_counter()
train_cv(cfg, ds)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def bench_training(args):
    print(f"\ntraining: 60 graphs, 3 folds, {args.epochs} epochs, hidden 32")
    for pool in ("sopool_bimap", "sopool_attn", "sopool_mattn"):
        times = {}
        for pure in ("1", "0"):
            env = {**os.environ, "SOPOOL_PURE_PYTHON": pure}
            code = TRAIN_SNIPPET.replace("{pool}", pool).replace("{epochs}", str(args.epochs))
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
            backend, seconds = out.stdout.split()
            times[backend] = float(seconds)
        line = "  ".join(f"{b} {t:.2f}s" for b, t in times.items())
        print(f"{pool:<14} {line}")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--graphs", type=int, default=128)
    p.add_argument("--nodes", type=int, default=18, help="average nodes per graph")
    p.add_argument("--f", type=int, default=160, help="feature width")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", action="store_true", help="also time short training runs per backend")
    p.add_argument("--epochs", type=int, default=5)
    args = p.parse_args(argv)
    bench_kernels(args)
    if args.train:
        bench_training(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
