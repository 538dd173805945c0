"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py``; the lines are repeated in
the terminal summary. The MUTAG criterion needs the dataset on disk (see
``mutag_root`` in conftest) and fails when it is missing.
"""
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from sopool import pooling as pl
from sopool.autograd import Tensor
from sopool.distinguish import run_counterexamples
from sopool.gradcheck import run_suite
from sopool.graphdata import Dataset, load_fixture, parse_tu_dataset
from sopool.layers import batch_graphs
from sopool.trainer import ExperimentConfig, build_model, train_cv

from conftest import ACCEPTANCE_LINES, mutag_root, random_graph


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_gradient_suite():
    result = run_suite(seeds=50)
    name, seed, worst = result.worst
    ok = result.passed and result.elapsed < 120
    record(1, "finite-difference gradient suite, 50 seeds", ok,
           f"{len(result.checks)} checks, worst {worst.name} seed {seed} rel-err {worst.rel_err:.2e}, "
           f"{result.elapsed:.1f}s")


def test_criterion_2_permutation_invariance():
    rng = np.random.default_rng(2024)
    f = 4
    modules = [pl.GlobalPooling(kind, f, rng, f_prime=3, k=2) for kind in pl.KINDS]
    U = Tensor(rng.uniform(-1, 1, size=(3, f)))
    start = time.perf_counter()
    worst, dims = 0.0, {}
    for _ in range(100):
        n = int(rng.integers(1, 21))
        g = random_graph(rng, n, d=f)
        perm = rng.permutation(n)
        gp = g.permuted(perm)
        for m in modules:
            a, b = m(g.x).value, m(gp.x).value
            worst = max(worst, float(np.abs(a - b).max()))
            dims.setdefault(m.kind, set()).add(a.shape)
        A1 = pl.update_adjacency(g.adjacency(), g.x, U).adj.value
        A2 = pl.update_adjacency(gp.adjacency(), gp.x, U).adj.value
        worst = max(worst, float(np.abs(A1 - A2).max()))
    elapsed = time.perf_counter() - start
    fixed = all(len(s) == 1 for s in dims.values())
    record(2, "permutation invariance of every pooling, 100 graphs", worst < 1e-9 and fixed and elapsed < 60,
           f"max |diff| {worst:.1e}, output dims independent of n: {fixed}, {elapsed:.1f}s")


def test_criterion_3_parameter_counts():
    expected = {
        "sopool": lambda c: 25_600 * c,
        "sopool_bimap": lambda c: 5_120 + 1_024 * c,
        "sopool_attn": lambda c: 160 + 160 * c,
    }
    got = {(kind, c): pl.count_classifier_params(kind, 160, 32 if kind == "sopool_bimap" else None, c)
           for kind in expected for c in (2, 3, 5)}
    ok = all(got[(kind, c)] == fn(c) for kind, fn in expected.items() for c in (2, 3, 5))
    record(3, "parameter counts at f=160, f'=32, c in {2,3,5}", ok,
           ", ".join(f"{k}/c={c}: {v}" for (k, c), v in got.items()))


def test_criterion_4_counterexample_cli():
    proc = subprocess.run([sys.executable, "-m", "sopool", "distinguish", "--figure2"],
                          capture_output=True, text=True, check=False)
    outcomes = {(o.fixture, o.report.pooling): o.report.verdict for o in run_counterexamples()}
    wanted = {"covpool": "collision", "attnpool": "collision", "avg": "collision",
              "sopool": "distinguished", "sopool_attn": "distinguished", "sum": "distinguished"}
    verdicts_ok = all(outcomes[("repeat", k)] == v for k, v in wanted.items())
    record(4, "distinguish --figure2", proc.returncode == 0 and verdicts_ok,
           f"exit {proc.returncode}, " + ", ".join(f"{k}:{outcomes[('repeat', k)]}" for k in wanted))


MATTN_SCRIPT = """
import numpy as np
from sopool import kernels, pooling as pl
rng = np.random.default_rng(5)
worst, exact = 0.0, True
for _ in range(200):
    f, k = (int(v) for v in rng.integers(1, 12, size=2))
    off = np.concatenate([[0], np.cumsum(rng.integers(1, 6, size=int(rng.integers(1, 4))))])
    H = rng.normal(size=(int(off[-1]), f))
    U = rng.normal(size=(k, f))
    M = pl.sopool_mattn(H, U, off).value.reshape(len(off) - 1, k, f)
    for i in range(k):
        row = pl.sopool_attn(H, U[i][:, None], off).value
        exact &= bool(np.array_equal(M[:, i, :], row))
        worst = max(worst, float(np.abs(M[:, i, :] - row).max()))
print(kernels.BACKEND, exact, worst)
"""


def test_criterion_5_multihead_rows_equal_single_head():
    lines = []
    for pure in ("0", "1"):
        env = {**os.environ, "SOPOOL_PURE_PYTHON": pure}
        out = subprocess.run([sys.executable, "-c", MATTN_SCRIPT], capture_output=True, text=True, env=env,
                             check=True).stdout.split()
        lines.append((out[0], out[1] == "True", float(out[2])))
    ok = all(exact or worst <= 1e-12 for _, exact, worst in lines)
    record(5, "multi-head rows equal per-head attention pooling", ok,
           ", ".join(f"{b}: {'bit-for-bit' if e else f'max |diff| {w:.1e}'}" for b, e, w in lines))


def test_criterion_6_mutag_desk_run():
    root = mutag_root()
    if root is None:
        record(6, "MUTAG GIN-0 + bimap mean accuracy >= 0.85", False,
               "MUTAG dataset not found; set SOPOOL_DATA_DIR to a folder containing MUTAG/")
    ds = parse_tu_dataset(root, "MUTAG")
    cfg = ExperimentConfig(dataset="MUTAG", gnn="gin0", pool="sopool_bimap", hidden=32, f_prime=32,
                           batch_size=32, epochs=300, seed=0)
    result = train_cv(cfg, ds, jobs=os.cpu_count() or 1)
    ok = not result.failed and result.mean >= 0.85 and result.wall_time < 20 * 60
    record(6, "MUTAG GIN-0 + bimap mean accuracy >= 0.85", ok,
           f"{result.mean:.4f}±{result.std:.4f} at epoch {result.selected_epoch}, {result.wall_time:.0f}s")


def test_criterion_7_batch_consistency():
    rng = np.random.default_rng(7)
    graphs = [random_graph(rng, int(rng.integers(2, 12)), d=5, label=i % 2) for i in range(12)]
    ds = Dataset("RANDOM", graphs, 2, 5, "given", [0, 1])
    configs = [ExperimentConfig(dataset="RANDOM", pool=p, f_prime=4, k=[2], allow_off_grid=True, hidden=8)
               for p in ("sum", "avg", "max", "sopool", "sopool_bimap", "sopool_attn", "covpool", "attnpool",
                         "sopool_mattn")]
    configs.append(ExperimentConfig(dataset="RANDOM", pool="sopool_mattn", blocks=2, k=[3], hidden=16))
    worst, agree = 0.0, True
    for cfg in configs:
        model = build_model(cfg, ds, rng)
        for _ in range(3):  # non-trivial batch-norm running statistics
            model(batch_graphs(graphs), "train", rng)
        together = model(batch_graphs(graphs), "eval").value
        alone = np.vstack([model(batch_graphs([g]), "eval").value for g in graphs])
        worst = max(worst, float(np.abs(together - alone).max()))
        agree &= bool(np.array_equal(together.argmax(1), alone.argmax(1)))
    record(7, "eval predictions batched vs one graph at a time", worst < 1e-9 and agree,
           f"{len(configs)} models, max |diff| {worst:.1e}")


def test_criterion_8_hierarchical_smoke():
    ds = load_fixture()
    batch = batch_graphs(ds.graphs)
    finite, asym, deterministic, shapes = True, 0.0, True, True
    for blocks in (1, 2, 3):
        for k in (1, 2, 4):
            cfg = ExperimentConfig(dataset="TOY", pool="sopool_mattn", hidden=16, blocks=blocks, k=[k], seed=blocks)
            outs = []
            for _ in range(2):
                model = build_model(cfg, ds, np.random.default_rng(cfg.seed))
                logits, pooled = model.forward_blocks(batch, "eval")
                outs.append(model(batch, "eval").value)
                finite &= all(np.all(np.isfinite(l.value)) for l in logits)
                shapes &= all(l.shape == (2, 2) for l in logits) and len(logits) == blocks
                for graph, _ in pooled:
                    A = graph.adj.value
                    asym = max(asym, float(np.abs(A - A.T).max()))
            deterministic &= bool(np.array_equal(outs[0], outs[1]))
    ok = finite and shapes and asym < 1e-10 and deterministic
    record(8, "hierarchical blocks {1,2,3} x k {1,2,4} on the bundled fixture", ok,
           f"finite {finite}, max asymmetry {asym:.1e}, deterministic {deterministic}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
