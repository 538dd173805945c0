"""Finite-difference gradient suite over every differentiable op and both model builders.

Each check draws fresh inputs in [-2, 2] from its seed, builds a scalar and
compares tape gradients with central differences (``h = 1e-5``). Model checks
probe a random subset of entries per parameter to bound runtime; dropout
masks are replayed by reseeding the generator on every forward pass.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from sopool import autograd as ag
from sopool import pooling as pl
from sopool.autograd import BatchNormState, GradCheck, Tensor, check_gradients
from sopool.graphdata import Graph
from sopool.layers import VARIANTS, aggregate_neighbors, batch_graphs

TOLERANCE = 1e-5
STEP = 1e-5
MODEL_ENTRIES = 4


def _u(rng, *shape):
    return Tensor(rng.uniform(-2.0, 2.0, size=shape))


def _offsets(rng, segments=3, lo=1, hi=5):
    sizes = rng.integers(lo, hi + 1, size=segments)
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)


def random_graphs(rng, count=3, lo=3, hi=6, d=3, classes=2) -> list[Graph]:
    graphs = []
    for i in range(count):
        n = int(rng.integers(lo, hi + 1))
        pairs = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.5]
        if not pairs:
            pairs = [(0, 1)]
        graphs.append(Graph(n, np.array(pairs), rng.uniform(-2, 2, size=(n, d)), i % classes))
    return graphs


def _weights(x: Tensor, rng) -> np.ndarray:
    # random readout so the scalar does not hide sign or symmetry errors
    return rng.uniform(-1.0, 1.0, size=x.shape)


def _readout(out: Tensor, w: np.ndarray) -> Tensor:
    return ag.sum_all(ag.mul(out, Tensor(w)))


# ------------------------------------------------------------------- op checks


def _op_check(name, build):
    """``build(rng) -> (inputs, fn)`` with ``fn()`` returning any tensor."""

    def run(seed: int) -> GradCheck:
        rng = np.random.default_rng(seed)
        inputs, fn = build(rng)
        probe = {}

        def scalar():
            out = fn()
            if "w" not in probe:
                probe["w"] = _weights(out, rng)
            return _readout(out, probe["w"])

        scalar()
        return check_gradients(name, scalar, inputs, STEP)

    return run


def _matmul(rng):
    a, b = _u(rng, 3, 4), _u(rng, 4, 2)
    return [a, b], lambda: ag.matmul(a, b)


def _row_products(rng):
    a, b = _u(rng, 4, 3), _u(rng, 2, 3)
    return [a, b], lambda: ag.row_products(a, b)


def _transpose(rng):
    a = _u(rng, 3, 2)
    return [a], lambda: ag.transpose(a)


def _reshape(rng):
    a = _u(rng, 3, 4)
    return [a], lambda: ag.reshape(a, 2, 6)


def _spmm(rng):
    A = sp.random(5, 5, density=0.5, random_state=int(rng.integers(1 << 30)), format="csr")
    x = _u(rng, 5, 3)
    return [x], lambda: ag.spmm(A, x)


def _sum_all(rng):
    a = _u(rng, 3, 4)
    return [a], lambda: ag.sum_all(a)


def _concat(rng):
    a, b = _u(rng, 4, 2), _u(rng, 4, 3)
    return [a, b], lambda: ag.concat_cols([a, b])


def _binary(kind):
    def build(rng):
        a, b = _u(rng, 3, 3), _u(rng, 3, 3)
        return [a, b], lambda: getattr(ag, kind)(a, b)

    return build


def _scale(rng):
    a, s = _u(rng, 3, 2), _u(rng, 1, 1)
    return [a, s], lambda: ag.scale(a, s)


def _relu(rng):
    a = _u(rng, 4, 3)
    return [a], lambda: ag.relu(a)


def _add_bias(rng):
    a, b = _u(rng, 4, 3), _u(rng, 1, 3)
    return [a, b], lambda: ag.add_bias(a, b)


def _scale_rows(rng):
    a, s = _u(rng, 4, 3), _u(rng, 4, 1)
    return [a, s], lambda: ag.scale_rows(a, s)


def _softmax(rng):
    v = _u(rng, 5, 1)
    return [v], lambda: ag.softmax_columns(v)


def _batch_norm(rng):
    x, g, b = _u(rng, 6, 3), _u(rng, 1, 3), _u(rng, 1, 3)
    state = BatchNormState.fresh(3)
    return [x, g, b], lambda: ag.batch_norm(x, g, b, "train", state)


def _dropout(rng):
    x = _u(rng, 5, 4)
    seed = int(rng.integers(1 << 30))
    return [x], lambda: ag.dropout(x, 0.5, "train", np.random.default_rng(seed))


def _cross_entropy(rng):
    z = _u(rng, 5, 3)
    labels = rng.integers(0, 3, size=5)
    return [z], lambda: ag.cross_entropy_loss(z, labels)


def _segment(fn_name, cols=3):
    def build(rng):
        off = _offsets(rng)
        x = _u(rng, int(off[-1]), cols)
        return [x], lambda: getattr(ag, fn_name)(x, off)

    return build


def _csr_max(rng):
    x = _u(rng, 5, 3)
    A = (sp.random(5, 5, density=0.5, random_state=int(rng.integers(1 << 30))) + sp.identity(5)).tocsr()
    A.sort_indices()
    return [x], lambda: ag.csr_max(x, A.indptr.astype(np.int64), A.indices.astype(np.int64))


def _segment_cross(rng):
    off = _offsets(rng)
    n = int(off[-1])
    x, y = _u(rng, n, 2), _u(rng, n, 3)
    return [x, y], lambda: ag.segment_cross(x, y, off)


def _broadcast(rng):
    off = _offsets(rng)
    x = _u(rng, len(off) - 1, 3)
    return [x], lambda: ag.broadcast_segments(x, off)


def _expand(rng):
    off = _offsets(rng)
    z = _u(rng, int(off[-1]), 2)
    return [z], lambda: ag.expand_blocks(z, off)


def _pool(kind):
    def build(rng):
        off = _offsets(rng, lo=2)
        H = _u(rng, int(off[-1]), 4)
        if kind in ("sopool_bimap", "covpool_bimap"):
            W = _u(rng, 4, 3)
            return [H, W], lambda: getattr(pl, kind)(H, W, off)
        if kind in ("sopool_attn", "attnpool"):
            mu = _u(rng, 4, 1)
            return [H, mu], lambda: getattr(pl, kind)(H, mu, off)
        if kind == "sopool_mattn":
            U = _u(rng, 2, 4)
            return [H, U], lambda: pl.sopool_mattn(H, U, off)
        if kind == "covpool_flat":
            return [H], lambda: pl.covpool_flat(H, off)
        return [H], lambda: pl.sopool_flat(H, off)

    return build


def _update_adjacency(rng):
    n = 5
    M = rng.uniform(0, 1, size=(n, n))
    A = Tensor((M + M.T) / 2)
    H, U = _u(rng, n, 3), _u(rng, 2, 3)

    def fn():
        p = pl.update_adjacency(A, H, U)
        return ag.concat_cols([p.adj, p.H, p.C])

    return [H, U], fn


def _hierarchical_pool(rng):
    graphs = random_graphs(rng)
    batch = batch_graphs(graphs)
    H, U = _u(rng, batch.num_nodes, 3), _u(rng, 2, 3)

    def fn():
        g, Hn = pl.hierarchical_pool(batch, H, U)
        g2, H2 = pl.hierarchical_pool(g, Hn, ag.scale(U, 0.1))
        return ag.concat_cols([g2.adj, H2])

    return [H, U], fn


def _aggregate(mode, eps=False):
    def build(rng):
        batch = batch_graphs(random_graphs(rng))
        H = _u(rng, batch.num_nodes, 3)
        if eps:
            e = _u(rng, 1, 1)
            return [H, e], lambda: aggregate_neighbors(batch, H, mode, e)
        return [H], lambda: aggregate_neighbors(batch, H, mode)

    return build


def _composition(rng):
    """Three ops drawn at random from a pool of shape-preserving unaries/binaries."""
    a, b = _u(rng, 3, 3), _u(rng, 3, 3)
    choices = rng.integers(0, 6, size=3)

    def fn():
        x = a
        for c in choices:
            if c == 0:
                x = ag.matmul(x, b)
            elif c == 1:
                x = ag.mul(x, b)
            elif c == 2:
                x = ag.relu(x)
            elif c == 3:
                x = ag.add(x, ag.transpose(b))
            elif c == 4:
                x = ag.softmax_columns(ag.reshape(x, 9, 1))
                x = ag.reshape(x, 3, 3)
            else:
                x = ag.sub(ag.scale(x, 0.5), b)
        return x

    return [a, b], fn


OP_CHECKS = {
    "matmul": _op_check("matmul", _matmul),
    "row_products": _op_check("row_products", _row_products),
    "transpose": _op_check("transpose", _transpose),
    "reshape": _op_check("reshape", _reshape),
    "spmm": _op_check("spmm", _spmm),
    "concat_cols": _op_check("concat_cols", _concat),
    "sum_all": _op_check("sum_all", _sum_all),
    "add": _op_check("add", _binary("add")),
    "sub": _op_check("sub", _binary("sub")),
    "mul": _op_check("mul", _binary("mul")),
    "scale": _op_check("scale", _scale),
    "relu": _op_check("relu", _relu),
    "add_bias": _op_check("add_bias", _add_bias),
    "scale_rows": _op_check("scale_rows", _scale_rows),
    "softmax_columns": _op_check("softmax_columns", _softmax),
    "batch_norm": _op_check("batch_norm", _batch_norm),
    "dropout": _op_check("dropout", _dropout),
    "cross_entropy": _op_check("cross_entropy", _cross_entropy),
    "segment_sum": _op_check("segment_sum", _segment("segment_sum")),
    "segment_mean": _op_check("segment_mean", _segment("segment_mean")),
    "segment_max": _op_check("segment_max", _segment("segment_max")),
    "segment_softmax": _op_check("segment_softmax", _segment("segment_softmax", cols=1)),
    "csr_max": _op_check("csr_max", _csr_max),
    "segment_cross": _op_check("segment_cross", _segment_cross),
    "segment_gram": _op_check("segment_gram", _segment("segment_gram")),
    "broadcast_segments": _op_check("broadcast_segments", _broadcast),
    "expand_blocks": _op_check("expand_blocks", _expand),
    "aggregate_sum": _op_check("aggregate_sum", _aggregate("sum")),
    "aggregate_sum_eps": _op_check("aggregate_sum_eps", _aggregate("sum", eps=True)),
    "aggregate_mean": _op_check("aggregate_mean", _aggregate("mean")),
    "aggregate_max": _op_check("aggregate_max", _aggregate("max")),
    "sopool_flat": _op_check("sopool_flat", _pool("sopool_flat")),
    "sopool_bimap": _op_check("sopool_bimap", _pool("sopool_bimap")),
    "sopool_attn": _op_check("sopool_attn", _pool("sopool_attn")),
    "sopool_mattn": _op_check("sopool_mattn", _pool("sopool_mattn")),
    "covpool_flat": _op_check("covpool_flat", _pool("covpool_flat")),
    "covpool_bimap": _op_check("covpool_bimap", _pool("covpool_bimap")),
    "attnpool": _op_check("attnpool", _pool("attnpool")),
    "update_adjacency": _op_check("update_adjacency", _update_adjacency),
    "hierarchical_pool": _op_check("hierarchical_pool", _hierarchical_pool),
    "composition": _op_check("composition", _composition),
}


# ---------------------------------------------------------------- model checks

FLAT_POOLS = ("sum", "avg", "max", "sopool", "sopool_bimap", "sopool_attn", "covpool", "attnpool", "sopool_mattn")
SUM_VARIANTS = tuple(v for v in VARIANTS if v.startswith("sum"))


def _model_check(name: str, model, batch, seed: int) -> GradCheck:
    params = model.parameters()
    # zero-initialised biases put dead ReLU layers exactly on the kink; move off it
    draw = np.random.default_rng(seed + 3)
    for p in params:
        p.value[...] = draw.uniform(-1.0, 1.0, size=p.shape)

    def loss():
        rng = np.random.default_rng(seed + 1)
        return ag.cross_entropy_loss(model(batch, "train", rng), batch.labels)

    return check_gradients(name, loss, params, STEP, MODEL_ENTRIES, np.random.default_rng(seed + 2))


def flat_model_check(seed: int) -> GradCheck:
    from sopool.trainer import ExperimentConfig, build_flat_model

    rng = np.random.default_rng(seed)
    variant = VARIANTS[seed % len(VARIANTS)]
    kind = FLAT_POOLS[seed % len(FLAT_POOLS)]
    cfg = ExperimentConfig(dataset="GRADCHECK", gnn=variant, pool=kind, hidden=3, batch_size=3, f_prime=2, k=[2],
                           allow_off_grid=True, dropout=0.5)
    batch = batch_graphs(random_graphs(rng))
    model = build_flat_model(cfg, 3, 2, rng)
    return _model_check(f"flat_model[{variant}+{kind}]", model, batch, seed)


def hierarchical_model_check(seed: int) -> GradCheck:
    from sopool.trainer import ExperimentConfig, build_hierarchical_model

    rng = np.random.default_rng(seed)
    variant = SUM_VARIANTS[seed % len(SUM_VARIANTS)]
    blocks = 1 + seed % 3
    k = (1, 2, 4)[(seed // 3) % 3]
    cfg = ExperimentConfig(dataset="GRADCHECK", gnn=variant, pool="sopool_mattn", hidden=3, batch_size=3,
                           blocks=blocks, k=[k], allow_off_grid=True, dropout=0.5)
    batch = batch_graphs(random_graphs(rng))
    model = build_hierarchical_model(cfg, 3, 2, rng)
    return _model_check(f"hierarchical_model[{variant}x{blocks},k={k}]", model, batch, seed)


MODEL_CHECKS = {"flat_model": flat_model_check, "hierarchical_model": hierarchical_model_check}
ALL_CHECKS = {**OP_CHECKS, **MODEL_CHECKS}


@dataclass
class SuiteResult:
    checks: list[tuple[str, int, GradCheck]] = field(default_factory=list)
    tol: float = TOLERANCE
    elapsed: float = 0.0

    @property
    def worst(self) -> tuple[str, int, GradCheck] | None:
        if not self.checks:
            return None
        return max(self.checks, key=lambda c: (not np.isfinite(c[2].rel_err), c[2].rel_err))

    @property
    def failures(self):
        return [c for c in self.checks if not (c[2].rel_err < self.tol)]

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        lines = []
        by_name: dict[str, float] = {}
        for key, _, chk in self.checks:
            by_name[key] = max(by_name.get(key, 0.0), chk.rel_err)
        for key, err in by_name.items():
            lines.append(f"{key:<20} max rel-err {err:.3e}  {'ok' if err < self.tol else 'FAIL'}")
        worst = self.worst
        if worst is not None:
            key, seed, chk = worst
            lines.append(f"worst: {chk.name} (seed {seed}) rel-err {chk.rel_err:.3e}")
        skipped = sum(c.skipped for _, _, c in self.checks)
        probed = sum(c.probed for _, _, c in self.checks)
        lines.append(f"{skipped} of {probed} probes straddled a ReLU/max kink and were skipped")
        n_seeds = len({s for _, s, _ in self.checks})
        lines.append(f"{len(self.checks)} checks over {n_seeds} seeds in {self.elapsed:.1f}s: "
                     f"{'PASS' if self.passed else 'FAIL'} (tol {self.tol:g})")
        return "\n".join(lines)


def run_suite(seeds: int = 50, names=None, tol: float = TOLERANCE, first_seed: int = 0) -> SuiteResult:
    names = list(names or ALL_CHECKS)
    result = SuiteResult(tol=tol)
    start = time.perf_counter()
    for seed in range(first_seed, first_seed + seeds):
        for name in names:
            result.checks.append((name, seed, ALL_CHECKS[name](seed)))
    result.elapsed = time.perf_counter() - start
    return result
