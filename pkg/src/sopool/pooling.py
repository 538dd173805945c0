"""Graph pooling operators.

Global poolings take a node representation matrix ``H`` (n x f) and an
optional ``offsets`` array splitting the rows into graphs; they return one
row per graph. Without ``offsets`` the whole of ``H`` is one graph and the
result is a single row. Flattening is always row-major.

``sopool`` and ``covpool`` additionally have single-graph f x f matrix forms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sopool import autograd as ag
from sopool.autograd import Parameter, Tensor
from sopool.errors import ConfigError, IntegrityError, ShapeError
from sopool.layers import GraphBatch, WeightedGraph

KINDS = (
    "sum",
    "avg",
    "max",
    "sopool",
    "sopool_bimap",
    "sopool_attn",
    "covpool",
    "attnpool",
    "sopool_mattn",
)


def canonical_kind(kind: str) -> str:
    k = kind.lower().replace("-", "_")
    k = {"mean": "avg", "flatten": "sopool", "bimap": "sopool_bimap", "attn": "sopool_attn",
         "mattn": "sopool_mattn", "sopool_m_attn": "sopool_mattn"}.get(k, k)
    if k not in KINDS:
        raise ConfigError(f"unknown pooling kind {kind!r}; choose from {KINDS}")
    return k


def _offsets(H: Tensor, offsets) -> np.ndarray:
    if H.rows < 1 or H.cols < 1:
        raise ShapeError(f"node representation matrix must be at least 1x1, got {H.shape}")
    if offsets is None:
        return np.array([0, H.rows], dtype=np.int64)
    return np.asarray(offsets, dtype=np.int64)


def _vector(v, f: int, what: str) -> Tensor:
    v = ag.as_tensor(v)
    if v.shape == (1, f) and f != 1:
        v = ag.transpose(v)
    if v.shape != (f, 1):
        raise ShapeError(f"{what}: expected a length-{f} vector, got {v.shape}")
    return v


def pool_first_order(H, mode: str, offsets=None) -> Tensor:
    """Column-wise sum / mean / max of each graph's rows."""
    H = ag.as_tensor(H)
    off = _offsets(H, offsets)
    if mode == "sum":
        return ag.segment_sum(H, off)
    if mode in ("avg", "mean"):
        return ag.segment_mean(H, off)
    if mode == "max":
        return ag.segment_max(H, off)
    raise ConfigError(f"first-order pooling mode must be sum, avg or max, got {mode!r}")


def sopool(H) -> Tensor:
    """``H^T H`` for one graph (f x f, symmetric PSD)."""
    H = ag.as_tensor(H)
    _offsets(H, None)
    return ag.matmul(ag.transpose(H), H)


def sopool_flat(H, offsets=None) -> Tensor:
    """Flattened ``H_b^T H_b`` per graph (B x f^2)."""
    H = ag.as_tensor(H)
    return ag.segment_gram(H, _offsets(H, offsets))


def sopool_bimap(H, W, offsets=None) -> Tensor:
    """Flattened ``W^T H_b^T H_b W`` per graph (B x f'^2)."""
    H, W = ag.as_tensor(H), ag.as_tensor(W)
    if W.rows != H.cols:
        raise ShapeError(f"sopool_bimap: W has {W.rows} rows, H has {H.cols} columns")
    return ag.segment_gram(ag.matmul(H, W), _offsets(H, offsets))


def sopool_attn(H, mu, offsets=None) -> Tensor:
    """``H_b^T H_b mu`` per graph (B x f), evaluated as ``(H mu)^T H`` per segment."""
    H = ag.as_tensor(H)
    mu = _vector(mu, H.cols, "sopool_attn")
    return ag.segment_cross(ag.row_products(H, ag.transpose(mu)), H, _offsets(H, offsets))


def _center(H: Tensor, off: np.ndarray) -> Tensor:
    return ag.sub(H, ag.broadcast_segments(ag.segment_mean(H, off), off))


def covpool(H) -> Tensor:
    """``(H - 1 mean(H))^T (H - 1 mean(H))`` for one graph (f x f)."""
    H = ag.as_tensor(H)
    off = _offsets(H, None)
    c = _center(H, off)
    return ag.matmul(ag.transpose(c), c)


def covpool_flat(H, offsets=None) -> Tensor:
    H = ag.as_tensor(H)
    off = _offsets(H, offsets)
    return ag.segment_gram(_center(H, off), off)


def covpool_bimap(H, W, offsets=None) -> Tensor:
    """Covariance pooling behind the same dimension-reducing map as ``sopool_bimap``."""
    H, W = ag.as_tensor(H), ag.as_tensor(W)
    if W.rows != H.cols:
        raise ShapeError(f"covpool_bimap: W has {W.rows} rows, H has {H.cols} columns")
    off = _offsets(H, offsets)
    return ag.segment_gram(_center(ag.matmul(H, W), off), off)


def attnpool(H, mu, offsets=None) -> Tensor:
    """``H_b^T softmax(H_b mu)`` per graph (B x f)."""
    H = ag.as_tensor(H)
    mu = _vector(mu, H.cols, "attnpool")
    off = _offsets(H, offsets)
    weights = ag.segment_softmax(ag.matmul(H, mu), off)
    return ag.segment_cross(weights, H, off)


def sopool_mattn(H, U, offsets=None) -> Tensor:
    """Multi-head attentional pooling ``U H_b^T H_b`` stacked over graphs ((B*k) x f).

    Row ``i`` of each graph's block is ``sopool_attn(H_b, U[i])``; both use
    the same fixed-order kernels, so they agree bit for bit.
    """
    H, U = ag.as_tensor(H), ag.as_tensor(U)
    if U.cols != H.cols:
        raise ShapeError(f"sopool_mattn: U has {U.cols} columns, H has {H.cols}")
    off = _offsets(H, offsets)
    Z = ag.row_products(H, U)
    return ag.reshape(ag.segment_cross(Z, H, off), (len(off) - 1) * U.rows, H.cols)


@dataclass
class PooledGraph:
    adj: Tensor  # k x k (or block-diagonal Bk x Bk)
    H: Tensor  # k x f
    C: Tensor  # k x n contribution matrix


def update_adjacency(A, H, U, tol: float = 1e-12) -> PooledGraph:
    """Coarsen one graph: ``C = U H^T``, ``A' = C A C^T``, ``H' = C H``."""
    A, H, U = ag.as_tensor(A), ag.as_tensor(H), ag.as_tensor(U)
    if A.shape != (H.rows, H.rows):
        raise ShapeError(f"update_adjacency: A is {A.shape}, H has {H.rows} rows")
    if U.cols != H.cols:
        raise ShapeError(f"update_adjacency: U has {U.cols} columns, H has {H.cols}")
    if np.abs(A.value - A.value.T).max(initial=0.0) > tol:
        raise IntegrityError("update_adjacency: adjacency matrix is not symmetric")
    C = ag.matmul(U, ag.transpose(H))
    A_new = _symmetric(ag.matmul(ag.matmul(C, A), ag.transpose(C)))
    return PooledGraph(A_new, sopool_mattn(H, U), C)


def _symmetric(M):
    # C A C^T is symmetric in exact arithmetic; rounding is not
    return ag.scale(ag.add(M, ag.transpose(M)), 0.5)


def hierarchical_pool(graph, H, U) -> tuple[WeightedGraph, Tensor]:
    """Batched :func:`update_adjacency` over every graph of a batch.

    The contribution matrices are laid out block-diagonally, so the pooled
    adjacency is a dense block-diagonal (B*k) x (B*k) matrix and graphs never
    exchange mass.
    """
    H, U = ag.as_tensor(H), ag.as_tensor(U)
    off = np.asarray(graph.offsets, dtype=np.int64)
    k = U.rows
    Ct = ag.expand_blocks(ag.matmul(H, ag.transpose(U)), off)  # N x Bk
    if isinstance(graph, GraphBatch):
        AC = ag.spmm(graph.adj, Ct)
    elif isinstance(graph, WeightedGraph):
        AC = ag.matmul(graph.adj, Ct)
    else:
        raise ConfigError(f"hierarchical_pool needs a GraphBatch or WeightedGraph, got {type(graph).__name__}")
    C = ag.transpose(Ct)
    A_new = _symmetric(ag.matmul(C, AC))
    H_new = ag.matmul(C, H)
    new_off = np.arange(len(off), dtype=np.int64) * k
    return WeightedGraph(A_new, new_off), H_new


def count_classifier_params(kind: str, f: int, f_prime: int | None = None, c: int = 2, k: int | None = None) -> int:
    """Bias-free parameter count of a pooling plus a 1-layer linear classifier."""
    kind = canonical_kind(kind)
    for name, v in (("f", f), ("c", c), ("f'", f_prime), ("k", k)):
        if v is not None and v <= 0:
            raise ConfigError(f"{name} must be positive, got {v}")
    if kind in ("sum", "avg", "max"):
        return f * c
    if kind == "sopool":
        return f * f * c
    if kind in ("sopool_bimap", "covpool"):
        if f_prime is None:
            raise ConfigError(f"{kind} needs f'")
        return f * f_prime + f_prime * f_prime * c
    if kind in ("sopool_attn", "attnpool"):
        return f + f * c
    if k is None:
        raise ConfigError("sopool_mattn needs k")
    return k * f + k * f * c


class GlobalPooling:
    """A pooling kind bundled with its trainable parameters.

    ``covpool`` uses the bilinear map like ``sopool_bimap``; ``sopool_mattn``
    flattens the k x f pooled matrix.
    """

    def __init__(self, kind: str, f: int, rng: np.random.Generator, f_prime: int | None = None, k: int | None = None):
        self.kind = canonical_kind(kind)
        self.f = f
        self.params = []
        if self.kind in ("sopool_bimap", "covpool"):
            if not f_prime:
                raise ConfigError(f"{self.kind} needs --fprime (f')")
            self.W = Parameter(ag.glorot_uniform(rng, f, f_prime), "pool.W")
            self.params = [self.W]
            self.output_dim = f_prime * f_prime
        elif self.kind in ("sopool_attn", "attnpool"):
            self.mu = Parameter(ag.glorot_uniform(rng, f, 1), "pool.mu")
            self.params = [self.mu]
            self.output_dim = f
        elif self.kind == "sopool_mattn":
            if not k:
                raise ConfigError("sopool_mattn needs --k (number of heads)")
            self.U = Parameter(ag.glorot_uniform(rng, k, f), "pool.U")
            self.params = [self.U]
            self.k = k
            self.output_dim = k * f
        elif self.kind == "sopool":
            self.output_dim = f * f
        else:
            self.output_dim = f

    def __call__(self, H, offsets=None) -> Tensor:
        kind = self.kind
        if kind in ("sum", "avg", "max"):
            return pool_first_order(H, kind, offsets)
        if kind == "sopool":
            return sopool_flat(H, offsets)
        if kind == "sopool_bimap":
            return sopool_bimap(H, self.W, offsets)
        if kind == "covpool":
            return covpool_bimap(H, self.W, offsets)
        if kind == "sopool_attn":
            return sopool_attn(H, self.mu, offsets)
        if kind == "attnpool":
            return attnpool(H, self.mu, offsets)
        H = ag.as_tensor(H)
        off = _offsets(H, offsets)
        pooled = sopool_mattn(H, self.U, off)
        return ag.reshape(pooled, len(off) - 1, self.output_dim)

    def parameters(self):
        return list(self.params)
