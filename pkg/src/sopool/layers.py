"""GIN-family message passing layers and the 5-layer concatenating stack."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from sopool import autograd as ag
from sopool.autograd import BatchNormState, Parameter, Tensor
from sopool.errors import ConfigError, ShapeError

VARIANTS = (
    "sum-mlp-gin0",
    "sum-mlp-gin-eps",
    "sum-1-layer",
    "mean-mlp",
    "mean-1-layer-gcn",
    "max-mlp",
    "max-1-layer-sage",
)
ALIASES = {
    "gin0": "sum-mlp-gin0",
    "gin-0": "sum-mlp-gin0",
    "gin-eps": "sum-mlp-gin-eps",
    "gineps": "sum-mlp-gin-eps",
    "sum-1": "sum-1-layer",
    "mean-1-layer": "mean-1-layer-gcn",
    "gcn": "mean-1-layer-gcn",
    "max-1-layer": "max-1-layer-sage",
    "sage": "max-1-layer-sage",
    "graphsage": "max-1-layer-sage",
}
NUM_LAYERS = 5


def canonical_variant(name: str) -> str:
    name = ALIASES.get(name.lower(), name.lower())
    if name not in VARIANTS:
        raise ConfigError(f"unknown GNN variant {name!r}; choose from {VARIANTS}")
    return name


@dataclass
class GraphBatch:
    """Disjoint union of graphs with node-offset bookkeeping.

    ``offsets[b]:offsets[b + 1]`` are the rows of graph ``b``. The aggregation
    operators are precomputed once per batch.
    """

    x: np.ndarray
    offsets: np.ndarray
    labels: np.ndarray
    adj: sp.csr_matrix
    graph_ids: np.ndarray

    def __post_init__(self):
        n = self.x.shape[0]
        with_self = (self.adj + sp.identity(n, format="csr")).tocsr()
        with_self.sort_indices()
        self.sum_self = with_self
        deg = np.asarray(with_self.sum(axis=1)).ravel()
        self.mean_self = (sp.diags(1.0 / deg) @ with_self).tocsr()
        self.self_indptr = with_self.indptr.astype(np.int64)
        self.self_indices = with_self.indices.astype(np.int64)

    @property
    def num_graphs(self) -> int:
        return len(self.offsets) - 1

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]


@dataclass
class WeightedGraph:
    """Block-diagonal dense weighted adjacency produced by hierarchical pooling."""

    adj: Tensor
    offsets: np.ndarray

    @property
    def num_graphs(self) -> int:
        return len(self.offsets) - 1


def batch_graphs(graphs, graph_ids=None) -> GraphBatch:
    """Stack graphs block-diagonally. Pooling later splits them again by ``offsets``."""
    graphs = list(graphs)
    if not graphs:
        raise ShapeError("batch_graphs: empty graph list")
    dims = {g.x.shape[1] for g in graphs}
    if len(dims) != 1:
        raise ShapeError(f"batch_graphs: feature dims differ {sorted(dims)}")
    sizes = np.array([g.n for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    rows, cols = [], []
    for g, off in zip(graphs, offsets[:-1]):
        e = g.edges + off
        rows.append(e[:, 0])
        cols.append(e[:, 1])
    r = np.concatenate(rows + cols)
    c = np.concatenate(cols + rows)
    n = int(offsets[-1])
    adj = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    ids = np.arange(len(graphs)) if graph_ids is None else np.asarray(graph_ids)
    return GraphBatch(
        x=np.concatenate([g.x for g in graphs], axis=0),
        offsets=offsets,
        labels=np.array([g.label for g in graphs], dtype=np.int64),
        adj=adj,
        graph_ids=ids,
    )


def as_batch(graph) -> GraphBatch | WeightedGraph:
    if isinstance(graph, (GraphBatch, WeightedGraph)):
        return graph
    return batch_graphs([graph])


def aggregate_neighbors(graph, H, mode: str, eps: Tensor | None = None) -> Tensor:
    """Neighbourhood aggregation including the node itself.

    ``sum``: h_v + sum of neighbours, or (1 + eps) h_v + sum when ``eps`` is
    given. ``mean`` / ``max``: over {v} together with its neighbours.
    """
    graph = as_batch(graph)
    H = ag.as_tensor(H)
    if isinstance(graph, WeightedGraph):
        if graph.adj.rows != H.rows:
            raise ShapeError(f"aggregate_neighbors: {H.rows} rows for {graph.adj.rows} nodes")
        if mode != "sum":
            raise ConfigError("weighted (pooled) graphs only support sum aggregation")
        out = ag.add(H, ag.matmul(graph.adj, H))
        return out if eps is None else ag.add(out, ag.scale(H, eps))
    if graph.num_nodes != H.rows:
        raise ShapeError(f"aggregate_neighbors: {H.rows} rows for {graph.num_nodes} nodes")
    if mode == "sum":
        if eps is None:
            return ag.spmm(graph.sum_self, H)
        return ag.add(ag.add(ag.spmm(graph.adj, H), H), ag.scale(H, eps))
    if mode == "mean":
        return ag.spmm(graph.mean_self, H)
    if mode == "max":
        return ag.csr_max(H, graph.self_indptr, graph.self_indices)
    raise ConfigError(f"unknown aggregation mode {mode!r}")


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str, bias: bool = True):
        self.W = Parameter(ag.glorot_uniform(rng, in_dim, out_dim), f"{name}.W")
        self.b = Parameter(np.zeros((1, out_dim)), f"{name}.b") if bias else None

    def __call__(self, x) -> Tensor:
        out = ag.matmul(x, self.W)
        return out if self.b is None else ag.add_bias(out, self.b)

    def parameters(self):
        return [self.W] if self.b is None else [self.W, self.b]


class BatchNorm:
    def __init__(self, width: int, name: str):
        self.gamma = Parameter(np.ones((1, width)), f"{name}.gamma")
        self.beta = Parameter(np.zeros((1, width)), f"{name}.beta")
        self.state = BatchNormState.fresh(width)

    def __call__(self, x, mode: str) -> Tensor:
        return ag.batch_norm(x, self.gamma, self.beta, mode, self.state)

    def parameters(self):
        return [self.gamma, self.beta]


class GinLayer:
    """One message-passing layer; ``variant`` picks aggregation and update."""

    def __init__(self, variant: str, in_dim: int, hidden_dim: int, rng: np.random.Generator, name: str = "gin"):
        if hidden_dim <= 0:
            raise ConfigError(f"hidden dim must be positive, got {hidden_dim}")
        self.variant = canonical_variant(variant)
        self.in_dim, self.hidden_dim = in_dim, hidden_dim
        self.aggregation = self.variant.split("-")[0]
        self.is_mlp = "-mlp" in self.variant
        self.eps = Parameter(np.zeros((1, 1)), f"{name}.eps") if self.variant == "sum-mlp-gin-eps" else None
        if self.is_mlp:
            self.lin1 = Linear(in_dim, hidden_dim, rng, f"{name}.lin1")
            self.bn1 = BatchNorm(hidden_dim, f"{name}.bn1")
            self.lin2 = Linear(hidden_dim, hidden_dim, rng, f"{name}.lin2")
            self.bn2 = BatchNorm(hidden_dim, f"{name}.bn2")
        else:
            self.lin = Linear(in_dim, hidden_dim, rng, f"{name}.lin")

    def __call__(self, graph, H, mode: str = "train") -> Tensor:
        H = ag.as_tensor(H)
        if H.cols != self.in_dim:
            raise ShapeError(f"{self.variant}: input width {H.cols}, layer expects {self.in_dim}")
        agg = aggregate_neighbors(graph, H, self.aggregation, self.eps)
        if not self.is_mlp:
            return ag.relu(self.lin(agg))
        h = ag.relu(self.bn1(self.lin1(agg), mode))
        return ag.relu(self.bn2(self.lin2(h), mode))

    def parameters(self):
        params = [] if self.eps is None else [self.eps]
        if self.is_mlp:
            for part in (self.lin1, self.bn1, self.lin2, self.bn2):
                params += part.parameters()
        else:
            params += self.lin.parameters()
        return params


class GnnStack:
    """Five GIN layers; the output concatenates every layer's node representations."""

    def __init__(self, variant: str, in_dim: int, hidden_dim: int, rng: np.random.Generator, num_layers: int = NUM_LAYERS):
        self.layers = []
        dim = in_dim
        for i in range(num_layers):
            self.layers.append(GinLayer(variant, dim, hidden_dim, rng, name=f"gnn{i}"))
            dim = hidden_dim
        self.in_dim = in_dim
        self.output_dim = num_layers * hidden_dim

    def __call__(self, graph, mode: str = "train") -> Tensor:
        graph = as_batch(graph)
        if graph.x.shape[1] != self.in_dim:
            raise ShapeError(f"graph features have width {graph.x.shape[1]}, stack expects {self.in_dim}")
        h = Tensor(graph.x)
        outs = []
        for layer in self.layers:
            h = layer(graph, h, mode)
            outs.append(h)
        return ag.concat_cols(outs)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]


def forward_stack(stack: GnnStack, graph, mode: str = "train") -> Tensor:
    return stack(graph, mode)


def gin_layer_forward(layer: GinLayer, graph, H, mode: str = "train") -> Tensor:
    return layer(graph, H, mode)
