"""TUDataset loading, node-feature construction and stratified folds.

File layout for a dataset ``DS`` inside ``directory/DS/`` (or ``directory``
itself):

* ``DS_A.txt``               one ``i, j`` edge per line, 1-indexed node ids
* ``DS_graph_indicator.txt`` graph id (1-indexed) of node ``i`` on line ``i``
* ``DS_graph_labels.txt``    one integer class label per graph
* ``DS_node_labels.txt``     optional, one integer label per node
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from sopool.errors import ConfigError, IntegrityError, ParseError, StratificationError

FEATURE_MODES = ("node-label-onehot", "degree-onehot", "constant")
BIOINFORMATICS = {"MUTAG", "PTC", "PTC_MR", "PROTEINS", "NCI1", "DD", "TOY"}
CONSTANT_FEATURE_DATASETS = {"REDDIT-BINARY", "REDDIT-MULTI-5K", "REDDIT-MULTI5K"}

FIXTURE_DIR = Path(__file__).parent / "data"


@dataclass
class Graph:
    n: int
    edges: np.ndarray  # (m, 2) int64, each undirected edge once with i < j
    x: np.ndarray  # (n, d) float64
    label: int
    node_labels: np.ndarray | None = None

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.n):
            raise IntegrityError(f"edge endpoint outside [0, {self.n})")
        if self.x.shape[0] != self.n:
            raise IntegrityError(f"feature rows {self.x.shape[0]} != node count {self.n}")

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        A[self.edges[:, 0], self.edges[:, 1]] = 1.0
        A[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return A

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def permuted(self, perm: np.ndarray) -> Graph:
        """Relabel so that new node ``i`` is old node ``perm[i]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(self.n)
        edges = _canonical_edges(inv[self.edges], self.n)
        nl = None if self.node_labels is None else self.node_labels[perm]
        return Graph(self.n, edges, self.x[perm], self.label, nl)


@dataclass
class Dataset:
    name: str
    graphs: list[Graph]
    num_classes: int
    feature_dim: int
    feature_mode: str
    label_values: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    @property
    def avg_nodes(self) -> float:
        return float(np.mean([g.n for g in self.graphs]))

    @property
    def has_node_labels(self) -> bool:
        return all(g.node_labels is not None for g in self.graphs)


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_ids: np.ndarray
    validation_ids: np.ndarray


def _canonical_edges(pairs: np.ndarray, n: int) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    keep = lo != hi
    if not keep.any():
        return np.zeros((0, 2), dtype=np.int64)
    keys = np.unique(lo[keep] * n + hi[keep])
    return np.stack([keys // n, keys % n], axis=1)


def _read_ints(path: Path, what: str) -> np.ndarray:
    if not path.is_file():
        raise ParseError(f"missing {what} file: {path.name}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([int(float(tok)) for tok in line.replace(",", " ").split()])
            except ValueError:
                raise ParseError(f"{path.name}:{lineno}: not an integer row: {line!r}") from None
    return np.array(rows, dtype=np.int64)


def resolve_dataset_dir(directory: str | os.PathLike, name: str) -> Path:
    """Accept either the parent folder (``dir/DS/DS_A.txt``) or the dataset folder."""
    directory = Path(directory)
    return directory / name if (directory / name).is_dir() else directory


def parse_tu_dataset(directory, name: str, feature_mode: str = "auto") -> Dataset:
    """Read a TUDataset directory into 0-indexed, deduplicated, symmetric graphs."""
    root = resolve_dataset_dir(directory, name)
    if not root.is_dir():
        raise ParseError(f"dataset directory not found: {root}")
    edges = _read_ints(root / f"{name}_A.txt", "edge list")
    indicator = _read_ints(root / f"{name}_graph_indicator.txt", "graph indicator")[:, 0]
    glabels = _read_ints(root / f"{name}_graph_labels.txt", "graph labels")[:, 0]
    nl_path = root / f"{name}_node_labels.txt"
    node_labels = _read_ints(nl_path, "node labels")[:, 0] if nl_path.is_file() else None

    num_graphs = len(glabels)
    num_nodes = len(indicator)
    if indicator.min() < 1 or indicator.max() > num_graphs:
        bad = indicator[(indicator < 1) | (indicator > num_graphs)][0]
        raise IntegrityError(f"node refers to graph id {bad}, but only {num_graphs} graph labels exist")
    if node_labels is not None and len(node_labels) != num_nodes:
        raise IntegrityError(f"{len(node_labels)} node labels for {num_nodes} nodes")
    if edges.size and edges.shape[1] != 2:
        raise ParseError(f"{name}_A.txt rows must hold two node ids")
    edges = edges.reshape(-1, 2) - 1
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise IntegrityError(f"edge endpoint outside 1..{num_nodes}")

    gid = indicator - 1
    order = np.argsort(gid, kind="stable")
    local = np.empty(num_nodes, dtype=np.int64)
    counts = np.bincount(gid, minlength=num_graphs)
    if np.any(counts == 0):
        raise IntegrityError(f"graph {int(np.flatnonzero(counts == 0)[0]) + 1} has no nodes")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local[order] = np.arange(num_nodes) - np.repeat(starts, counts)

    egid = gid[edges[:, 0]]
    if np.any(egid != gid[edges[:, 1]]):
        raise IntegrityError("edge connects nodes of different graphs")

    label_values = sorted(set(glabels.tolist()))
    remap = {v: i for i, v in enumerate(label_values)}
    graphs = []
    edge_order = np.argsort(egid, kind="stable")
    ecounts = np.bincount(egid, minlength=num_graphs)
    estarts = np.concatenate([[0], np.cumsum(ecounts)[:-1]])
    for g in range(num_graphs):
        n = int(counts[g])
        e = edges[edge_order[estarts[g] : estarts[g] + ecounts[g]]]
        nodes = order[starts[g] : starts[g] + n]
        graphs.append(
            Graph(
                n=n,
                edges=_canonical_edges(local[e], n),
                x=np.zeros((n, 0)),
                label=remap[int(glabels[g])],
                node_labels=None if node_labels is None else node_labels[nodes],
            )
        )
    raw = Dataset(name, graphs, len(label_values), 0, "none", label_values)
    return build_features(raw, feature_mode)


def default_feature_mode(dataset: Dataset) -> str:
    if dataset.name.upper() in CONSTANT_FEATURE_DATASETS:
        return "constant"
    if dataset.has_node_labels:
        return "node-label-onehot"
    return "degree-onehot"


def build_features(dataset: Dataset, mode: str = "auto") -> Dataset:
    """Return a copy of ``dataset`` whose graphs carry node features for ``mode``."""
    if mode == "auto":
        mode = default_feature_mode(dataset)
    if mode not in FEATURE_MODES:
        raise ConfigError(f"unknown feature mode {mode!r}; choose from {FEATURE_MODES}")
    if mode == "node-label-onehot":
        if not dataset.has_node_labels:
            raise ConfigError("node-label-onehot features need a node labels file")
        values = sorted(set(np.concatenate([g.node_labels for g in dataset.graphs]).tolist()))
        index = {v: i for i, v in enumerate(values)}
        d = len(values)

        def feats(g):
            return np.eye(d)[[index[v] for v in g.node_labels.tolist()]]

    elif mode == "degree-onehot":
        d = 1 + max(int(g.degrees().max(initial=0)) for g in dataset.graphs)

        def feats(g):
            return np.eye(d)[g.degrees()]

    else:
        d = 1

        def feats(g):
            return np.ones((g.n, 1))

    graphs = [replace(g, x=feats(g)) for g in dataset.graphs]
    return replace(dataset, graphs=graphs, feature_dim=d, feature_mode=mode)


def write_tu_dataset(dataset: Dataset, directory, name: str | None = None) -> Path:
    """Serialise to TUDataset files (each undirected edge written in both directions)."""
    name = name or dataset.name
    root = Path(directory) / name
    root.mkdir(parents=True, exist_ok=True)
    offset = 0
    a_lines, ind_lines, nl_lines, gl_lines = [], [], [], []
    values = dataset.label_values or list(range(dataset.num_classes))
    for gi, g in enumerate(dataset.graphs, 1):
        for i, j in g.edges.tolist():
            a_lines.append(f"{i + offset + 1}, {j + offset + 1}")
            a_lines.append(f"{j + offset + 1}, {i + offset + 1}")
        ind_lines.extend([str(gi)] * g.n)
        if g.node_labels is not None:
            nl_lines.extend(str(int(v)) for v in g.node_labels)
        gl_lines.append(str(values[g.label]))
        offset += g.n
    (root / f"{name}_A.txt").write_text("\n".join(a_lines) + "\n")
    (root / f"{name}_graph_indicator.txt").write_text("\n".join(ind_lines) + "\n")
    (root / f"{name}_graph_labels.txt").write_text("\n".join(gl_lines) + "\n")
    if dataset.has_node_labels:
        (root / f"{name}_node_labels.txt").write_text("\n".join(nl_lines) + "\n")
    return root


def load_fixture(feature_mode: str = "auto") -> Dataset:
    """The bundled two-graph toy dataset: a triangle (class 0) and a single edge (class 1)."""
    return parse_tu_dataset(FIXTURE_DIR, "TOY", feature_mode)


def stratified_kfold(labels, k: int = 10, seed: int = 0) -> list[FoldSplit]:
    """Seeded per-class shuffle, then round-robin assignment of graphs to folds.

    The round-robin pointer carries over between classes so fold sizes stay
    within one graph of each other. Accepts a :class:`Dataset` or a label array.
    """
    if isinstance(labels, Dataset):
        labels = labels.labels
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ConfigError(f"k must be at least 2, got {k}")
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < k):
        small = classes[counts < k][0]
        raise StratificationError(
            f"class {small} has {counts[classes == small][0]} members, fewer than k={k}"
        )
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    pointer = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        fold_of[members] = (pointer + np.arange(len(members))) % k
        pointer = (pointer + len(members)) % k
    ids = np.arange(len(labels))
    return [FoldSplit(f, ids[fold_of != f], ids[fold_of == f]) for f in range(k)]
