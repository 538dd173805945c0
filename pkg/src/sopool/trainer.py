"""Model assembly, the cross-validated training protocol and result files."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from sopool import autograd as ag
from sopool import kernels
from sopool.autograd import Parameter, Tape
from sopool.errors import ConfigError, DivergenceError, ResultNotFoundError, SchemaError
from sopool.graphdata import BIOINFORMATICS, Dataset, stratified_kfold
from sopool.layers import GinLayer, GnnStack, Linear, batch_graphs, canonical_variant
from sopool.pooling import GlobalPooling, canonical_kind, hierarchical_pool

SCHEMA_VERSION = 1
CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ("csv_schema_version", "dataset", "model", "mean", "std", "selected_epoch", "folds")

HIDDEN_GRID = (16, 32, 64)
BATCH_GRID = (32, 128)
BLOCKS_GRID = (1, 2, 3)

__all__ = [
    "ExperimentConfig", "CVResult", "FlatModel", "HierarchicalModel", "batch_graphs",
    "build_flat_model", "build_hierarchical_model", "build_model", "train_cv", "train_fold",
    "grid_search", "lr_at", "persist_result", "load_result", "export_csv",
]


@dataclass
class ExperimentConfig:
    dataset: str = "MUTAG"
    gnn: str = "gin0"
    pool: str = "sopool_bimap"
    hidden: int = 32
    batch_size: int = 32
    f_prime: int | None = None
    k: list[int] | None = None
    blocks: int | None = None
    lr: float = 0.01
    lr_decay: float = 0.5
    decay_every: int = 50
    epochs: int = 300
    dropout: float = 0.5
    seed: int = 0
    folds: int = 10
    epoch_select: str = "mean"
    feature_mode: str = "auto"
    allow_off_grid: bool = False
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    @property
    def hierarchical(self) -> bool:
        return bool(self.blocks)

    def resolved_pool(self) -> str:
        """``auto`` means sum on bioinformatics data and averaging on social data."""
        if self.pool == "auto":
            return "sum" if self.dataset.upper() in BIOINFORMATICS else "avg"
        return canonical_kind(self.pool)

    def validate(self) -> ExperimentConfig:
        canonical_variant(self.gnn)
        pool = self.resolved_pool()
        if self.epoch_select not in ("mean", "per-fold"):
            raise ConfigError(f"--epoch-select must be 'mean' or 'per-fold', got {self.epoch_select!r}")
        if self.hidden <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ConfigError("hidden, batch size and epochs must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {self.dropout}")
        if pool in ("sopool_bimap", "covpool") and not self.f_prime:
            raise ConfigError(f"pooling {pool} needs --fprime")
        if self.f_prime is not None and self.f_prime <= 0:
            raise ConfigError("--fprime must be positive")
        if self.hierarchical:
            if pool != "sopool_mattn":
                raise ConfigError("hierarchical models use sopool_mattn pooling")
            if canonical_variant(self.gnn).split("-")[0] != "sum":
                raise ConfigError("hierarchical blocks need a sum-aggregation GNN (pooled graphs are weighted)")
            if self.k is not None and len(self.k) not in (1, self.blocks):
                raise ConfigError(f"--k needs 1 or {self.blocks} values, got {len(self.k)}")
        elif pool == "sopool_mattn" and not self.k:
            raise ConfigError("flat sopool_mattn needs --k")
        if self.k is not None and any(v <= 0 for v in self.k):
            raise ConfigError("--k values must be positive")
        if not self.allow_off_grid:
            if self.hidden not in HIDDEN_GRID:
                raise ConfigError(f"hidden {self.hidden} is off the grid {HIDDEN_GRID} (use --allow-off-grid)")
            if self.batch_size not in BATCH_GRID:
                raise ConfigError(f"batch {self.batch_size} is off the grid {BATCH_GRID} (use --allow-off-grid)")
            if self.hierarchical and self.blocks not in BLOCKS_GRID:
                raise ConfigError(f"blocks {self.blocks} is off the grid {BLOCKS_GRID} (use --allow-off-grid)")
        return self

    def block_sizes(self, avg_nodes: float) -> list[int]:
        """Heads per block: given ``k`` values, else ceil(avg n / 2) halving each block."""
        if self.k:
            return list(self.k) * self.blocks if len(self.k) == 1 else list(self.k)
        sizes, k = [], math.ceil(avg_nodes / 2)
        for _ in range(self.blocks):
            sizes.append(max(1, k))
            k = math.ceil(k / 2)
        return sizes

    def label(self) -> str:
        return f"{canonical_variant(self.gnn).replace('sum-mlp-', '')}+{self.resolved_pool()}" + (
            f"x{self.blocks}" if self.hierarchical else ""
        )


def lr_at(epoch: int, base: float = 0.01, decay: float = 0.5, every: int = 50) -> float:
    """Step schedule; ``epoch`` counts from 0."""
    return base * decay ** (epoch // every)


class FlatModel:
    """GNN stack -> global pooling -> dropout -> linear classifier."""

    def __init__(self, config: ExperimentConfig, in_dim: int, num_classes: int, rng: np.random.Generator):
        self.config = config
        self.stack = GnnStack(config.gnn, in_dim, config.hidden, rng)
        k = config.k[0] if config.k else None
        self.pool = GlobalPooling(config.resolved_pool(), self.stack.output_dim, rng, config.f_prime, k)
        self.classifier = Linear(self.pool.output_dim, num_classes, rng, "classifier")
        self._set_bn(config)

    def _set_bn(self, config):
        for layer in self.stack.layers:
            if layer.is_mlp:
                for bn in (layer.bn1, layer.bn2):
                    bn.state.momentum, bn.state.eps = config.bn_momentum, config.bn_eps

    @property
    def classifier_input_dim(self) -> int:
        return self.pool.output_dim

    def __call__(self, batch, mode: str = "eval", rng: np.random.Generator | None = None):
        H = self.stack(batch, mode)
        h_graph = self.pool(H, batch.offsets)
        h_graph = ag.dropout(h_graph, self.config.dropout, mode, rng)
        return self.classifier(h_graph)

    def parameters(self) -> list[Parameter]:
        return self.stack.parameters() + self.pool.parameters() + self.classifier.parameters()


class HierarchicalModel:
    """Blocks of (GNN layer -> multi-head pooling with adjacency update).

    Each block's pooled nodes are sum-read-out into its own classifier; the
    prediction averages the block logits.
    """

    def __init__(self, config: ExperimentConfig, in_dim: int, num_classes: int, rng: np.random.Generator,
                 avg_nodes: float = 2.0):
        self.config = config
        self.ks = config.block_sizes(avg_nodes)
        self.layers, self.heads, self.classifiers = [], [], []
        dim = in_dim
        for i, k in enumerate(self.ks):
            layer = GinLayer(config.gnn, dim, config.hidden, rng, name=f"block{i}.gnn")
            if layer.is_mlp:
                for bn in (layer.bn1, layer.bn2):
                    bn.state.momentum, bn.state.eps = config.bn_momentum, config.bn_eps
            self.layers.append(layer)
            self.heads.append(Parameter(ag.glorot_uniform(rng, k, config.hidden), f"block{i}.U"))
            self.classifiers.append(Linear(config.hidden, num_classes, rng, f"block{i}.classifier"))
            dim = config.hidden

    def forward_blocks(self, batch, mode: str = "eval", rng=None):
        """Per-block logits and pooled graphs (for inspection and tests)."""
        graph, H = batch, ag.Tensor(batch.x)
        logits, pooled = [], []
        for layer, U, clf in zip(self.layers, self.heads, self.classifiers):
            H = layer(graph, H, mode)
            graph, H = hierarchical_pool(graph, H, U)
            pooled.append((graph, H))
            readout = ag.segment_sum(H, graph.offsets)
            logits.append(clf(ag.dropout(readout, self.config.dropout, mode, rng)))
        return logits, pooled

    def __call__(self, batch, mode: str = "eval", rng: np.random.Generator | None = None):
        logits, _ = self.forward_blocks(batch, mode, rng)
        total = logits[0]
        for extra in logits[1:]:
            total = ag.add(total, extra)
        return ag.scale(total, 1.0 / len(logits))

    def parameters(self) -> list[Parameter]:
        params = []
        for layer, U, clf in zip(self.layers, self.heads, self.classifiers):
            params += layer.parameters() + [U] + clf.parameters()
        return params


def build_flat_model(config: ExperimentConfig, in_dim: int, num_classes: int, rng: np.random.Generator) -> FlatModel:
    config.validate()
    if config.hierarchical:
        raise ConfigError("config asks for a hierarchical model (blocks set)")
    return FlatModel(config, in_dim, num_classes, rng)


def build_hierarchical_model(config: ExperimentConfig, in_dim: int, num_classes: int, rng: np.random.Generator,
                             avg_nodes: float = 2.0) -> HierarchicalModel:
    config.validate()
    if not config.hierarchical:
        raise ConfigError("hierarchical models need blocks >= 1")
    return HierarchicalModel(config, in_dim, num_classes, rng, avg_nodes)


def build_model(config: ExperimentConfig, dataset: Dataset, rng: np.random.Generator):
    if config.hierarchical:
        return build_hierarchical_model(config, dataset.feature_dim, dataset.num_classes, rng, dataset.avg_nodes)
    return build_flat_model(config, dataset.feature_dim, dataset.num_classes, rng)


def predict(model, graphs) -> np.ndarray:
    """Eval-mode class predictions for a list of graphs scored as one batch."""
    logits = model(batch_graphs(graphs), "eval")
    return logits.value.argmax(axis=1)


def _minibatches(ids: np.ndarray, size: int, dataset: Dataset) -> list[np.ndarray]:
    chunks = [ids[i : i + size] for i in range(0, len(ids), size)]
    # batch norm needs >= 2 rows in train mode
    if len(chunks) > 1 and sum(dataset.graphs[i].n for i in chunks[-1]) < 2:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


def train_fold(config: ExperimentConfig, dataset: Dataset, train_ids, val_ids, rng: np.random.Generator,
               fold_index: int = 0, on_batch=None) -> dict:
    """Train one fold; returns per-epoch validation accuracy and mean training loss."""
    model = build_model(config, dataset, rng)
    params = model.parameters()
    val_graphs = [dataset.graphs[i] for i in val_ids]
    val_batch = batch_graphs(val_graphs, val_ids)
    val_labels = val_batch.labels
    train_ids = np.asarray(train_ids)
    accs, losses = [], []
    for epoch in range(config.epochs):
        lr = lr_at(epoch, config.lr, config.lr_decay, config.decay_every)
        epoch_loss = []
        for chunk in _minibatches(rng.permutation(train_ids), config.batch_size, dataset):
            batch = batch_graphs([dataset.graphs[i] for i in chunk], chunk)
            if on_batch is not None:
                on_batch(fold_index, epoch, batch.graph_ids)
            with Tape() as tape:
                loss = ag.cross_entropy_loss(model(batch, "train", rng), batch.labels)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(f"fold {fold_index}, epoch {epoch}: non-finite training loss {value}")
            tape.backward(loss)
            ag.adam_step(params, lr)
            epoch_loss.append(value)
        logits = model(val_batch, "eval")
        if not np.all(np.isfinite(logits.value)):
            raise DivergenceError(f"fold {fold_index}, epoch {epoch}: non-finite validation logits")
        accs.append(float(np.mean(logits.value.argmax(axis=1) == val_labels)))
        losses.append(float(np.mean(epoch_loss)))
    return {"accuracy": accs, "loss": losses}


@dataclass
class CVResult:
    fold_accuracies: list[list[float]]
    selected_epoch: int
    selected_per_fold: list[int]
    mean: float
    std: float
    config: dict
    wall_time: float
    epoch_select: str = "mean"
    failed: bool = False
    diagnostics: list[str] = field(default_factory=list)
    fold_losses: list[list[float]] = field(default_factory=list)
    backend: str = kernels.BACKEND

    @staticmethod
    def summarize(fold_accuracies, epoch_select: str = "mean"):
        """(selected_epoch, per-fold selected epochs, mean, std) at the selection rule."""
        if not fold_accuracies:
            return -1, [], float("nan"), float("nan")
        acc = np.asarray(fold_accuracies, dtype=np.float64)
        if epoch_select == "mean":
            epoch = int(np.argmax(acc.mean(axis=0)))
            chosen = acc[:, epoch]
            per_fold = [epoch] * acc.shape[0]
        else:
            per_fold = [int(e) for e in acc.argmax(axis=1)]
            chosen = acc[np.arange(acc.shape[0]), per_fold]
            epoch = -1
        return epoch, per_fold, float(chosen.mean()), float(chosen.std())

    def row(self) -> str:
        return f"{self.config.get('dataset')} {self._model_label()}: {self.mean:.4f}±{self.std:.4f}"

    def _model_label(self) -> str:
        return ExperimentConfig(**_config_kwargs(self.config)).label()


def _config_kwargs(d: dict) -> dict:
    names = {f.name for f in fields(ExperimentConfig)}
    return {k: v for k, v in d.items() if k in names}


def _fold_job(args):
    config, dataset, split, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    return train_fold(config, dataset, split.train_ids, split.validation_ids, rng, split.fold_index)


def train_cv(config: ExperimentConfig, dataset: Dataset, jobs: int = 1, on_batch=None) -> CVResult:
    """k-fold cross-validation; every fold owns an RNG stream spawned from ``config.seed``.

    The selected epoch maximises the fold-averaged validation accuracy
    (``epoch_select='mean'``) or each fold's own accuracy (``'per-fold'``).
    A diverging fold stops the run and marks the result failed.
    """
    config.validate()
    start = time.perf_counter()
    splits = stratified_kfold(dataset, config.folds, config.seed)
    seeds = np.random.SeedSequence(config.seed).spawn(len(splits))
    runs, diagnostics, failed = [], [], False
    if jobs > 1 and on_batch is None and len(splits) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_fold_job, (config, dataset, s, q)) for s, q in zip(splits, seeds)]
            for fut in futures:
                try:
                    runs.append(fut.result())
                except DivergenceError as exc:
                    failed = True
                    diagnostics.append(str(exc))
    else:
        for split, seq in zip(splits, seeds):
            rng = np.random.default_rng(seq)
            try:
                runs.append(train_fold(config, dataset, split.train_ids, split.validation_ids, rng,
                                       split.fold_index, on_batch))
            except DivergenceError as exc:
                failed = True
                diagnostics.append(str(exc))
                break
    accs = [r["accuracy"] for r in runs]
    epoch, per_fold, mean, std = CVResult.summarize(accs, config.epoch_select)
    return CVResult(
        fold_accuracies=accs,
        selected_epoch=epoch,
        selected_per_fold=per_fold,
        mean=mean,
        std=std,
        config=asdict(config),
        wall_time=time.perf_counter() - start,
        epoch_select=config.epoch_select,
        failed=failed,
        diagnostics=diagnostics,
        fold_losses=[r["loss"] for r in runs],
    )


def grid_search(config: ExperimentConfig, dataset: Dataset, hiddens=HIDDEN_GRID, batches=BATCH_GRID, jobs: int = 1):
    """One CV run per (hidden, batch) pair; the best mean accuracy wins for the whole dataset."""
    results = []
    for hidden in hiddens:
        for batch in batches:
            cfg = ExperimentConfig(**{**asdict(config), "hidden": hidden, "batch_size": batch})
            results.append(train_cv(cfg, dataset, jobs))
    ok = [r for r in results if not r.failed]
    best = max(ok, key=lambda r: r.mean) if ok else None
    return best, results


def persist_result(result: CVResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"schema_version": SCHEMA_VERSION, **asdict(result)}
    path.write_text(json.dumps(payload, indent=2, allow_nan=True) + "\n")
    return path


def load_result(path) -> CVResult:
    """Load and re-validate a results file (schema version, mean/std and epoch recomputation)."""
    path = Path(path)
    if not path.is_file():
        raise ResultNotFoundError(f"results file not found: {path}")
    payload = json.loads(path.read_text())
    version = payload.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"results schema version {version!r}; this build reads version {SCHEMA_VERSION}")
    names = {f.name for f in fields(CVResult)}
    unknown = set(payload) - names
    if unknown:
        raise SchemaError(f"unexpected fields in results file: {sorted(unknown)}")
    result = CVResult(**payload)
    epoch, per_fold, mean, std = CVResult.summarize(result.fold_accuracies, result.epoch_select)
    for name, stored, fresh in (("mean", result.mean, mean), ("std", result.std, std)):
        if not (np.isnan(stored) and np.isnan(fresh)) and not math.isclose(stored, fresh, rel_tol=1e-12, abs_tol=1e-12):
            raise SchemaError(f"stored {name} {stored!r} does not match recomputed {fresh!r}")
    if epoch != result.selected_epoch or per_fold != result.selected_per_fold:
        raise SchemaError("stored selected epoch does not match the per-fold accuracies")
    return result


def export_csv(result: CVResult, path) -> Path:
    """Append one summary row; writes the header when the file is new."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(CSV_COLUMNS)
        w.writerow([CSV_SCHEMA_VERSION, result.config.get("dataset"), result._model_label(),
                    f"{result.mean:.6f}", f"{result.std:.6f}", result.selected_epoch, len(result.fold_accuracies)])
    return path


def default_jobs() -> int:
    return os.cpu_count() or 1
