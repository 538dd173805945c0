"""Dense reverse-mode automatic differentiation.

Every value is a 2-D, C-contiguous float64 array wrapped in a :class:`Tensor`.
Operations record themselves on the active :class:`Tape` only when one is
open and at least one input requires a gradient; outside a tape the same
functions are plain numpy evaluation, which is how evaluation mode runs.

    with Tape() as tape:
        loss = cross_entropy_loss(model(batch), labels)
    tape.backward(loss)
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from sopool import kernels
from sopool.errors import ConfigError, ContractError, LabelError, ShapeError

_local = threading.local()
_faulty_ops: set[str] = set()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


@contextmanager
def branch_trace():
    """Collect the discrete choices (ReLU masks, max arg-indices) of the ops run inside.

    Two evaluations with equal traces lie on the same smooth piece of the
    function. Used by the gradient checker to spot probes that straddle a kink.
    """
    prev = getattr(_local, "branches", None)
    _local.branches = trace = []
    try:
        yield trace
    finally:
        _local.branches = prev


def _log_branch(arr: np.ndarray) -> None:
    trace = getattr(_local, "branches", None)
    if trace is not None:
        trace.append(np.ascontiguousarray(arr).tobytes())


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Append-only record of differentiable operations in execution order."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "op", "parents", "backward_fn", "index")

    def __init__(self, value, requires_grad: bool = False):
        v = np.asarray(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(-1, 1)
        elif v.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {v.shape}")
        self.value = np.ascontiguousarray(v)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = None
        self.parents = ()
        self.backward_fn = None
        self.index = -1

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        tag = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}{tag})"


class Parameter(Tensor):
    """Trainable leaf with Adam state. ``grad``, ``m`` and ``v`` share its shape."""

    __slots__ = ("m", "v", "step", "name")

    def __init__(self, value, name: str = ""):
        super().__init__(value, requires_grad=True)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step = 0
        self.name = name

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name or '?'}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@contextmanager
def inject_fault(op: str):
    """Corrupt the backward rule of ``op`` (doubles its input gradients).

    Negative control for the gradient-check suite.
    """
    _faulty_ops.add(op)
    try:
        yield
    finally:
        _faulty_ops.discard(op)


def _make(value, op: str, parents: tuple, backward_fn) -> Tensor:
    out = Tensor(value)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        if op in _faulty_ops:
            inner = backward_fn

            def backward_fn(g, inner=inner):
                return tuple(None if d is None else 2.0 * d for d in inner(g))

        out.requires_grad = True
        out.op = op
        out.parents = parents
        out.backward_fn = backward_fn
        out.index = len(tape.nodes)
        tape.nodes.append(out)
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into the ``grad`` of every reachable leaf."""
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    if not loss.requires_grad or loss.backward_fn is None:
        return
    if loss.index >= len(tape.nodes) or tape.nodes[loss.index] is not loss:
        raise ContractError("loss was not recorded on this tape")
    pending = {id(loss): np.ones((1, 1))}
    for node in reversed(tape.nodes[: loss.index + 1]):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.backward_fn is None:
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.value)
                parent.grad += pg
            else:
                key = id(parent)
                pending[key] = pending[key] + pg if key in pending else pg


# ----------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return _make(av @ bv, "matmul", (a, b), lambda g: (g @ bv.T, av.T @ g))


def row_products(x, m) -> Tensor:
    """``x @ m.T`` with every entry summed over columns in a fixed order.

    Unlike a BLAS product, entry (r, j) depends only on row r of ``x`` and row
    j of ``m``, so it is bit-identical however many rows either side has.
    """
    x, m = as_tensor(x), as_tensor(m)
    if x.cols != m.cols:
        raise ShapeError(f"row_products: {x.shape} and {m.shape} differ in width")
    xv, mv = x.value, m.value
    return _make(kernels.row_products(xv, mv), "row_products", (x, m), lambda g: (g @ mv, g.T @ xv))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.value.T, "transpose", (a,), lambda g: (g.T,))


def reshape(a, rows: int, cols: int) -> Tensor:
    a = as_tensor(a)
    if rows * cols != a.value.size:
        raise ShapeError(f"reshape: {a.shape} has {a.value.size} entries, not {rows}x{cols}")
    shape = a.shape
    return _make(a.value.reshape(rows, cols), "reshape", (a,), lambda g: (g.reshape(shape),))


def spmm(A, x) -> Tensor:
    """Constant sparse (or dense ndarray) matrix times tensor; no gradient for ``A``."""
    x = as_tensor(x)
    if A.shape[1] != x.rows:
        raise ShapeError(f"spmm: cannot multiply {A.shape} by {x.shape}")
    AT = A.T
    return _make(np.asarray(A @ x.value), "spmm", (x,), lambda g: (np.asarray(AT @ g),))


def concat_cols(tensors) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if len({t.rows for t in tensors}) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[t.shape for t in tensors]}")
    cuts = np.cumsum([t.cols for t in tensors])[:-1]
    return _make(
        np.concatenate([t.value for t in tensors], axis=1),
        "concat_cols",
        tensors,
        lambda g: tuple(np.split(g, cuts, axis=1)),
    )


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return _make(x.value.sum().reshape(1, 1), "sum_all", (x,), lambda g: (np.full(shape, g[0, 0]),))


# ------------------------------------------------------------------ elementwise


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return _make(a.value + b.value, "add", (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return _make(a.value - b.value, "sub", (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return _make(av * bv, "mul", (a, b), lambda g: (g * bv, g * av))


def scale(x, s) -> Tensor:
    """``s * x`` for a Python float or a trainable 1x1 tensor ``s``."""
    x = as_tensor(x)
    xv = x.value
    if isinstance(s, np.ndarray) and s.ndim > 0:
        s = Tensor(s)
    if isinstance(s, Tensor):
        if s.shape != (1, 1):
            raise ShapeError(f"scale: factor must be 1x1, got {s.shape}")
        sv = s.value[0, 0]
        return _make(
            sv * xv, "scale", (x, s), lambda g: (g * sv, np.array([[np.sum(g * xv)]]))
        )
    s = float(s)
    return _make(s * xv, "scale", (x,), lambda g: (g * s,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.value > 0.0
    _log_branch(mask)
    return _make(np.where(mask, x.value, 0.0), "relu", (x,), lambda g: (g * mask,))


def add_bias(x, b) -> Tensor:
    """Add a 1 x cols row vector to every row."""
    x, b = as_tensor(x), as_tensor(b)
    if b.shape != (1, x.cols):
        raise ShapeError(f"add_bias: bias {b.shape} does not fit {x.shape}")
    return _make(x.value + b.value, "add_bias", (x, b), lambda g: (g, g.sum(axis=0, keepdims=True)))


def scale_rows(x, s) -> Tensor:
    """Multiply row i of ``x`` by ``s[i, 0]``."""
    x, s = as_tensor(x), as_tensor(s)
    if s.shape != (x.rows, 1):
        raise ShapeError(f"scale_rows: scales {s.shape} do not fit {x.shape}")
    xv, sv = x.value, s.value
    return _make(
        xv * sv, "scale_rows", (x, s), lambda g: (g * sv, np.sum(g * xv, axis=1, keepdims=True))
    )


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "relu": relu, "scale": scale}


def elementwise(kind: str, *operands) -> Tensor:
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ConfigError(f"unknown elementwise kind {kind!r}") from None
    return fn(*operands)


# ------------------------------------------------------- normalisation & heads


def softmax_columns(v) -> Tensor:
    v = as_tensor(v)
    if v.value.size == 0:
        raise ShapeError("softmax_columns: empty input")
    if v.cols != 1:
        raise ShapeError(f"softmax_columns: expected a single column, got {v.shape}")
    e = np.exp(v.value - v.value.max())
    p = e / e.sum()
    return _make(p, "softmax_columns", (v,), lambda g: (p * (g - np.sum(p * g)),))


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, width: int) -> BatchNormState:
        return cls(np.zeros((1, width)), np.ones((1, width)))


def batch_norm(x, gamma, beta, mode: str, state: BatchNormState) -> Tensor:
    """Per-column normalisation over rows.

    Train mode normalises with the biased batch variance and updates the
    running statistics (unbiased variance) with ``state.momentum``; eval mode
    normalises with the running statistics.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != (1, x.cols) or beta.shape != (1, x.cols):
        raise ShapeError(f"batch_norm: gamma {gamma.shape} / beta {beta.shape} vs input {x.shape}")
    xv, gv = x.value, gamma.value
    if mode == "eval":
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (xv - state.running_mean) * inv
        return _make(
            xhat * gv + beta.value,
            "batch_norm",
            (x, gamma, beta),
            lambda g: (g * gv * inv, np.sum(g * xhat, axis=0, keepdims=True), g.sum(axis=0, keepdims=True)),
        )
    if mode != "train":
        raise ConfigError(f"batch_norm mode must be 'train' or 'eval', got {mode!r}")
    n = x.rows
    if n < 2:
        raise ShapeError("batch_norm: train mode needs at least 2 rows (degenerate batch)")
    mean = xv.mean(axis=0, keepdims=True)
    var = xv.var(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (xv - mean) * inv
    m = state.momentum
    state.running_mean = (1.0 - m) * state.running_mean + m * mean
    state.running_var = (1.0 - m) * state.running_var + m * var * n / (n - 1)

    def bn_backward(g):
        gx = g * gv
        dx = inv * (gx - gx.mean(axis=0, keepdims=True) - xhat * np.mean(gx * xhat, axis=0, keepdims=True))
        return dx, np.sum(g * xhat, axis=0, keepdims=True), g.sum(axis=0, keepdims=True)

    return _make(xhat * gv + beta.value, "batch_norm", (x, gamma, beta), bn_backward)


def dropout(x, rate: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` at train time."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    x = as_tensor(x)
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in train mode needs the experiment RNG")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _make(x.value * mask, "dropout", (x,), lambda g: (g * mask,))


def cross_entropy_loss(logits, labels) -> Tensor:
    """Mean negative log-softmax of the true class over the rows of ``logits``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    b, c = logits.shape
    if labels.shape[0] != b:
        raise ShapeError(f"cross_entropy_loss: {labels.shape[0]} labels for {b} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelError(f"cross_entropy_loss: labels must lie in [0, {c})")
    rows = np.arange(b)
    top = logits.value.argmax(axis=1)
    z = logits.value - logits.value[rows, top][:, None]
    # the max term contributes exactly 1; log1p keeps tiny tails exact
    e = np.exp(z)
    e[rows, top] = 0.0
    lse = np.log1p(e.sum(axis=1, keepdims=True))
    logp = z - lse
    loss = float(np.mean(lse[:, 0] - z[rows, labels]))

    def ce_backward(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (d * (g[0, 0] / b),)

    return _make(np.array([[loss]]), "cross_entropy", (logits,), ce_backward)


# ------------------------------------------------------------ segment kernels


def _offsets(offsets, n: int) -> np.ndarray:
    off = np.asarray(offsets, dtype=np.int64)
    if off.ndim != 1 or off.size < 2 or off[0] != 0 or off[-1] != n or np.any(np.diff(off) <= 0):
        raise ShapeError(f"segment offsets must run 0..{n} with non-empty segments")
    return off


def segment_sum(x, offsets) -> Tensor:
    x = as_tensor(x)
    off = _offsets(offsets, x.rows)
    counts = np.diff(off)
    return _make(
        np.add.reduceat(x.value, off[:-1], axis=0),
        "segment_sum",
        (x,),
        lambda g: (np.repeat(g, counts, axis=0),),
    )


def segment_mean(x, offsets) -> Tensor:
    x = as_tensor(x)
    off = _offsets(offsets, x.rows)
    counts = np.diff(off)[:, None].astype(np.float64)
    return _make(
        np.add.reduceat(x.value, off[:-1], axis=0) / counts,
        "segment_mean",
        (x,),
        lambda g: (np.repeat(g / counts, counts[:, 0].astype(np.int64), axis=0),),
    )


def csr_max(x, indptr, indices) -> Tensor:
    """``out[r] = max over x[indices[indptr[r]:indptr[r+1]]]``, columnwise.

    Ties go to the first neighbour in CSR order, which receives the whole
    gradient.
    """
    x = as_tensor(x)
    out, arg = kernels.csr_max(indptr, indices, x.value)
    _log_branch(arg)
    n = x.rows
    return _make(out, "csr_max", (x,), lambda g: (kernels.scatter_rows_add(arg, g, n),))


def segment_max(x, offsets) -> Tensor:
    x = as_tensor(x)
    off = _offsets(offsets, x.rows)
    return csr_max(x, off, np.arange(x.rows, dtype=np.int64))


def segment_softmax(s, offsets) -> Tensor:
    s = as_tensor(s)
    if s.cols != 1:
        raise ShapeError(f"segment_softmax: expected a single column, got {s.shape}")
    off = _offsets(offsets, s.rows)
    p = kernels.segment_softmax(s.value[:, 0], off)
    return _make(
        p[:, None],
        "segment_softmax",
        (s,),
        lambda g: (kernels.segment_softmax_backward(p, g[:, 0], off)[:, None],),
    )


def segment_cross(x, y, offsets) -> Tensor:
    """Row ``b`` holds ``x_b.T @ y_b`` flattened row-major, for each segment ``b``."""
    x, y = as_tensor(x), as_tensor(y)
    if x.rows != y.rows:
        raise ShapeError(f"segment_cross: row counts differ {x.shape} vs {y.shape}")
    off = _offsets(offsets, x.rows)
    xv, yv = x.value, y.value
    return _make(
        kernels.segment_cross(xv, yv, off),
        "segment_cross",
        (x, y),
        lambda g: kernels.segment_cross_backward(g, xv, yv, off),
    )


def segment_gram(x, offsets) -> Tensor:
    """Per-segment ``x_b.T @ x_b`` (flattened). Gradient flows through both factors."""
    return segment_cross(x, x, offsets)


def broadcast_segments(x, offsets) -> Tensor:
    """Repeat row ``b`` of ``x`` once per row of segment ``b``."""
    x = as_tensor(x)
    off = np.asarray(offsets, dtype=np.int64)
    if x.rows != off.size - 1:
        raise ShapeError(f"broadcast_segments: {x.rows} rows for {off.size - 1} segments")
    counts = np.diff(off)
    return _make(
        np.repeat(x.value, counts, axis=0),
        "broadcast_segments",
        (x,),
        lambda g: (np.add.reduceat(g, off[:-1], axis=0),),
    )


def expand_blocks(z, offsets) -> Tensor:
    """Scatter an ``N x k`` matrix into block layout ``N x (B*k)``.

    Row ``i`` of segment ``b`` lands in columns ``b*k:(b+1)*k``; everything
    else is zero. Used to assemble the block-diagonal contribution matrix.
    """
    z = as_tensor(z)
    off = _offsets(offsets, z.rows)
    k = z.cols
    seg = np.repeat(np.arange(off.size - 1), np.diff(off))
    cols = seg[:, None] * k + np.arange(k)[None, :]
    rows = np.arange(z.rows)[:, None]
    out = np.zeros((z.rows, (off.size - 1) * k))
    out[rows, cols] = z.value
    return _make(out, "expand_blocks", (z,), lambda g: (g[rows, cols],))


# ---------------------------------------------------------------- optimisation


def adam_step(params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update; zeroes each gradient afterwards."""
    for p in params:
        g = p.grad
        if g.shape != p.value.shape:
            raise ShapeError(f"adam_step: grad {g.shape} vs value {p.value.shape} for {p!r}")
        p.step += 1
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1**p.step)
        v_hat = p.v / (1.0 - beta2**p.step)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


# ------------------------------------------------------------ gradient oracle


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max-norm relative error ``|a - n|_inf / max(|a|_inf, |n|_inf)``.

    Both gradients all-zero counts as exact agreement.
    """
    scale_ = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale_ == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale_)


def numeric_gradient(fn, x: Tensor, h: float = 1e-5, entries=None, skip_kinks: bool = False) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. ``x.value`` (perturbed in place).

    ``entries`` restricts the probe to a subset of flat indices; the rest of
    the returned array is NaN. With ``skip_kinks`` an entry whose +h or -h
    evaluation takes a different branch (see :func:`branch_trace`) than the
    unperturbed point is also left NaN.
    """
    flat = x.value.reshape(-1)
    out = np.full(flat.shape, np.nan)
    idx = range(flat.size) if entries is None else entries
    if skip_kinks:
        with branch_trace() as base:
            fn()
    for i in idx:
        old = flat[i]
        with branch_trace() as t_up:
            flat[i] = old + h
            up = fn()
        with branch_trace() as t_down:
            flat[i] = old - h
            down = fn()
        flat[i] = old
        if skip_kinks and (t_up != base or t_down != base):
            continue
        out[i] = (up - down) / (2.0 * h)
    return out.reshape(x.shape)


@dataclass
class GradCheck:
    name: str
    rel_err: float
    per_input: list = field(default_factory=list)
    probed: int = 0
    skipped: int = 0


def check_gradients(name: str, fn, inputs, h: float = 1e-5, entries_per_input=None, rng=None,
                    skip_kinks: bool = True) -> GradCheck:
    """Compare tape gradients of scalar ``fn()`` against central differences.

    The reported error is :func:`relative_error` over all probed entries of
    all inputs taken together.

    ``fn`` builds its result from ``inputs`` (leaf tensors). With
    ``entries_per_input`` set, only that many random entries of each input are
    probed numerically (``rng`` picks them). Probes that straddle a ReLU or
    max kink are skipped and counted (``skip_kinks``).
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = np.zeros_like(t.value)
    with Tape() as tape:
        out = fn()
        loss = out if out.shape == (1, 1) else sum_all(out)
    backward(tape, loss)

    def value():
        r = fn()
        return float(r.value.sum())

    analytic, numeric, per_input = [], [], []
    probed = skipped = 0
    for t in inputs:
        entries = None
        if entries_per_input is not None and t.value.size > entries_per_input:
            entries = rng.choice(t.value.size, size=entries_per_input, replace=False)
        num = numeric_gradient(value, t, h, entries, skip_kinks)
        mask = ~np.isnan(num)
        n_req = t.value.size if entries is None else len(entries)
        probed += n_req
        skipped += n_req - int(mask.sum())
        analytic.append(t.grad[mask])
        numeric.append(num[mask])
        per_input.append(relative_error(t.grad[mask], num[mask]))
    if not analytic:
        return GradCheck(name, 0.0, [])
    err = relative_error(np.concatenate(analytic), np.concatenate(numeric))
    return GradCheck(name, err, per_input, probed, skipped)
