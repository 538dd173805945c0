"""Backend selection for the segment kernels.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``SOPOOL_PURE_PYTHON=1`` to force the fallback (benchmarks and tests use
this to compare the two).
"""
import os

import numpy as np

from sopool import _fallback

if os.environ.get("SOPOOL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "numpy"
else:
    try:
        from sopool import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "numpy"


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def segment_cross(X, Y, offsets):
    """Per-segment ``X_b.T @ Y_b``, flattened row-major into row ``b``."""
    return _impl.segment_cross(_f64(X), _f64(Y), _i64(offsets))


def row_products(H, M):
    """``H @ M.T`` with each entry summed in column order, independent of the shapes involved."""
    return _impl.row_products(_f64(H), _f64(M))


def segment_cross_backward(G, X, Y, offsets):
    # per-segment BLAS products beat the compiled loop here (see benchmarks/),
    # and gradients carry no cross-backend bit-equality requirement
    return _fallback.segment_cross_backward(_f64(G), _f64(X), _f64(Y), _i64(offsets))


def csr_max(indptr, indices, H):
    """Row-wise max over CSR neighbourhoods; also returns the winning source row."""
    return _impl.csr_max(_i64(indptr), _i64(indices), _f64(H))


def scatter_rows_add(arg, G, n_src):
    return _impl.scatter_rows_add(_i64(arg), _f64(G), int(n_src))


def segment_softmax(s, offsets):
    return _impl.segment_softmax(_f64(s), _i64(offsets))


def segment_softmax_backward(p, g, offsets):
    return _impl.segment_softmax_backward(_f64(p), _f64(g), _i64(offsets))
