"""Compiled segment kernels against the numpy fallback."""
import importlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sopool import _fallback, kernels

compiled = pytest.importorskip("sopool._kernels", reason="compiled extension not built")


@st.composite
def segments(draw, max_segments=5, max_len=6):
    sizes = draw(st.lists(st.integers(1, max_len), min_size=1, max_size=max_segments))
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)


@settings(max_examples=60, deadline=None)
@given(segments(), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_segment_cross_parity(off, p, q, seed):
    rng = np.random.default_rng(seed)
    n = int(off[-1])
    X, Y = rng.normal(size=(n, p)), rng.normal(size=(n, q))
    a = compiled.segment_cross(X, Y, off)
    b = _fallback.segment_cross(X, Y, off)
    # both accumulate rows in the same order
    np.testing.assert_array_equal(a, b)
    # brute force per segment
    for s in range(len(off) - 1):
        ref = X[off[s] : off[s + 1]].T @ Y[off[s] : off[s + 1]]
        np.testing.assert_allclose(a[s], ref.ravel(), atol=1e-12)
    G = rng.normal(size=a.shape)
    for u, v in zip(compiled.segment_cross_backward(G, X, Y, off), _fallback.segment_cross_backward(G, X, Y, off)):
        np.testing.assert_allclose(u, v, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), st.integers(1, 5), st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_row_products_parity(n, k, f, seed):
    rng = np.random.default_rng(seed)
    H, M = rng.normal(size=(n, f)), rng.normal(size=(k, f))
    a = compiled.row_products(H, M)
    np.testing.assert_array_equal(a, _fallback.row_products(H, M))
    np.testing.assert_allclose(a, H @ M.T, atol=1e-12)
    # each entry is independent of how many other rows are present
    np.testing.assert_array_equal(compiled.row_products(H[:1], M[-1:]), a[:1, -1:])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_csr_max_parity(n, f, seed):
    rng = np.random.default_rng(seed)
    A = (rng.random((n, n)) < 0.4) | np.eye(n, dtype=bool)
    indptr = np.concatenate([[0], np.cumsum(A.sum(axis=1))]).astype(np.int64)
    indices = np.concatenate([np.flatnonzero(r) for r in A]).astype(np.int64)
    H = rng.integers(-2, 3, size=(n, f)).astype(float)  # integer values force ties
    o1, a1 = compiled.csr_max(indptr, indices, H)
    o2, a2 = _fallback.csr_max(indptr, indices, H)
    np.testing.assert_array_equal(o1, o2)
    np.testing.assert_array_equal(a1, a2)
    for r in range(n):
        np.testing.assert_array_equal(o1[r], H[A[r]].max(axis=0))
    G = rng.normal(size=(n, f))
    np.testing.assert_allclose(compiled.scatter_rows_add(a1, G, n), _fallback.scatter_rows_add(a2, G, n))


@settings(max_examples=60, deadline=None)
@given(segments(max_len=8), st.integers(0, 2**31 - 1))
def test_segment_softmax_parity(off, seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(-30, 30, size=int(off[-1]))
    p1 = compiled.segment_softmax(s, off)
    p2 = _fallback.segment_softmax(s, off)
    np.testing.assert_allclose(p1, p2, atol=1e-15)
    np.testing.assert_allclose(np.add.reduceat(p1, off[:-1]), 1.0, atol=1e-12)
    g = rng.normal(size=s.shape)
    np.testing.assert_allclose(
        compiled.segment_softmax_backward(p1, g, off), _fallback.segment_softmax_backward(p2, g, off), atol=1e-14
    )


def test_pure_python_switch(monkeypatch):
    monkeypatch.setenv("SOPOOL_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(kernels)
        assert mod.BACKEND == "numpy"
    finally:
        monkeypatch.delenv("SOPOOL_PURE_PYTHON")
        mod = importlib.reload(kernels)
    assert mod.BACKEND == "cython"


def test_wrappers_accept_non_contiguous_input():
    X = np.asfortranarray(np.arange(12.0).reshape(4, 3))
    off = [0, 2, 4]
    np.testing.assert_allclose(kernels.segment_cross(X, X, off), _fallback.segment_cross(np.ascontiguousarray(X), np.ascontiguousarray(X), np.array(off)))
