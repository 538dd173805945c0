"""Pure numpy implementations of the segment kernels.

Same signatures as the compiled ``_kernels`` module. ``offsets`` is an int64
array of length ``B + 1`` with ``offsets[0] == 0``; segment ``b`` owns rows
``offsets[b]:offsets[b + 1]``. Every segment must be non-empty.
"""
import numpy as np


def segment_cross(X, Y, offsets):
    # rows are accumulated in order, one position per step across all
    # segments, so results match the compiled loop bit for bit
    starts = offsets[:-1]
    counts = np.diff(offsets)
    p, q = X.shape[1], Y.shape[1]
    out = np.zeros((len(starts), p, q))
    for t in range(int(counts.max(initial=0))):
        live = np.flatnonzero(counts > t)
        rows = starts[live] + t
        out[live] += X[rows][:, :, None] * Y[rows][:, None, :]
    return out.reshape(len(starts), p * q)


def row_products(H, M):
    """``H @ M.T`` summed over columns in order (no BLAS blocking)."""
    out = np.zeros((H.shape[0], M.shape[0]))
    for c in range(H.shape[1]):
        out += H[:, c, None] * M[None, :, c]
    return out


def segment_cross_backward(G, X, Y, offsets):
    p, q = X.shape[1], Y.shape[1]
    dX = np.empty_like(X)
    dY = np.empty_like(Y)
    for b in range(len(offsets) - 1):
        lo, hi = offsets[b], offsets[b + 1]
        Gb = G[b].reshape(p, q)
        dX[lo:hi] = Y[lo:hi] @ Gb.T
        dY[lo:hi] = X[lo:hi] @ Gb
    return dX, dY


def csr_max(indptr, indices, H):
    starts = indptr[:-1]
    gathered = H[indices]
    out = np.maximum.reduceat(gathered, starts, axis=0)
    row_of = np.repeat(np.arange(len(starts)), np.diff(indptr))
    hit = gathered == out[row_of]
    pos = np.where(hit, np.arange(len(indices))[:, None], len(indices))
    first = np.minimum.reduceat(pos, starts, axis=0)
    return out, indices[first].astype(np.int64)


def scatter_rows_add(arg, G, n_src):
    out = np.zeros((n_src, G.shape[1]))
    cols = np.broadcast_to(np.arange(G.shape[1]), G.shape)
    np.add.at(out, (arg, cols), G)
    return out


def segment_softmax(s, offsets):
    starts = offsets[:-1]
    counts = np.diff(offsets)
    shift = np.repeat(np.maximum.reduceat(s, starts), counts)
    e = np.exp(s - shift)
    return e / np.repeat(np.add.reduceat(e, starts), counts)


def segment_softmax_backward(p, g, offsets):
    starts = offsets[:-1]
    dot = np.add.reduceat(p * g, starts)
    return p * (g - np.repeat(dot, np.diff(offsets)))
