"""Pure-numpy implementations of the hot kernels.

Same contract as the compiled `_fastops` extension; which one a process uses
is decided once at import in `antifraud.nn.backend`.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def rows_affine_tanh_fwd(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """H = tanh(X @ W.T), one row per node."""
    return np.tanh(X @ W.T)


def rows_affine_tanh_bwd(X, W, H, dH, dX, dW) -> None:
    """Accumulate dX += G @ W and dW += G.T @ X where G = dH * (1 - H^2).

    Either output may be None to skip that accumulation.
    """
    G = dH * (1.0 - H * H)
    if dX is not None:
        dX += G @ W
    if dW is not None:
        dW += G.T @ X


def segment_max_fwd(H: np.ndarray, indptr: np.ndarray, src: np.ndarray):
    """Per-destination elementwise max over in-neighbor rows of H.

    Empty segments yield zero rows. Returns (out, arg) where arg holds the
    winning source row per coordinate (-1 for empty segments); ties go to the
    earliest neighbor in the (sorted) adjacency list.
    """
    n = indptr.shape[0] - 1
    d = H.shape[1]
    out = np.zeros((n, d), dtype=np.float64)
    arg = np.full((n, d), -1, dtype=np.int64)
    for v in range(n):
        lo, hi = int(indptr[v]), int(indptr[v + 1])
        if lo == hi:
            continue
        neighbors = src[lo:hi]
        rows = H[neighbors]
        k = rows.argmax(axis=0)
        out[v] = rows[k, np.arange(d)]
        arg[v] = neighbors[k]
    return out, arg


def segment_max_bwd(dOut: np.ndarray, arg: np.ndarray, dH: np.ndarray) -> None:
    """Scatter-add dOut back to the argmax source rows."""
    n, d = dOut.shape
    mask = arg >= 0
    if not mask.any():
        return
    cols = np.broadcast_to(np.arange(d), (n, d))
    np.add.at(dH, (arg[mask], cols[mask]), dOut[mask])
