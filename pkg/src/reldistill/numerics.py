"""Dense real-matrix primitives shared by the losses, metrics and MLP.

All functions take and return float64 ``numpy`` arrays. Feature matrices
are N x C, one feature vector per row. Rows with an l2 norm below
``EPSILON_NORM`` are treated as errors rather than clamped: silently
clamping would hide the degenerate all-zero network output case.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch, ZeroNormRow

EPSILON_NORM = 1e-12

# Tolerance used when *checking* that rows are already unit length.
NORMALIZED_ATOL = 1e-9


def as_matrix(data) -> np.ndarray:
    """Coerce input to a 2-D float64 array and reject non-finite entries."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatch(f"matrix must be at least 1x1, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf entries")
    return m


def row_norms(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def normalize_rows(m) -> np.ndarray:
    """Scale every row to unit l2 norm.

    Raises :class:`ZeroNormRow` for any row whose norm is below
    ``EPSILON_NORM``.
    """
    m = as_matrix(m)
    norms = row_norms(m)
    bad = np.flatnonzero(norms < EPSILON_NORM)
    if bad.size:
        raise ZeroNormRow(int(bad[0]), float(norms[bad[0]]))
    return m / norms[:, None]


def normalize_rows_backward(m, upstream_grad) -> np.ndarray:
    """Backward pass of :func:`normalize_rows`.

    For a row v with norm r and unit direction u = v/r, the incoming
    gradient g maps to (g - (g.u) u) / r: the radial component of the
    upstream gradient is annihilated, the rest is scaled by 1/r.
    """
    m = as_matrix(m)
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != m.shape:
        raise ShapeMismatch(
            f"upstream gradient shape {g.shape} != matrix shape {m.shape}"
        )
    if not np.all(np.isfinite(g)):
        raise ValueError("upstream gradient contains NaN or Inf entries")
    norms = row_norms(m)
    bad = np.flatnonzero(norms < EPSILON_NORM)
    if bad.size:
        raise ZeroNormRow(int(bad[0]), float(norms[bad[0]]))
    u = m / norms[:, None]
    radial = np.einsum("ij,ij->i", g, u)
    return (g - radial[:, None] * u) / norms[:, None]


def is_row_normalized(m: np.ndarray, atol: float = NORMALIZED_ATOL) -> bool:
    return bool(np.all(np.abs(row_norms(m) - 1.0) <= atol))


def require_normalized(m: np.ndarray, name: str = "matrix") -> None:
    """Precondition guard used by the losses and metrics."""
    norms = row_norms(m)
    off = np.abs(norms - 1.0)
    worst = int(np.argmax(off))
    if off[worst] > NORMALIZED_ATOL:
        raise ValueError(
            f"{name} row {worst} is not unit length (norm {norms[worst]!r}); "
            "call normalize_rows first"
        )


def gram(a, b) -> np.ndarray:
    """Pairwise inner products: entry (i, j) = <row_i(a), row_j(b)>.

    Both operands must have the same shape (square output).
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"row counts differ: {a.shape[0]} vs {b.shape[0]}")
    return a @ b.T
