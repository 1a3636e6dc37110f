"""Dense float64 arrays and the numeric kernels shared by every module.

Tensors are plain ``numpy.ndarray`` objects.  :func:`as_tensor` is the single
construction gate: it widens to float64, enforces rank 1-3 and rejects NaN/Inf.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import InvalidTemperature, NonFiniteValue, ShapeMismatch, ZeroVector

EPS_NORM = 1e-12
SNAP_TOL = 1e-12


def as_tensor(data, rank: int | Iterable[int] | None = None, name: str = "tensor") -> np.ndarray:
    """Return ``data`` as a C-ordered float64 array after checking invariants.

    Args:
        data: anything ``numpy.asarray`` accepts.
        rank: required rank, or an iterable of allowed ranks. Defaults to 1-3.
        name: used in error messages.

    Raises:
        ShapeMismatch: wrong rank or a zero-length extent.
        NonFiniteValue: any NaN or infinite entry.
    """
    arr = np.ascontiguousarray(data, dtype=np.float64)
    allowed = (1, 2, 3) if rank is None else ((rank,) if isinstance(rank, int) else tuple(rank))
    if arr.ndim not in allowed:
        raise ShapeMismatch(f"{name}: expected rank in {allowed}, got shape {arr.shape}")
    if any(extent < 1 for extent in arr.shape):
        raise ShapeMismatch(f"{name}: extents must be positive, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{name}: contains NaN or Inf")
    return arr


def l2_normalize(rows) -> np.ndarray:
    """Scale every row of a rank-2 array to unit Euclidean norm."""
    x = as_tensor(rows, rank=2, name="rows")
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    bad = np.flatnonzero(norms <= EPS_NORM)
    if bad.size:
        raise ZeroVector(f"row {int(bad[0])} has norm <= {EPS_NORM}")
    out = x / norms[:, None]
    # A second pass makes the operation idempotent to the last ulp in practice.
    norms2 = np.sqrt(np.einsum("ij,ij->i", out, out))
    return out / norms2[:, None]


def cosine_similarity_matrix(a, b) -> np.ndarray:
    """Pairwise cosine similarities between rows of ``a`` (M x D) and ``b`` (N x D)."""
    a = as_tensor(a, rank=2, name="A")
    b = as_tensor(b, rank=2, name="B")
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"embedding widths differ: {a.shape[1]} vs {b.shape[1]}")
    sim = np.clip(l2_normalize(a) @ l2_normalize(b).T, -1.0, 1.0)
    # parallel unit vectors can land a few ulps short of +-1
    near = np.abs(sim) >= 1.0 - SNAP_TOL
    sim[near] = np.sign(sim[near])
    return sim


def tempered_softmax(logits, tau: float) -> np.ndarray:
    """Softmax of ``logits / tau`` along the last axis, max-subtracted.

    Accepts rank-1 input (one distribution) or rank-2 (one per row).
    """
    if not tau > 0:
        raise InvalidTemperature(f"tau must be positive, got {tau}")
    z = as_tensor(logits, rank=(1, 2), name="logits") / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x) -> np.ndarray:
    """Numerically stable logistic function, elementwise, any shape."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_map(mask_logits) -> np.ndarray:
    """Sigmoid over a rank-2 or rank-3 mask-logit tensor."""
    return sigmoid(as_tensor(mask_logits, rank=(2, 3), name="mask_logits"))
