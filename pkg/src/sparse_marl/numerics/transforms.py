"""Row-wise probability maps: softmax and sparsemax (simplex projection).

Both act on the last axis and accept an optional boolean ``mask`` that
broadcasts against the input; masked-out positions always get weight 0.
"""

from __future__ import annotations

import numpy as np

from ..errors import EmptySupport, NonFinite, ShapeMismatch
from .tensor import Tensor, _make, as_tensor


def _check_finite(z: np.ndarray, op: str) -> None:
    if not np.isfinite(z).all():
        raise NonFinite(f"{op}: input contains NaN or Inf")


def _check_mask(z: np.ndarray, mask) -> np.ndarray | None:
    if mask is None:
        return None
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
    if not mask.any(axis=-1).all():
        raise ShapeMismatch("every row needs at least one unmasked entry")
    return mask


def softmax_array(z: np.ndarray, mask=None) -> np.ndarray:
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows(z, mask=None) -> Tensor:
    z = as_tensor(z)
    _check_finite(z.data, "softmax_rows")
    mask = _check_mask(z.data, mask)
    y = softmax_array(z.data, mask)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (z,), bw, "softmax_rows")


def sparsemax_threshold(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (tau, support size) per row of ``z``.

    Rows are sorted in descending order; the support size is the largest k
    with ``1 + k * zs[k] > sum(zs[:k])`` and the threshold is
    ``(sum(zs[:k]) - 1) / k`` taken over the sorted row.
    """
    n = z.shape[-1]
    zs = -np.sort(-z, axis=-1)
    cumsum = np.cumsum(zs, axis=-1)
    k = np.arange(1, n + 1, dtype=np.float64)
    active = 1.0 + k * zs > cumsum
    support = np.max(np.where(active, k, 0.0), axis=-1).astype(np.int64)
    # The first sorted entry always satisfies the condition.
    support = np.maximum(support, 1)
    tau = (np.take_along_axis(cumsum, support[..., None] - 1, axis=-1)[..., 0] - 1.0) / support
    return tau, support


def sparsemax_array(z: np.ndarray, mask=None) -> np.ndarray:
    if mask is not None:
        floor = np.where(mask, z, np.inf).min(axis=-1, keepdims=True) - 2.0
        z = np.where(mask, z, floor)
    # shift-invariant; centring on the row max keeps z - tau exact for large offsets
    z = z - z.max(axis=-1, keepdims=True)
    tau, _ = sparsemax_threshold(z)
    return np.maximum(z - tau[..., None], 0.0)


def _sparsemax_grad(out: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    support = out > 0
    count = support.sum(axis=-1, keepdims=True)
    if (count == 0).any():
        raise EmptySupport("sparsemax output row has no positive entry")
    centre = (upstream * support).sum(axis=-1, keepdims=True) / count
    return np.where(support, upstream - centre, 0.0)


def sparsemax_rows(z, mask=None) -> Tensor:
    """Euclidean projection of each row onto the probability simplex."""
    z = as_tensor(z)
    if z.shape[-1] < 1:
        raise ShapeMismatch("sparsemax needs rows of width >= 1")
    _check_finite(z.data, "sparsemax_rows")
    mask = _check_mask(z.data, mask)
    y = sparsemax_array(z.data, mask)
    return _make(y, (z,), lambda g: (_sparsemax_grad(y, g),), "sparsemax_rows")


def sparsemax_backward(row_out, upstream) -> Tensor:
    """Vector-Jacobian product of sparsemax given its output and an upstream gradient."""
    out = as_tensor(row_out).data
    up = as_tensor(upstream).data
    if out.shape != up.shape:
        raise ShapeMismatch(f"{out.shape} vs {up.shape}")
    return Tensor(_sparsemax_grad(out, up))
