"""Scalar/vector numeric primitives used throughout the pipeline."""

import numpy as np

from .errors import IndexOutOfRange, NearZeroNorm

EPS_NORM = 1e-12


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """v / ||v||_2, norm accumulated in float64. Raises NearZeroNorm."""
    v = np.asarray(v)
    v64 = v.astype(np.float64)
    norm = float(np.sqrt((v64 * v64).sum()))
    if norm <= EPS_NORM:
        raise NearZeroNorm(f"norm {norm} <= {EPS_NORM}")
    return (v64 / norm).astype(v.dtype)


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    m64 = m.astype(np.float64)
    norms = np.sqrt((m64 * m64).sum(axis=-1, keepdims=True))
    if np.any(norms <= EPS_NORM):
        raise NearZeroNorm("row norm below 1e-12")
    return (m64 / norms).astype(m.dtype)


def stable_softmax_cross_entropy(logits: np.ndarray, target: int):
    """Max-shifted cross entropy. Returns (loss: float, grad: ndarray)."""
    logits = np.asarray(logits)
    k = logits.shape[0]
    if not (0 <= target < k):
        raise IndexOutOfRange(f"target {target} outside [0, {k})")
    x = logits.astype(np.float64)
    m = x.max()
    lse = m + np.log(np.exp(x - m).sum())
    loss = float(lse - x[target])
    grad = np.exp(x - lse)
    grad[target] -= 1.0
    return loss, grad.astype(logits.dtype)
