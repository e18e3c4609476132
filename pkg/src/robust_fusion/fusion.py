"""Softmax machinery and late-fusion rules.

All rules operate along the last axis, so they accept a single K-vector or a
batch of shape (N, K).
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, EmptyClass, NonFiniteError, ZeroMass

PROB_TOL = 1e-9
ZERO_MASS = 1e-300


def check_prediction(p, tol: float = PROB_TOL) -> np.ndarray:
    """Return ``p`` as an array after checking it lies on the probability simplex."""
    p = np.asarray(p, dtype=float)
    if p.ndim < 1 or p.shape[-1] < 1:
        raise DimensionError("prediction must have at least one class")
    if not np.all(np.isfinite(p)):
        raise NonFiniteError("prediction has non-finite entries")
    if np.any(p < -tol) or np.any(p > 1 + tol):
        raise ValueError("prediction entries must lie in [0, 1]")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > tol):
        raise ValueError("prediction does not sum to one")
    return p


def check_freq(freq, tol: float = PROB_TOL) -> np.ndarray:
    freq = np.asarray(freq, dtype=float)
    if freq.ndim != 1:
        raise DimensionError("class frequencies must be a 1-D vector")
    if np.any(freq <= 0):
        raise ValueError("class frequencies must be strictly positive")
    if abs(freq.sum() - 1.0) > tol:
        raise ValueError("class frequencies must sum to one")
    return freq


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("logits must be finite")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def linear_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("linear normalization needs non-negative entries")
    total = v.sum(axis=-1, keepdims=True)
    if np.any(total <= ZERO_MASS):
        raise ZeroMass("cannot normalize a vector with no mass")
    return v / total


def statistical_fuse(pa, pb, freq) -> np.ndarray:
    """Product-of-experts fusion ``normalize(pa * pb / freq)`` under conditional independence."""
    pa = np.asarray(pa, dtype=float)
    pb = np.asarray(pb, dtype=float)
    freq = check_freq(freq)
    if pa.shape != pb.shape or pa.shape[-1] != freq.shape[0]:
        raise DimensionError(f"shape mismatch: {pa.shape}, {pb.shape}, {freq.shape}")
    return linear_normalize(pa * pb / freq)


def logit_fuse(za, zb, freq) -> np.ndarray:
    """Statistical fusion expressed on raw logits: ``softmax(za + zb - log freq)``."""
    za = np.asarray(za, dtype=float)
    zb = np.asarray(zb, dtype=float)
    freq = check_freq(freq)
    if za.shape != zb.shape or za.shape[-1] != freq.shape[0]:
        raise DimensionError(f"shape mismatch: {za.shape}, {zb.shape}, {freq.shape}")
    return softmax(za + zb - np.log(freq))


def mean_fuse(pa, pb) -> np.ndarray:
    pa = np.asarray(pa, dtype=float)
    pb = np.asarray(pb, dtype=float)
    if pa.shape != pb.shape:
        raise DimensionError(f"shape mismatch: {pa.shape}, {pb.shape}")
    return linear_normalize(0.5 * (pa + pb))


def confidence_weighted_fuse(pa, pb) -> np.ndarray:
    """Mean fusion weighted by each modality's top-class probability.

    ``w_m = max(p_m) / (max(pa) + max(pb))``; the weights sum to one.
    """
    pa = np.asarray(pa, dtype=float)
    pb = np.asarray(pb, dtype=float)
    if pa.shape != pb.shape:
        raise DimensionError(f"shape mismatch: {pa.shape}, {pb.shape}")
    ca = pa.max(axis=-1, keepdims=True)
    cb = pb.max(axis=-1, keepdims=True)
    total = ca + cb
    return linear_normalize((ca / total) * pa + (cb / total) * pb)


def estimate_freq(labels, k: int, smoothing: float = 0.0) -> np.ndarray:
    """Class frequencies from training labels with optional additive smoothing."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise DimensionError("labels must be a non-empty 1-D array")
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    counts = np.bincount(labels.astype(int), minlength=k).astype(float)
    if smoothing == 0 and np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise EmptyClass(f"classes {missing} never occur; use smoothing > 0")
    return (counts + smoothing) / (labels.size + k * smoothing)
