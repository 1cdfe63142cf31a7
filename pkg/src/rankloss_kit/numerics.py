"""Dense primitives: stable sigmoid, L2 normalization, pairwise similarities.

All arrays are float64. Embedding batches are ``(M, d)`` arrays with one
unit-norm embedding per row.
"""

import numpy as np

from .errors import DimensionMismatch, ZeroVector

ZERO_NORM = 1e-30


def as_matrix(a, name="array"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    return a


def check_temperature(tau):
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    return float(tau)


def l2_normalize(v):
    """Scale ``v`` to unit Euclidean norm.

    Works on a single vector or row-wise on a matrix. Raises ZeroVector when
    a norm is below 1e-30.
    """
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms < ZERO_NORM):
        raise ZeroVector("cannot normalize a (near-)zero vector")
    return v / norms


def similarity_matrix(A, B=None):
    """Pairwise dot products ``S[i, j] = A[i] . B[j]``."""
    A = as_matrix(A, "A")
    B = A if B is None else as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"embedding dims differ: {A.shape[1]} vs {B.shape[1]}")
    return A @ B.T


def sigmoid(u, tau=1.0):
    """Logistic function ``1 / (1 + exp(-u / tau))`` and its derivative in ``u``.

    Evaluated through ``exp(-|u| / tau)`` so that neither branch overflows;
    saturated inputs give values of exactly 0.0 or 1.0 and a derivative that
    underflows to 0.0 instead of raising.

    Returns ``(value, derivative)``, scalars or arrays matching ``u``.
    """
    tau = check_temperature(tau)
    z = np.asarray(u, dtype=np.float64) / tau
    e = np.exp(-np.abs(z))
    inv = 1.0 / (1.0 + e)
    value = np.where(z >= 0, inv, e * inv)
    derivative = e * inv * inv / tau
    if value.ndim == 0:
        return float(value), float(derivative)
    return value, derivative
