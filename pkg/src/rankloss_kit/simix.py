"""Similarity mixup: virtual examples realized as mixes of scalar similarities.

A virtual example ``v = a*x + (1-a)*z`` mixes two same-class embeddings.
Because mixed vectors are never re-normalized, every similarity involving
``v`` is a linear combination of base similarities, so the extended
``(M+V) x (M+V)`` matrix is ``A S A^T`` for a sparse mixing matrix ``A``
with rows ``e_w`` (real) and ``a*e_x + (1-a)*e_z`` (virtual). Embeddings of
virtual examples are never built.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange
from .numerics import as_matrix


@dataclass(frozen=True)
class VirtualSpec:
    i: int
    j: int
    alpha: float
    class_id: int


@dataclass
class ExtendedBatch:
    base_size: int
    virtuals: list
    labels: np.ndarray

    @property
    def size(self):
        return self.base_size + len(self.virtuals)

    def arrays(self):
        """(i, j, alpha) columns of the virtual specs as numpy arrays."""
        if not self.virtuals:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)
        i = np.fromiter((v.i for v in self.virtuals), dtype=np.int64)
        j = np.fromiter((v.j for v in self.virtuals), dtype=np.int64)
        a = np.fromiter((v.alpha for v in self.virtuals), dtype=np.float64)
        return i, j, a


def enumerate_virtual(labels, rng):
    """One virtual example per unordered same-class pair in the batch.

    Pairs are listed in (class, i, j) order and each gets a fresh
    ``alpha ~ U(0, 1)`` drawn from ``rng`` (a ``numpy.random.Generator``).
    """
    labels = np.asarray(labels)
    pairs = []
    for c in np.unique(labels):
        members = np.nonzero(labels == c)[0]
        for a in range(members.size):
            for b in range(a + 1, members.size):
                pairs.append((int(members[a]), int(members[b]), c))
    alphas = rng.uniform(0.0, 1.0, size=len(pairs))
    # U(0,1) excludes its endpoints
    while np.any(alphas == 0.0):
        alphas[alphas == 0.0] = rng.uniform(0.0, 1.0, size=int(np.sum(alphas == 0.0)))
    virtuals = [VirtualSpec(i, j, float(al), c.item()) for (i, j, c), al in zip(pairs, alphas)]
    ext_labels = np.concatenate([labels, np.array([v.class_id for v in virtuals], dtype=labels.dtype)])
    return ExtendedBatch(labels.size, virtuals, ext_labels)


def _check(ext, n):
    i, j, a = ext.arrays()
    if i.size and (max(i.max(), j.max()) >= ext.base_size or min(i.min(), j.min()) < 0):
        raise IndexOutOfRange(f"virtual example references a row outside the base batch of {ext.base_size}")
    if n != ext.base_size:
        raise DimensionMismatch(f"base matrix has {n} rows, batch has {ext.base_size}")
    return i, j, a


def _mix_rows(S, i, j, a):
    return np.concatenate([S, a[:, None] * S[i] + (1.0 - a)[:, None] * S[j]], axis=0)


def extend_similarities(base, ext):
    """Extend an M x M similarity matrix to the (M+V) x (M+V) mixed batch."""
    base = as_matrix(base, "base")
    if base.shape[0] != base.shape[1]:
        raise DimensionMismatch(f"base similarity matrix must be square, got {base.shape}")
    i, j, a = _check(ext, base.shape[0])
    if i.size == 0:
        return base.copy()
    rows = _mix_rows(base, i, j, a)              # A S
    return _mix_rows(rows.T, i, j, a).T          # (A S) A^T


def _scatter_rows(G, M, i, j, a):
    out = G[:M].copy()
    virt = G[M:]
    np.add.at(out, i, a[:, None] * virt)
    np.add.at(out, j, (1.0 - a)[:, None] * virt)
    return out


def collapse_virtual_grads(grad_ext, ext):
    """Adjoint of :func:`extend_similarities`: ``A^T G A``."""
    G = as_matrix(grad_ext, "grad_ext")
    n = ext.size
    if G.shape != (n, n):
        raise DimensionMismatch(f"gradient shape {G.shape} does not match extended size {n}")
    i, j, a = _check(ext, ext.base_size)
    if i.size == 0:
        return G.copy()
    M = ext.base_size
    rows = _scatter_rows(G, M, i, j, a)          # A^T G
    return _scatter_rows(rows.T, M, i, j, a).T   # (A^T G) A
