"""Recall@k surrogate (RS@k) loss with analytic gradients.

For a query ``q`` with positives ``P`` and database ``B \\ q`` the smooth
recall is::

    R(q) = sum_{x in P} s1(k - 1 - sum_{z != x} s2(s_qz - s_qx)) / D

where ``s1``/``s2`` are sigmoids with temperatures ``tau1``/``tau2``. The
loss per query is ``1 - R(q)`` averaged over a set of ``k`` values, and the
batch loss averages over every row of the similarity matrix.

With ``clipped=True`` (the training variant) the numerator is clipped at
``k`` and ``D = min(k, |P|)``, so a query whose positives all sit at the
top reaches zero loss even when ``|P| > k``. Otherwise ``D = |P|``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NoPositives, NotSquare
from .numerics import as_matrix, check_temperature, sigmoid

DEFAULT_KS = (1, 2, 4, 8, 16)
DEFAULT_KS_SIMIX = (1, 2, 4, 8, 12, 16, 20, 24, 28, 32)

# elements of the (queries x positives x database) work tensor per chunk
_CHUNK_ELEMENTS = 1 << 21


def make_kset(ks):
    ks = tuple(int(k) for k in ks)
    if not ks:
        raise ValueError("k-set must be nonempty")
    if any(k < 1 for k in ks):
        raise ValueError(f"every k must be >= 1, got {ks}")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError(f"k-set must be strictly increasing, got {ks}")
    return ks


@dataclass(frozen=True)
class LossConfig:
    tau1: float = 1.0
    tau2: float = 0.01
    ks: tuple = DEFAULT_KS
    clipped: bool = True

    def __post_init__(self):
        check_temperature(self.tau1)
        check_temperature(self.tau2)
        object.__setattr__(self, "ks", make_kset(self.ks))


@dataclass
class LossResult:
    loss: float
    grad_sims: np.ndarray
    per_query_loss: np.ndarray = field(repr=False)


def _group_terms(rows, pos_idx, self_idx, cfg, ks):
    """Loss and gradient for a block of queries sharing one positive count.

    rows: (Q, N) similarity rows; pos_idx: (Q, p) column indices of the
    positives; self_idx: (Q,) column to exclude, or -1.
    """
    Q, N = rows.shape
    p = pos_idx.shape[1]
    qi = np.arange(Q)[:, None]
    s_pos = rows[qi, pos_idx]                              # (Q, p)
    diff = rows[:, None, :] - s_pos[:, :, None]            # (Q, p, N): s_qz - s_qx
    val, der = sigmoid(diff, cfg.tau2)
    excluded = np.zeros((Q, p, N), dtype=bool)
    excluded[qi, np.arange(p)[None, :], pos_idx] = True    # z == x
    has_self = self_idx >= 0
    if has_self.any():
        excluded[has_self, :, self_idx[has_self]] = True   # z == q
    val[excluded] = 0.0
    der[excluded] = 0.0
    soft_rank = val.sum(axis=2)                            # (Q, p)

    loss = np.zeros(Q)
    grad_u = np.zeros((Q, p))                              # d loss / d u_x, mean over k
    for k in ks:
        s1, d1 = sigmoid(k - 1.0 - soft_rank, cfg.tau1)
        num = s1.sum(axis=1)
        if cfg.clipped:
            denom = min(k, p)
            recall = np.minimum(num, k) / denom
            active = (num < k).astype(np.float64)
        else:
            denom = p
            recall = num / denom
            active = np.ones(Q)
        loss += 1.0 - recall
        grad_u -= active[:, None] * d1 / denom
    loss /= len(ks)
    grad_u /= len(ks)

    # u_x = k - 1 - sum_z s2(s_qz - s_qx): d u_x / d s_qz = -s2', d u_x / d s_qx = +sum_z s2'
    grad = -np.einsum("qp,qpn->qn", grad_u, der)
    grad[qi, pos_idx] += grad_u * der.sum(axis=2)
    return loss, grad


def _positive_table(labels, db_labels=None, self_exclude=True):
    labels = np.asarray(labels)
    db_labels = labels if db_labels is None else np.asarray(db_labels)
    match = labels[:, None] == db_labels[None, :]
    if self_exclude:
        np.fill_diagonal(match, False)
    return match


def rs_loss_rows(sims, pos_mask, self_index, cfg):
    """RS@k loss over arbitrary rows.

    ``pos_mask`` is a boolean (Q, N) table and ``self_index`` an int array of
    excluded columns (-1 for none). Returns (per_query_loss, grad_rows), where
    grad_rows is the gradient of the *sum* of per-query losses.
    """
    sims = as_matrix(sims, "sims")
    pos_mask = np.asarray(pos_mask, dtype=bool)
    self_index = np.asarray(self_index, dtype=np.int64)
    Q, N = sims.shape
    if pos_mask.shape != (Q, N) or self_index.shape != (Q,):
        raise DimensionMismatch("positive mask / self index do not match the similarity rows")
    pos_mask = pos_mask.copy()
    has_self = self_index >= 0
    pos_mask[np.nonzero(has_self)[0], self_index[has_self]] = False
    counts = pos_mask.sum(axis=1)
    if (counts == 0).any():
        raise NoPositives(int(np.argmax(counts == 0)))

    per_query = np.zeros(Q)
    grad = np.zeros((Q, N))
    for p in np.unique(counts):
        queries = np.nonzero(counts == p)[0]
        step = max(1, _CHUNK_ELEMENTS // (int(p) * N))
        for start in range(0, queries.size, step):
            qs = queries[start:start + step]
            pos_idx = np.nonzero(pos_mask[qs])[1].reshape(qs.size, p)
            loss, g = _group_terms(sims[qs], pos_idx, self_index[qs], cfg, cfg.ks)
            per_query[qs] = loss
            grad[qs] = g
    return per_query, grad


def rs_loss(sims, labels, cfg=LossConfig()):
    """Batch RS@k loss: every row is a query against all other rows.

    Rows are treated independently, so ``grad_sims[i, j]`` is the partial
    derivative with respect to entry ``(i, j)`` alone; a symmetric
    similarity matrix receives gradient through both of its copies of a
    pair (see :func:`chain_to_embeddings`).
    """
    sims = as_matrix(sims, "sims")
    M = sims.shape[0]
    if sims.shape[1] != M:
        raise NotSquare(f"similarity matrix must be square, got {sims.shape}")
    labels = np.asarray(labels)
    if labels.shape != (M,):
        raise DimensionMismatch(f"{labels.size} labels for {M} rows")
    per_query, grad = rs_loss_rows(sims, _positive_table(labels), np.arange(M), cfg)
    grad /= M
    np.fill_diagonal(grad, 0.0)
    return LossResult(float(per_query.mean()), grad, per_query)


def smooth_recall_at_k(sim_row, pos_mask, self_index, k, cfg=LossConfig()):
    """Smooth recall@k of a single query row (no gradient)."""
    row = np.asarray(sim_row, dtype=np.float64).reshape(1, -1)
    mask = np.asarray(pos_mask, dtype=bool).reshape(1, -1).copy()
    if self_index is not None:
        mask[0, self_index] = False
    p = int(mask.sum())
    if p == 0:
        raise NoPositives()
    pos_idx = np.nonzero(mask[0])[0].reshape(1, p)
    self_arr = np.array([-1 if self_index is None else self_index])
    loss, _ = _group_terms(row, pos_idx, self_arr, cfg, (int(k),))
    return float(1.0 - loss[0])


def chain_to_embeddings(grad_sims, E):
    """Pull a similarity gradient back to the embeddings.

    ``S = E E^T`` so ``dL/dE_i = sum_{j != i} (G_ij + G_ji) E_j``.
    """
    G = as_matrix(grad_sims, "grad_sims")
    E = as_matrix(E, "E")
    if G.shape != (E.shape[0], E.shape[0]):
        raise DimensionMismatch(f"gradient {G.shape} does not match {E.shape[0]} embeddings")
    sym = G + G.T
    np.fill_diagonal(sym, 0.0)
    return sym @ E
