"""Exact (non-differentiable) retrieval metrics.

Ranks follow the Heaviside convention H(0) = 1: a database item tied with
``x`` counts against ``x``, so tied positives all receive the pessimistic
rank. The same rule is used by every metric here, including mAP.

Each metric has a sort-based implementation and a definitional
``*_bruteforce`` twin that loops over the row directly. The twins exist to
serve as test oracles and are O(N^2) per query.
"""

import math

import numpy as np

from .errors import IndexOutOfRange, NoPositives
from .numerics import as_matrix, similarity_matrix


def _row_and_mask(sim_row, pos_mask, self_index):
    row = np.asarray(sim_row, dtype=np.float64).ravel()
    mask = np.asarray(pos_mask, dtype=bool).ravel().copy()
    if mask.shape != row.shape:
        raise IndexOutOfRange(f"mask length {mask.size} != row length {row.size}")
    if self_index is not None:
        if not 0 <= self_index < row.size:
            raise IndexOutOfRange(f"self_index {self_index} outside row of length {row.size}")
        mask[self_index] = False
    if not mask.any():
        raise NoPositives()
    return row, mask


def exact_rank(sim_row, x, self_index=None):
    """1-based rank of item ``x`` among all database items except ``self_index``."""
    row = np.asarray(sim_row, dtype=np.float64).ravel()
    if not 0 <= x < row.size or x == self_index:
        raise IndexOutOfRange(f"invalid database index {x}")
    ahead = row >= row[x]
    ahead[x] = False
    if self_index is not None:
        ahead[self_index] = False
    return 1 + int(ahead.sum())


def positive_ranks(sim_row, pos_mask, self_index=None):
    """Ranks of every positive in a row, in index order (sort-based)."""
    row, mask = _row_and_mask(sim_row, pos_mask, self_index)
    db = row if self_index is None else np.delete(row, self_index)
    ordered = np.sort(db)
    # items with s >= s_x, which includes x itself
    return ordered.size - np.searchsorted(ordered, row[mask], side="left")


def recall_at_k(sim_row, pos_mask, self_index, k):
    """Fraction of the query's positives ranked within the top ``k``."""
    ranks = positive_ranks(sim_row, pos_mask, self_index)
    return float(np.count_nonzero(ranks <= k)) / ranks.size


def benchmark_r_at_k(sim_row, pos_mask, self_index, k):
    """1 if at least one positive is within the top ``k``, else 0."""
    ranks = positive_ranks(sim_row, pos_mask, self_index)
    return int(ranks.min() <= k)


def average_precision(sim_row, pos_mask, self_index=None):
    ranks = np.sort(positive_ranks(sim_row, pos_mask, self_index))
    # positives ranked at or above each positive's rank (ties share the rank)
    hits = np.searchsorted(ranks, ranks, side="right")
    # fsum is exact before its single rounding, so the result does not depend on term order
    return math.fsum((hits / ranks).tolist()) / ranks.size


def mean_average_precision(sims, labels, self_retrieval=True, db_labels=None):
    """mAP over all rows of ``sims``.

    With ``self_retrieval`` the query set is the database and the diagonal is
    excluded. Otherwise ``db_labels`` gives the labels of the columns.
    """
    sims = as_matrix(sims, "sims")
    labels = np.asarray(labels)
    db_labels = labels if db_labels is None else np.asarray(db_labels)
    aps = np.empty(sims.shape[0])
    for q in range(sims.shape[0]):
        try:
            aps[q] = average_precision(sims[q], db_labels == labels[q], q if self_retrieval else None)
        except NoPositives:
            raise NoPositives(q) from None
    return float(aps.mean())


# --- definitional oracles -------------------------------------------------

def _bruteforce_ranks(row, mask, self_index):
    ranks = []
    for x in range(len(row)):
        if not mask[x] or x == self_index:
            continue
        r = 1
        for z in range(len(row)):
            if z != x and z != self_index and row[z] - row[x] >= 0:
                r += 1
        ranks.append(r)
    if not ranks:
        raise NoPositives()
    return ranks


def recall_at_k_bruteforce(sim_row, pos_mask, self_index, k):
    ranks = _bruteforce_ranks(list(sim_row), list(pos_mask), self_index)
    return sum(1 for r in ranks if k - r >= 0) / len(ranks)


def benchmark_r_at_k_bruteforce(sim_row, pos_mask, self_index, k):
    ranks = _bruteforce_ranks(list(sim_row), list(pos_mask), self_index)
    return int(any(r <= k for r in ranks))


def average_precision_bruteforce(sim_row, pos_mask, self_index=None):
    ranks = _bruteforce_ranks(list(sim_row), list(pos_mask), self_index)
    terms = [sum(1 for r2 in ranks if r2 <= r) / r for r in ranks]
    return math.fsum(terms) / len(ranks)


# --- harness --------------------------------------------------------------

def evaluate(E, labels, ks=(1, 2, 4, 8), tile_rows=None):
    """Self-retrieval metrics over an embedding set.

    Every example is a query against all the others. Returns a dict with
    keys ``r@k`` (benchmark form), ``recall@k`` (fraction of positives) for
    each ``k``, and ``mAP``.
    """
    E = as_matrix(E, "E")
    labels = np.asarray(labels)
    n = E.shape[0]
    tile_rows = n if tile_rows is None else max(1, int(tile_rows))
    ks = list(ks)
    hit = np.zeros((n, len(ks)))
    frac = np.zeros((n, len(ks)))
    aps = np.zeros(n)
    kk = np.asarray(ks)
    for start in range(0, n, tile_rows):
        block = similarity_matrix(E[start:start + tile_rows], E)
        for offset, row in enumerate(block):
            q = start + offset
            try:
                ranks = np.sort(positive_ranks(row, labels == labels[q], q))
            except NoPositives:
                raise NoPositives(q) from None
            within = ranks[None, :] <= kk[:, None]
            hit[q] = within.any(axis=1)
            frac[q] = within.mean(axis=1)
            aps[q] = math.fsum((np.searchsorted(ranks, ranks, side="right") / ranks).tolist()) / ranks.size
    out = {}
    for i, k in enumerate(ks):
        out[f"r@{k}"] = float(hit[:, i].mean())
    for i, k in enumerate(ks):
        out[f"recall@{k}"] = float(frac[:, i].mean())
    out["mAP"] = float(aps.mean())
    return out
