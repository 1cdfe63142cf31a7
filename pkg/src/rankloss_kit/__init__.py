"""Recall@k surrogate loss, similarity mixup and large-batch training for metric learning."""

from .errors import RanklossError
from .numerics import l2_normalize, sigmoid, similarity_matrix
from .rsloss import LossConfig, LossResult, chain_to_embeddings, rs_loss, smooth_recall_at_k
from .simix import ExtendedBatch, VirtualSpec, collapse_virtual_grads, enumerate_virtual, extend_similarities

__version__ = "0.1.0"

__all__ = [
    "ExtendedBatch",
    "LossConfig",
    "LossResult",
    "RanklossError",
    "VirtualSpec",
    "chain_to_embeddings",
    "collapse_virtual_grads",
    "enumerate_virtual",
    "extend_similarities",
    "l2_normalize",
    "rs_loss",
    "sigmoid",
    "similarity_matrix",
    "smooth_recall_at_k",
]
