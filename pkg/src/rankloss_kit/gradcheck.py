"""End-to-end finite-difference check of the analytic training gradient.

The checked map is encoder -> pairwise similarities -> (SiMix) -> RS@k loss.
Virtual examples and their mixing weights are drawn once and held fixed so
the loss is a deterministic function of the encoder parameters.
"""

from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from .numerics import similarity_matrix
from .rsloss import LossConfig, chain_to_embeddings, rs_loss
from .simix import collapse_virtual_grads, enumerate_virtual, extend_similarities

THRESHOLD = 1e-4


@dataclass
class GradcheckReport:
    max_rel_error: float
    max_abs_error: float
    num_params: int
    loss: float
    threshold: float = THRESHOLD

    @property
    def passed(self):
        return self.max_rel_error < self.threshold


def central_differences(f, x, eps):
    """Central-difference gradient of scalar ``f`` at array ``x`` (modified in place, restored)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        g[i] = (up - down) / (2.0 * eps)
    return grad


def relative_error(analytic, numeric):
    """Largest entrywise difference relative to the larger gradient's max-norm."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-300)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def make_instance(dim=8, batch=32, samples_per_class=4, input_dim=None, seed=0):
    rng = np.random.default_rng(seed)
    input_dim = dim if input_dim is None else input_dim
    labels = np.repeat(np.arange(batch // samples_per_class), samples_per_class)
    X = rng.standard_normal((labels.size, input_dim))
    return X, labels


def check(dim=8, batch=32, tau1=1.0, tau2=0.1, eps=1e-5, seed=0, simix=False,
          arch="linear", ks=(1, 2, 4, 8, 16)):
    X, labels = make_instance(dim, batch, seed=seed)
    params = enc.init_params(X.shape[1], dim, arch, seed=seed)
    cfg = LossConfig(tau1=tau1, tau2=tau2, ks=ks, clipped=True)
    ext = enumerate_virtual(labels, np.random.default_rng(seed)) if simix else None

    def objective(with_grad=False):
        E, acts = enc.forward(params, X, retain=with_grad)
        sims = similarity_matrix(E)
        y = labels
        if ext is not None:
            sims, y = extend_similarities(sims, ext), ext.labels
        res = rs_loss(sims, y, cfg)
        if not with_grad:
            return res.loss
        g = res.grad_sims if ext is None else collapse_virtual_grads(res.grad_sims, ext)
        return res.loss, enc.backward(params, X, acts, chain_to_embeddings(g, E))

    loss, analytic = objective(with_grad=True)
    a = np.concatenate([analytic[k].ravel() for k in params.weights])
    n = np.concatenate([central_differences(objective, params.weights[k], eps).ravel() for k in params.weights])
    return GradcheckReport(relative_error(a, n), float(np.max(np.abs(a - n))), a.size, loss)
