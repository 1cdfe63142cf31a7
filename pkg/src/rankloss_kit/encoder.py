"""Desk-scale embedding model with hand-written backward pass and Adam.

Two architectures map raw features (N, p) to unit-norm embeddings (N, d):

* ``linear``: ``E = normalize(X W + b)``
* ``mlp``:    ``E = normalize(relu(X W1 + b1) W2 + b2)``
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ActivationsMissing, DimensionMismatch, ShapeMismatch, ZeroVector
from .numerics import ZERO_NORM, as_matrix


@dataclass
class EncoderParams:
    arch: str
    input_dim: int
    output_dim: int
    hidden: int = 0
    weights: dict = field(default_factory=dict)

    @property
    def tag(self):
        return "linear" if self.arch == "linear" else f"mlp:{self.hidden}"

    def copy(self):
        return EncoderParams(self.arch, self.input_dim, self.output_dim, self.hidden,
                             {k: v.copy() for k, v in self.weights.items()})

    def shapes(self):
        if self.arch == "linear":
            return {"W": (self.input_dim, self.output_dim), "b": (self.output_dim,)}
        return {"W1": (self.input_dim, self.hidden), "b1": (self.hidden,),
                "W2": (self.hidden, self.output_dim), "b2": (self.output_dim,)}


def parse_arch(tag):
    """``"linear"`` -> ("linear", 0); ``"mlp:64"`` -> ("mlp", 64)."""
    if tag == "linear":
        return "linear", 0
    name, _, width = tag.partition(":")
    if name != "mlp" or not width.isdigit() or int(width) < 1:
        raise ValueError(f"unknown encoder {tag!r}; expected 'linear' or 'mlp:<hidden>'")
    return "mlp", int(width)


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(input_dim, output_dim, arch="linear", seed=0):
    kind, hidden = parse_arch(arch)
    rng = np.random.default_rng(seed)
    p = EncoderParams(kind, int(input_dim), int(output_dim), hidden)
    if kind == "linear":
        p.weights = {"W": _glorot(rng, input_dim, output_dim), "b": np.zeros(output_dim)}
    else:
        p.weights = {"W1": _glorot(rng, input_dim, hidden), "b1": np.zeros(hidden),
                     "W2": _glorot(rng, hidden, output_dim), "b2": np.zeros(output_dim)}
    return p


def forward(params, X, retain=False):
    """Embed ``X``. Returns ``(E, activations)``; activations is None unless ``retain``."""
    X = as_matrix(X, "X")
    if X.shape[1] != params.input_dim:
        raise DimensionMismatch(f"input has {X.shape[1]} features, encoder expects {params.input_dim}")
    w = params.weights
    acts = {}
    if params.arch == "linear":
        y = X @ w["W"] + w["b"]
    else:
        h_pre = X @ w["W1"] + w["b1"]
        h = np.maximum(h_pre, 0.0)
        y = h @ w["W2"] + w["b2"]
        acts.update(h_pre=h_pre, h=h)
    norm = np.linalg.norm(y, axis=1, keepdims=True)
    if np.any(norm < ZERO_NORM):
        raise ZeroVector("encoder produced a zero embedding")
    E = y / norm
    if not retain:
        return E, None
    acts.update(norm=norm, E=E)
    return E, acts


def backward(params, X, activations, grad_E):
    """Gradients of ``<grad_E, E>`` with respect to every parameter."""
    if activations is None:
        raise ActivationsMissing("backward needs activations from forward(..., retain=True)")
    X = as_matrix(X, "X")
    grad_E = as_matrix(grad_E, "grad_E")
    E = activations["E"]
    if grad_E.shape != E.shape:
        raise DimensionMismatch(f"grad_E {grad_E.shape} does not match embeddings {E.shape}")
    # normalization Jacobian (I - e e^T) / ||y||
    dy = (grad_E - E * np.sum(grad_E * E, axis=1, keepdims=True)) / activations["norm"]
    w = params.weights
    if params.arch == "linear":
        return {"W": X.T @ dy, "b": dy.sum(axis=0)}
    dh = (dy @ w["W2"].T) * (activations["h_pre"] > 0)
    return {"W1": X.T @ dh, "b1": dh.sum(axis=0),
            "W2": activations["h"].T @ dy, "b2": dy.sum(axis=0)}


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, **kwargs):
        state = cls(**kwargs)
        state.m = {k: np.zeros_like(a) for k, a in params.weights.items()}
        state.v = {k: np.zeros_like(a) for k, a in params.weights.items()}
        return state


def adam_step(state, params, grads):
    """One bias-corrected Adam update, in place. Returns ``(params, state)``."""
    if set(grads) != set(params.weights):
        raise ShapeMismatch(f"gradient keys {sorted(grads)} != parameter keys {sorted(params.weights)}")
    for k, g in grads.items():
        if np.shape(g) != params.weights[k].shape:
            raise ShapeMismatch(f"gradient {k} has shape {np.shape(g)}, parameter {params.weights[k].shape}")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for k, g in grads.items():
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        params.weights[k] -= state.lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + state.eps)
    return params, state
