"""Training: class-balanced batch -> optional SiMix -> loss -> memory-bounded update.

The two-pass step embeds the whole batch without keeping activations,
computes the loss gradient with respect to the embeddings only, then
re-embeds the batch chunk by chunk with activations kept and pushes the
stored embedding gradients through the encoder. Peak activation memory
scales with ``chunk_size`` rather than the batch size. The single-pass
step is the ordinary reference path and yields the same update.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from .errors import ConfigError, RanklossError
from .numerics import similarity_matrix
from .retrieval_eval import evaluate
from .rsloss import DEFAULT_KS, DEFAULT_KS_SIMIX, LossConfig, LossResult, chain_to_embeddings, rs_loss
from .sampler import DatasetIndex, class_balanced_batch, filter_small_classes
from .simix import collapse_virtual_grads, enumerate_virtual, extend_similarities

log = logging.getLogger(__name__)

CONTRASTIVE_MARGIN = 0.5
STAGES = ("sample", "embed", "loss", "backprop", "update", "eval")


@dataclass
class TrainConfig:
    batch_size: int = 64
    samples_per_class: int = 4
    iterations: int = 200
    simix: bool = False
    tau1: float = 1.0
    tau2: float = 0.01
    ks: tuple = None
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay_factor: float = 1.0
    lr_decay_steps: tuple = ()
    chunk_size: int = 64
    seed: int = 0
    loss: str = "rsk"
    encoder: str = "linear"
    dim: int = 16
    eval_every: int = 25

    def __post_init__(self):
        if self.ks is None:
            self.ks = DEFAULT_KS_SIMIX if self.simix else DEFAULT_KS
        self.ks = tuple(self.ks)
        self.lr_decay_steps = tuple(self.lr_decay_steps)

    @property
    def loss_config(self):
        return LossConfig(tau1=self.tau1, tau2=self.tau2, ks=self.ks, clipped=True)

    def validate(self):
        if self.samples_per_class < 2:
            raise ConfigError("samples_per_class must be >= 2 so every query has a positive")
        if self.batch_size < 1 or self.batch_size % self.samples_per_class:
            raise ConfigError(f"batch_size {self.batch_size} is not a multiple of samples_per_class {self.samples_per_class}")
        if self.chunk_size < 1:
            raise ConfigError("chunk_size must be >= 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.eval_every < 0:
            raise ConfigError("eval_every must be >= 0")
        if self.loss not in ("rsk", "contrastive"):
            raise ConfigError(f"unknown loss {self.loss!r}; expected 'rsk' or 'contrastive'")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        try:
            enc.parse_arch(self.encoder)
            self.loss_config
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def lr_at(self, iteration):
        drops = sum(1 for s in self.lr_decay_steps if iteration >= s)
        return self.lr * self.lr_decay_factor ** drops


def contrastive_loss(sims, labels, margin=CONTRASTIVE_MARGIN):
    """Pairwise contrastive loss on unit-norm similarities.

    Matching pairs pay their squared distance ``2 - 2s``; non-matching pairs
    pay ``max(0, margin - d)^2``. Averaged over ordered pairs ``i != j``.
    """
    sims = np.asarray(sims, dtype=np.float64)
    labels = np.asarray(labels)
    n = sims.shape[0]
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(n, dtype=bool)
    sq = np.maximum(2.0 - 2.0 * sims, 1e-12)
    d = np.sqrt(sq)
    hinge = np.maximum(margin - d, 0.0)
    terms = np.where(same, sq, hinge ** 2) * off
    grad = np.where(same, -2.0, 2.0 * hinge / d) * off
    pairs = n * (n - 1)
    per_query = terms.sum(axis=1) / (n - 1)
    return LossResult(float(terms.sum() / pairs), grad / pairs, per_query)


def embedding_objective(E, labels, cfg, rng):
    """Loss on a batch of embeddings and its gradient with respect to them.

    Returns ``(loss, grad_E, batch_size_seen_by_loss)``.
    """
    labels = np.asarray(labels)
    sims = similarity_matrix(E)
    ext = None
    if cfg.simix:
        ext = enumerate_virtual(labels, rng)
        sims = extend_similarities(sims, ext)
        labels = ext.labels
    if cfg.loss == "contrastive":
        res = contrastive_loss(sims, labels)
    else:
        res = rs_loss(sims, labels, cfg.loss_config)
    grad_sims = res.grad_sims if ext is None else collapse_virtual_grads(res.grad_sims, ext)
    return res.loss, chain_to_embeddings(grad_sims, E), sims.shape[0]


def _zeros_like(params):
    return {k: np.zeros_like(v) for k, v in params.weights.items()}


def two_pass_gradients(params, X, labels, cfg, rng, timer=None):
    timer = timer or _Timer()
    with timer("embed"):
        E, _ = enc.forward(params, X, retain=False)
    with timer("loss"):
        loss, grad_E, seen = embedding_objective(E, labels, cfg, rng)
    del E
    grads = _zeros_like(params)
    with timer("backprop"):
        for start in range(0, X.shape[0], cfg.chunk_size):
            rows = slice(start, start + cfg.chunk_size)
            _, acts = enc.forward(params, X[rows], retain=True)
            for k, g in enc.backward(params, X[rows], acts, grad_E[rows]).items():
                grads[k] += g
    return loss, grads, seen


def single_pass_gradients(params, X, labels, cfg, rng, timer=None):
    timer = timer or _Timer()
    with timer("embed"):
        E, acts = enc.forward(params, X, retain=True)
    with timer("loss"):
        loss, grad_E, seen = embedding_objective(E, labels, cfg, rng)
    with timer("backprop"):
        grads = enc.backward(params, X, acts, grad_E)
    return loss, grads, seen


def train_step_two_pass(params, state, X, labels, cfg, rng):
    """Memory-bounded update. Mutates and returns ``(params, loss)``."""
    loss, grads, _ = two_pass_gradients(params, X, labels, cfg, rng)
    enc.adam_step(state, params, grads)
    return params, loss


def train_step_single_pass(params, state, X, labels, cfg, rng):
    loss, grads, _ = single_pass_gradients(params, X, labels, cfg, rng)
    enc.adam_step(state, params, grads)
    return params, loss


class _Timer:
    def __init__(self):
        self.totals = dict.fromkeys(STAGES, 0.0)

    def __call__(self, stage):
        timer = self

        class _Span:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.totals[stage] += time.perf_counter() - self.t0

        return _Span()


@dataclass
class TrainReport:
    iterations: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    lrs: list = field(default_factory=list)
    validation: dict = field(default_factory=dict)
    elapsed_ms: list = field(default_factory=list)
    stage_seconds: dict = field(default_factory=dict)
    expanded_batch: int = 0

    def rows(self):
        """One dict per iteration; validation columns are None off-cadence."""
        for it, loss, ms in zip(self.iterations, self.losses, self.elapsed_ms):
            yield {"iteration": it, "loss": loss, "val": self.validation.get(it), "elapsed_ms": ms}


def init_encoder(cfg, input_dim):
    return enc.init_params(input_dim, cfg.dim, cfg.encoder, seed=cfg.seed)


def embed(params, X, chunk=4096):
    return np.concatenate([enc.forward(params, X[s:s + chunk])[0] for s in range(0, X.shape[0], chunk)])


def validate_setup(train, cfg, params=None):
    cfg.validate()
    if params is not None and params.input_dim != train.dim:
        raise ConfigError(f"encoder expects {params.input_dim} features, data has {train.dim}")
    try:
        index = filter_small_classes(DatasetIndex.from_labels(train.labels), cfg.samples_per_class)
    except RanklossError as e:
        raise ConfigError(str(e)) from None
    need = cfg.batch_size // cfg.samples_per_class
    if len(index) < need:
        raise ConfigError(f"batch of {cfg.batch_size} needs {need} classes with >= "
                          f"{cfg.samples_per_class} examples; training data has {len(index)}")
    return index


def train_loop(train, cfg, val=None, params=None):
    """Run ``cfg.iterations`` two-pass updates on class-balanced batches.

    ``train`` and ``val`` are :class:`~rankloss_kit.dataio.Dataset` objects.
    Validation metrics are computed every ``cfg.eval_every`` iterations and
    at the last iteration when ``val`` is given. Returns ``(params, report)``.
    """
    index = validate_setup(train, cfg, params)
    if params is None:
        params = init_encoder(cfg, train.dim)
    state = enc.AdamState.for_params(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    timer = _Timer()
    report = TrainReport()
    t0 = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        with timer("sample"):
            batch = class_balanced_batch(index, cfg.batch_size, cfg.samples_per_class, rng)
            X, y = train.features[batch], train.labels[batch]
        loss, grads, seen = two_pass_gradients(params, X, y, cfg, rng, timer)
        if it == 1:
            report.expanded_batch = seen
            if cfg.simix:
                log.info("SiMix expanded batch %d -> %d", cfg.batch_size, seen)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at iteration {it}")
        with timer("update"):
            state.lr = cfg.lr_at(it - 1)
            enc.adam_step(state, params, grads)
        report.iterations.append(it)
        report.losses.append(loss)
        report.lrs.append(state.lr)
        if val is not None and cfg.eval_every and (it % cfg.eval_every == 0 or it == cfg.iterations):
            with timer("eval"):
                report.validation[it] = evaluate(embed(params, val.features), val.labels, sorted({1, *cfg.ks}))
        report.elapsed_ms.append((time.perf_counter() - t0) * 1000.0)
        log.debug("iteration %d loss %.6f", it, loss)
    report.stage_seconds = dict(timer.totals)
    return params, report
