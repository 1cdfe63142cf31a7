"""Synthetic datasets, the plain-text dataset format, splits and checkpoints.

Dataset file format::

    N p
    <class> <f_1> ... <f_p>      (N lines)

Checkpoints are a binary container: the magic ``RSKCKPT1``, a little-endian
uint32 header length, a JSON header, then each parameter as raw
little-endian float64 in header order.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderParams, parse_arch
from .errors import BadParam, CorruptCheckpoint, ParseError, TooFewClasses, VersionMismatch

MAGIC = b"RSKCKPT1"
CHECKPOINT_VERSION = 1


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise BadParam(f"features {self.features.shape} do not match {self.labels.shape[0]} labels")
        if self.labels.size and self.labels.min() < 0:
            raise BadParam("class labels must be nonnegative")

    def __len__(self):
        return self.labels.size

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def num_classes(self):
        return np.unique(self.labels).size

    def subset(self, idx):
        return Dataset(self.features[idx], self.labels[idx], dict(self.meta))


def generate_synthetic(classes, per_class, dim, noise, seed=0):
    """Gaussian clusters around class centers drawn uniformly on the unit sphere.

    ``noise`` is the per-coordinate standard deviation of the isotropic
    Gaussian added to each center. Rows are grouped by class.
    """
    if classes < 2 or per_class < 2 or dim < 1 or not noise >= 0:
        raise BadParam(f"bad generator parameters: classes={classes}, per_class={per_class}, dim={dim}, noise={noise}")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.repeat(np.arange(classes), per_class)
    features = centers[labels] + noise * rng.standard_normal((labels.size, dim))
    meta = {"name": "synthetic", "seed": seed, "classes": classes,
            "per_class": per_class, "dim": dim, "noise": noise}
    return Dataset(features, labels, meta)


def split_by_classes(d):
    """First half of the sorted class ids for training, the rest for evaluation."""
    ids = np.unique(d.labels)
    if ids.size < 2:
        raise TooFewClasses(f"need at least 2 classes to split, got {ids.size}")
    train_ids = ids[: ids.size // 2]
    in_train = np.isin(d.labels, train_ids)
    return d.subset(np.nonzero(in_train)[0]), d.subset(np.nonzero(~in_train)[0])


def save_dataset(d, path):
    lines = [f"{len(d)} {d.dim}"]
    for c, row in zip(d.labels, d.features):
        lines.append(" ".join([str(int(c))] + [repr(float(v)) for v in row]))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_dataset(path):
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file", line=1)
    header = lines[0].split()
    try:
        n, p = (int(t) for t in header)
    except ValueError:
        raise ParseError(f"{path}:1: header must be 'N p', got {lines[0]!r}", line=1) from None
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise ParseError(f"{path}:{len(body) + 2}: header declares {n} rows, found {len(body)}",
                         line=len(body) + 2)
    labels = np.empty(n, dtype=np.int64)
    features = np.empty((n, p))
    for i, ln in enumerate(body):
        lineno = i + 2
        tokens = ln.split()
        if len(tokens) != p + 1:
            raise ParseError(f"{path}:{lineno}: expected {p + 1} fields, got {len(tokens)}", line=lineno)
        try:
            labels[i] = int(tokens[0])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad class id {tokens[0]!r}", line=lineno, token=tokens[0]) from None
        for j, tok in enumerate(tokens[1:]):
            try:
                features[i, j] = float(tok)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric token {tok!r}", line=lineno, token=tok) from None
    meta = {"name": str(path)}
    return Dataset(features, labels, meta)


def checkpoint_bytes(params, seed=0, iteration=0):
    names = list(params.shapes())
    header = {
        "version": CHECKPOINT_VERSION,
        "arch": params.tag,
        "input_dim": params.input_dim,
        "output_dim": params.output_dim,
        "seed": int(seed),
        "iteration": int(iteration),
        "tensors": [[k, list(params.weights[k].shape)] for k in names],
    }
    head = json.dumps(header, sort_keys=True).encode()
    blobs = b"".join(np.ascontiguousarray(params.weights[k], dtype="<f8").tobytes() for k in names)
    return MAGIC + struct.pack("<I", len(head)) + head + blobs


def save_checkpoint(params, path, seed=0, iteration=0):
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(params, seed, iteration))


def parse_checkpoint(data):
    """Decode checkpoint bytes into ``(params, header)``."""
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint("missing RSKCKPT1 magic")
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    if len(data) < start + hlen:
        raise CorruptCheckpoint("truncated header")
    try:
        header = json.loads(data[start:start + hlen])
    except ValueError as e:
        raise CorruptCheckpoint(f"unreadable header: {e}") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint version {header.get('version')} != supported {CHECKPOINT_VERSION}")
    kind, hidden = parse_arch(header["arch"])
    params = EncoderParams(kind, header["input_dim"], header["output_dim"], hidden)
    offset = start + hlen
    expected = params.shapes()
    for name, shape in header["tensors"]:
        if tuple(shape) != expected.get(name):
            raise CorruptCheckpoint(f"tensor {name} has shape {shape}, architecture expects {expected.get(name)}")
        nbytes = 8 * int(np.prod(shape))
        if len(data) < offset + nbytes:
            raise CorruptCheckpoint(f"truncated tensor {name}")
        params.weights[name] = np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if set(params.weights) != set(expected):
        raise CorruptCheckpoint("checkpoint is missing tensors")
    if offset != len(data):
        raise CorruptCheckpoint(f"{len(data) - offset} trailing bytes")
    return params, header


def load_checkpoint(path):
    with open(path, "rb") as f:
        return parse_checkpoint(f.read())
