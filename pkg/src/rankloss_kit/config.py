"""``key=value`` experiment config files."""

import dataclasses

from .errors import ConfigError
from .trainer import TrainConfig

BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _ints(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _bool(text):
    try:
        return BOOL[text.lower()]
    except KeyError:
        raise ValueError(f"expected true/false, got {text!r}") from None


PARSERS = {
    "seed": int,
    "dim": int,
    "input_dim": int,
    "batch_size": int,
    "samples_per_class": int,
    "tau1": float,
    "tau2": float,
    "k_set": _ints,
    "simix": _bool,
    "lr": float,
    "iterations": int,
    "chunk_size": int,
    "encoder": str,
    "loss": str,
    "lr_decay_factor": float,
    "lr_decay_steps": _ints,
    "eval_every": int,
}

# config key -> TrainConfig field
FIELD = {"k_set": "ks"}


def parse_config(text, source="<config>"):
    """Parse config text into ``(TrainConfig, input_dim)``.

    ``input_dim`` is 0 when the file does not pin it (taken from the data).
    Unknown keys and malformed values raise ConfigError naming the line.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        if key not in PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = PARSERS[key](value)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {e}") from None
    return build_config(values)


def build_config(values):
    values = dict(values)
    input_dim = values.pop("input_dim", 0)
    cfg = TrainConfig(**{FIELD.get(k, k): v for k, v in values.items()})
    cfg.validate()
    return cfg, input_dim


def load_config(path):
    with open(path) as f:
        return parse_config(f.read(), source=str(path))


def config_values(cfg):
    """Inverse of :func:`build_config` as a plain dict of config keys."""
    out = {}
    inv = {v: k for k, v in FIELD.items()}
    for f in dataclasses.fields(cfg):
        out[inv.get(f.name, f.name)] = getattr(cfg, f.name)
    return out
