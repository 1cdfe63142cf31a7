"""Class-balanced mini-batches: M/m random classes, m random examples each."""

import numpy as np

from .errors import EmptyAfterFilter, NotDivisible, TooFewClasses

DEFAULT_PER_CLASS = 4


class DatasetIndex:
    """Map from class id to the example indices of that class."""

    def __init__(self, classes):
        self.classes = {c: np.asarray(idx, dtype=np.int64) for c, idx in sorted(classes.items())}

    @classmethod
    def from_labels(cls, labels):
        labels = np.asarray(labels)
        return cls({c.item(): np.nonzero(labels == c)[0] for c in np.unique(labels)})

    @property
    def num_examples(self):
        return sum(v.size for v in self.classes.values())

    def __len__(self):
        return len(self.classes)

    def __repr__(self):
        return f"DatasetIndex({len(self)} classes, {self.num_examples} examples)"


def filter_small_classes(index, m=DEFAULT_PER_CLASS):
    """Drop classes with fewer than ``m`` examples."""
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    kept = {c: idx for c, idx in index.classes.items() if idx.size >= m}
    if not kept:
        raise EmptyAfterFilter(f"no class has at least {m} examples")
    return DatasetIndex(kept)


def class_balanced_batch(index, M, m=DEFAULT_PER_CLASS, rng=None):
    """Sample ``M`` example indices: ``m`` from each of ``M // m`` distinct classes.

    Classes and examples within a class are drawn without replacement.
    Classes smaller than ``m`` are never chosen.
    """
    if rng is None:
        rng = np.random.default_rng()
    if m < 1 or M % m:
        raise NotDivisible(f"batch size {M} is not a multiple of {m}")
    n_classes = M // m
    eligible = [c for c, idx in index.classes.items() if idx.size >= m]
    if len(eligible) < n_classes:
        raise TooFewClasses(f"need {n_classes} classes with >= {m} examples, have {len(eligible)}")
    chosen = rng.choice(len(eligible), size=n_classes, replace=False)
    batch = [rng.choice(index.classes[eligible[c]], size=m, replace=False) for c in chosen]
    return np.concatenate(batch)
