import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def balanced_labels(classes, per_class):
    return np.repeat(np.arange(classes), per_class)


def separated_row(rng, k, gap=0.11, margin=5, n_pos=None):
    """A similarity row with a self entry at index 0 whose positives all sit
    more than ``margin`` ranks away from ``k`` and whose sorted values are
    spaced by more than ``gap``. Returns (row, pos_mask, ranks)."""
    n = int(rng.integers(k + margin + 1, k + margin + 16))
    allowed = [r for r in range(1, n + 1) if abs(k - r) > margin]
    n_pos = n_pos or int(rng.integers(1, min(5, len(allowed)) + 1))
    ranks = np.sort(rng.choice(allowed, size=n_pos, replace=False))
    values = np.cumsum(gap + rng.uniform(0.001, 0.2, n))[::-1]  # descending, spacing > gap
    order = rng.permutation(n)                                   # column of rank r is order[r-1]
    db = np.empty(n)
    db[order] = values
    mask = np.zeros(n + 1, dtype=bool)
    mask[1 + order[ranks - 1]] = True
    row = np.concatenate([[values[0] + 1.0], db])
    return row, mask, ranks


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def record(name, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
