from pathlib import Path

import numpy as np
import pytest

from dica import DicaModel

DATA = Path(__file__).resolve().parents[1] / "data"
MNIST_IMAGES = DATA / "mnist5k-images-idx3-ubyte.gz"
MNIST_LABELS = DATA / "mnist5k-labels-idx1-ubyte.gz"

# four 16-pixel patterns, pairwise Hamming distance >= 6
PATTERNS = np.array([
    [0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 0, 1, 0, 1],
    [1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 1, 0],
    [0, 0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 0, 1, 1, 0],
    [1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 0, 0, 1],
])


def pattern_model(patterns=PATTERNS, eps=0.0, priors=None, label_cpt=None):
    """Two binary sources; product state ``s`` emits ``patterns[s]``.

    With ``eps > 0`` each pixel is flipped with probability ``eps``.
    """
    patterns = np.asarray(patterns)
    p1 = np.where(patterns == 1, 1.0 - eps, eps)
    cpts = tuple(np.stack([1.0 - p1[:, j], p1[:, j]], axis=1) for j in range(patterns.shape[1]))
    if priors is None:
        priors = (np.array([0.5, 0.5]), np.array([0.5, 0.5]))
    return DicaModel((2, 2), (2,) * patterns.shape[1], priors, cpts, label_cpt)


@pytest.fixture
def toy():
    return pattern_model()


_acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log():
    def record(criterion, ok, detail):
        _acceptance_lines.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
