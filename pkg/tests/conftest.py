import json
import os
from pathlib import Path

import numpy as np
import pytest

from refhdc.datasets import Dataset

ROOT = Path(__file__).resolve().parents[1]

ACCEPTANCE_LINES = []


def make_blobs(n_train=600, n_test=300, num_classes=4, dim=10, spread=0.25, seed=0):
    """Gaussian class clusters scaled to roughly unit row norm."""
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((num_classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    def draw(n):
        y = np.arange(n) % num_classes
        rng.shuffle(y)
        x = centers[y] + spread * rng.standard_normal((n, dim)) / np.sqrt(dim)
        return x, y

    tx, ty = draw(n_train)
    vx, vy = draw(n_test)
    return Dataset("blobs", tx, ty, vx, vy, num_classes)


@pytest.fixture
def blobs():
    return make_blobs()


def data_manifest():
    """Manifest listing real dataset files, if one is available."""
    for candidate in (os.environ.get("REFHDC_DATA_MANIFEST"), ROOT / "data" / "manifest.json"):
        if candidate and Path(candidate).is_file():
            return Path(candidate)
    return None


def manifest_has(name):
    path = data_manifest()
    return path is not None and name in json.loads(path.read_text())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
