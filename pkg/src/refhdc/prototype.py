"""Class-prototype model: bundling, nearest-prototype inference, retraining."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ._kernels import retrain_pass
from .errors import InvalidArgumentError
from .hdspace import ZERO_NORM

MODEL_FORMAT = "refhdc-prototypes"
MODEL_FORMAT_VERSION = 1


@dataclass(eq=False)
class PrototypeModel:
    """``P[i]`` is the prototype of class ``i``."""

    P: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.P.shape[0]

    @property
    def dim(self) -> int:
        return self.P.shape[1]

    def copy(self) -> "PrototypeModel":
        return PrototypeModel(self.P.copy())

    @classmethod
    def zeros(cls, num_classes: int, dim: int) -> "PrototypeModel":
        return cls(np.zeros((num_classes, dim)))


@dataclass(frozen=True, eq=False)
class PositionSubset:
    """Strictly increasing prototype column indices."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise InvalidArgumentError("a position subset needs at least one index")
        if idx[0] < 0 or np.any(np.diff(idx) <= 0):
            raise InvalidArgumentError("position indices must be non-negative and strictly increasing")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return self.indices.size

    def __eq__(self, other):
        if not isinstance(other, PositionSubset):
            return NotImplemented
        return np.array_equal(self.indices, other.indices)

    __hash__ = None


def _check_labels(labels, n, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise InvalidArgumentError(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvalidArgumentError(f"labels must lie in [0, {num_classes})")
    return labels


def bundle_init(encoded, labels, num_classes: int, alpha: float) -> PrototypeModel:
    """Sum each class's encoded rows and scale by ``alpha``; absent classes stay zero."""
    H = np.asarray(encoded, dtype=np.float64)
    if H.ndim != 2:
        raise InvalidArgumentError(f"encoded data must be 2-D, got shape {H.shape}")
    if not 0 < alpha <= 1:
        raise InvalidArgumentError(f"alpha must lie in (0, 1], got {alpha}")
    labels = _check_labels(labels, H.shape[0], num_classes)
    P = np.zeros((num_classes, H.shape[1]))
    for c in range(num_classes):
        rows = H[labels == c]
        if rows.shape[0]:
            P[c] = alpha * rows.sum(axis=0)
    return PrototypeModel(P)


def _columns(subset: Optional[PositionSubset], dim: int):
    if subset is None:
        return None
    if subset.indices[-1] >= dim:
        raise InvalidArgumentError(f"position {subset.indices[-1]} outside a {dim}-column model")
    return subset.indices


def class_distances(model: PrototypeModel, h, subset: Optional[PositionSubset] = None) -> np.ndarray:
    """Cosine distance from ``h`` to every prototype (same rule as retraining)."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (model.dim,):
        raise InvalidArgumentError(f"expected a vector of length {model.dim}, got {h.shape}")
    cols = _columns(subset, model.dim)
    P = model.P if cols is None else model.P[:, cols]
    if cols is not None:
        h = h[cols]
    norms = np.sqrt(np.einsum("ij,ij->i", P, P))
    hnorm = np.sqrt(h @ h)
    scores = P @ h
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.clip(scores / (norms * hnorm), -1.0, 1.0)
    dist = 1.0 - cos
    dist[(norms < ZERO_NORM) | (hnorm < ZERO_NORM)] = 1.0
    return dist


def predict(model: PrototypeModel, h, subset: Optional[PositionSubset] = None) -> int:
    """Nearest prototype by cosine distance; ties go to the smaller class index."""
    return int(np.argmin(class_distances(model, h, subset)))


def predict_batch(model: PrototypeModel, encoded, subset: Optional[PositionSubset] = None) -> np.ndarray:
    H = np.asarray(encoded, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != model.dim:
        raise InvalidArgumentError(f"expected an n x {model.dim} matrix, got shape {H.shape}")
    cols = _columns(subset, model.dim)
    P = model.P if cols is None else model.P[:, cols]
    if cols is not None:
        H = H[:, cols]
    norms = np.sqrt(np.einsum("ij,ij->i", P, P))
    hnorms = np.sqrt(np.einsum("ij,ij->i", H, H))
    scores = H @ P.T
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.clip(scores / np.outer(hnorms, norms), -1.0, 1.0)
    dist = 1.0 - cos
    dist[:, norms < ZERO_NORM] = 1.0
    dist[hnorms < ZERO_NORM, :] = 1.0
    return np.argmin(dist, axis=1)


def retrain(
    model: PrototypeModel,
    encoded,
    labels,
    alpha: float,
    epochs: int = 1,
    subset: Optional[PositionSubset] = None,
) -> Tuple[PrototypeModel, List[int]]:
    """Run ``epochs`` sequential retraining passes over the rows in the given order.

    With ``subset`` the distances and the updates use only those columns;
    every other column is returned untouched.
    Returns the new model and the mispredict count of each pass.
    """
    H = np.asarray(encoded, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != model.dim:
        raise InvalidArgumentError(f"expected an n x {model.dim} matrix, got shape {H.shape}")
    labels = _check_labels(labels, H.shape[0], model.num_classes)
    cols = _columns(subset, model.dim)
    if cols is None:
        work = model.P.copy()
        H = np.ascontiguousarray(H)
    else:
        work = np.ascontiguousarray(model.P[:, cols])
        H = np.ascontiguousarray(H[:, cols])
    counts = [int(retrain_pass(work, H, labels, float(alpha))) for _ in range(epochs)]
    if cols is None:
        return PrototypeModel(work), counts
    P = model.P.copy()
    P[:, cols] = work
    return PrototypeModel(P), counts


def retrain_epoch(model, encoded, labels, alpha, subset=None) -> Tuple[PrototypeModel, int]:
    new, counts = retrain(model, encoded, labels, alpha, 1, subset)
    return new, counts[0]


def accuracy(model: PrototypeModel, encoded, labels, subset: Optional[PositionSubset] = None) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        warnings.warn("accuracy of an empty test set is reported as 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.mean(predict_batch(model, encoded, subset) == labels))


def save_model(path, model: PrototypeModel, alpha: float, basis_seed: int) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "num_classes": model.num_classes,
        "dim": model.dim,
        "alpha": alpha,
        "basis_seed": basis_seed,
        "prototypes": model.P.ravel().tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path):
    """Returns ``(model, alpha, basis_seed)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_FORMAT_VERSION:
        raise InvalidArgumentError(f"{path}: not a version {MODEL_FORMAT_VERSION} {MODEL_FORMAT} file")
    P = np.array(doc["prototypes"], dtype=np.float64).reshape(doc["num_classes"], doc["dim"])
    return PrototypeModel(P), doc["alpha"], doc["basis_seed"]
