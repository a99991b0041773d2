"""Preprocessing applied before HD encoding: normalization, then random
Fourier features approximating an RBF kernel of length-scale ``sigma``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError

NORMALIZATION_MODES = ("pixel-scale", "unit-norm", "z-score", "none")
STD_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class RffmBasis:
    omega: np.ndarray
    offset: np.ndarray
    sigma: float
    seed: int

    @property
    def input_dim(self) -> int:
        return self.omega.shape[0]

    @property
    def feature_count(self) -> int:
        return self.omega.shape[1]


def make_rffm(seed: int, d: int, F: int, sigma: float) -> RffmBasis:
    if d < 1 or F < 1:
        raise InvalidArgumentError(f"RFFM dimensions must be >= 1, got d={d}, F={F}")
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    rng = np.random.Generator(np.random.PCG64(seed))
    omega = rng.standard_normal((d, F))
    offset = rng.uniform(0.0, 2.0 * np.pi, F)
    omega.setflags(write=False)
    offset.setflags(write=False)
    return RffmBasis(omega, offset, float(sigma), int(seed))


def rffm_transform_batch(basis: RffmBasis, X) -> np.ndarray:
    """``sqrt(2/F) * cos(X @ omega / sigma + offset)`` row by row."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != basis.input_dim:
        raise InvalidArgumentError(
            f"expected an n x {basis.input_dim} matrix, got shape {X.shape}"
        )
    z = X @ basis.omega
    z /= basis.sigma
    z += basis.offset
    np.cos(z, out=z)
    z *= np.sqrt(2.0 / basis.feature_count)
    return z


def rffm_transform(basis: RffmBasis, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != basis.input_dim:
        raise InvalidArgumentError(
            f"expected a vector of length {basis.input_dim}, got shape {x.shape}"
        )
    return rffm_transform_batch(basis, x[None, :])[0]


@dataclass(frozen=True)
class NormalizationSpec:
    """How raw features are rescaled.

    ``pixel-scale`` divides by 255.  ``unit-norm`` divides by 255 and then
    scales every row to unit Euclidean length, which keeps ``<x, W[:, j]>``
    near unit variance for image data.  ``z-score`` standardizes columns with
    training statistics.
    """

    mode: str
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None


def fit_normalizer(train_features, mode: str) -> NormalizationSpec:
    if mode not in NORMALIZATION_MODES:
        raise InvalidArgumentError(
            f"unknown normalization {mode!r}; expected one of {NORMALIZATION_MODES}"
        )
    if mode != "z-score":
        return NormalizationSpec(mode)
    X = np.asarray(train_features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgumentError("z-score normalization needs a non-empty training set")
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    return NormalizationSpec(mode, X.mean(axis=0), std)


def apply_normalizer(spec: NormalizationSpec, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if spec.mode == "none":
        return X.copy()
    if spec.mode == "pixel-scale":
        return X / 255.0
    if spec.mode == "unit-norm":
        X = X / 255.0
        norms = np.linalg.norm(X, axis=-1, keepdims=True)
        return X / np.where(norms > 0, norms, 1.0)
    return (X - spec.mean) / spec.std


def preprocess(dataset, normalization: str, rffm: Optional[RffmBasis]):
    """Normalize with training statistics, then map through ``rffm`` if given.

    Returns a dataset whose features are the HD encoder's input.
    """
    from .datasets import Dataset

    spec = fit_normalizer(dataset.train_x, normalization)
    train = apply_normalizer(spec, dataset.train_x)
    test = apply_normalizer(spec, dataset.test_x)
    if rffm is not None:
        train = rffm_transform_batch(rffm, train)
        test = rffm_transform_batch(rffm, test)
    return Dataset(dataset.name, train, dataset.train_y, test, dataset.test_y, dataset.num_classes)
