"""Random-projection hyperdimensional encoding and cosine distance.

The encoder maps a d-dimensional point x to a D-dimensional vector

    h[j] = cos(<x, W[:, j]> + phi[j]) * sin(<x, W[:, j]>)

with ``W`` standard normal and ``phi`` uniform on [0, 2*pi).  The product is
taken elementwise.  Every column of the basis is independent of the others, so
a basis can be cut into column blocks and the block encodings concatenated
back into the full encoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import project
from .errors import InvalidArgumentError

GENERATOR = "numpy.random.PCG64"
ZERO_NORM = 1e-12


@dataclass(frozen=True, eq=False)
class ProjectionBasis:
    W: np.ndarray
    phi: np.ndarray
    seed: int
    column_offset: int = 0

    @property
    def input_dim(self) -> int:
        return self.W.shape[0]

    @property
    def hd_dim(self) -> int:
        return self.W.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ProjectionBasis):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.column_offset == other.column_offset
            and np.array_equal(self.W, other.W)
            and np.array_equal(self.phi, other.phi)
        )

    __hash__ = None


def _readonly(a):
    a.setflags(write=False)
    return a


def make_basis(seed: int, d: int, D: int) -> ProjectionBasis:
    """Draw a basis: W row-major from the stream first, then phi."""
    if d < 1 or D < 1:
        raise InvalidArgumentError(f"basis dimensions must be >= 1, got d={d}, D={D}")
    rng = np.random.Generator(np.random.PCG64(seed))
    W = rng.standard_normal((d, D))
    phi = rng.uniform(0.0, 2.0 * np.pi, D)
    return ProjectionBasis(_readonly(W), _readonly(phi), int(seed))


def slice_columns(basis: ProjectionBasis, start: int, stop: int) -> ProjectionBasis:
    """Columns ``[start, stop)`` of ``basis`` as a standalone basis."""
    if not 0 <= start < stop <= basis.hd_dim:
        raise InvalidArgumentError(
            f"column range [{start}, {stop}) outside [0, {basis.hd_dim})"
        )
    W = np.ascontiguousarray(basis.W[:, start:stop])
    phi = basis.phi[start:stop].copy()
    return ProjectionBasis(
        _readonly(W), _readonly(phi), basis.seed, basis.column_offset + start
    )


def encode_batch(basis: ProjectionBasis, X) -> np.ndarray:
    """Encode the rows of ``X`` with one matrix product and elementwise trig.

    Each output row depends only on its input row, bit for bit, so callers may
    split ``X`` into chunks (or ``basis`` into column slices) freely.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != basis.input_dim:
        raise InvalidArgumentError(
            f"expected an n x {basis.input_dim} matrix, got shape {X.shape}"
        )
    if X.shape[0] == 0:
        return np.zeros((0, basis.hd_dim))
    proj = project(X, basis.W)
    out = np.cos(proj + basis.phi)
    out *= np.sin(proj)
    return out


def encode(basis: ProjectionBasis, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != basis.input_dim:
        raise InvalidArgumentError(
            f"expected a vector of length {basis.input_dim}, got shape {x.shape}"
        )
    return encode_batch(basis, x[None, :])[0]


def cosine_distance(a, b) -> float:
    """``1 - <a, b> / (|a| |b|)``; 1.0 when either vector has (near) zero norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"length mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < ZERO_NORM or nb < ZERO_NORM:
        return 1.0
    cos = float(np.dot(a, b) / (na * nb))
    return 1.0 - min(1.0, max(-1.0, cos))
