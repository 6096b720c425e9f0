"""Gaussian feature statistics and the Fréchet distance between them"""

from __future__ import annotations

import logging
import typing

import numpy as np
import scipy.linalg

from eo_curator import errors, models

LOGGER = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-8
EIGENVALUE_TOLERANCE = 1e-10


class GaussianAccumulator:
    """Single-pass mean and co-moment accumulator.

    Batches are folded in with the pairwise update of Chan, Golub and
    LeVeque, so partial accumulators built on any partition of the data
    merge into the same statistics as one pass over all of it.

    """

    def __init__(self, dimension: int) -> None:
        self.dimension = dimension
        self.n = 0
        self.mean = np.zeros(dimension, dtype=np.float64)
        self.comoment = np.zeros((dimension, dimension), dtype=np.float64)

    def update(self, vectors: np.ndarray) -> GaussianAccumulator:
        """Fold one vector or a ``(rows, d)`` batch into the accumulator."""
        batch = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if batch.shape[1] != self.dimension:
            raise errors.DimensionMismatch(
                f'vector of dimension {batch.shape[1]}, expected '
                f'{self.dimension}'
            )
        if not np.all(np.isfinite(batch)):
            raise errors.NotFiniteInput('feature vectors must be finite')
        if batch.shape[0] == 0:
            return self
        partial = GaussianAccumulator(self.dimension)
        partial.n = batch.shape[0]
        partial.mean = batch.mean(axis=0)
        centered = batch - partial.mean
        partial.comoment = centered.T @ centered
        return self.merge(partial)

    def merge(self, other: GaussianAccumulator) -> GaussianAccumulator:
        """Absorb ``other`` in place and return ``self``."""
        if other.dimension != self.dimension:
            raise errors.DimensionMismatch(
                f'cannot merge dimension {other.dimension} into '
                f'{self.dimension}'
            )
        if other.n == 0:
            return self
        if self.n == 0:
            self.n = other.n
            self.mean = other.mean.copy()
            self.comoment = other.comoment.copy()
            return self
        total = self.n + other.n
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.n / total)
        self.comoment = (
            self.comoment
            + other.comoment
            + np.outer(delta, delta) * (self.n * other.n / total)
        )
        self.n = total
        return self

    def finalize(self) -> models.GaussianStats:
        """Return the mean and unbiased covariance.

        A single sample yields an all-zero covariance.

        Raises:
            EmptyStream: nothing was accumulated.

        """
        if self.n == 0:
            raise errors.EmptyStream('no feature vectors were accumulated')
        if self.n == 1:
            cov = np.zeros_like(self.comoment)
        else:
            cov = self.comoment / (self.n - 1)
            cov = (cov + cov.T) / 2
        return models.GaussianStats(n=self.n, mean=self.mean.copy(), cov=cov)


def accumulate_stats(
    features: typing.Iterable[np.ndarray],
) -> models.GaussianStats:
    """Mean and covariance of a stream of feature vectors.

    Raises:
        EmptyStream: the stream yields nothing.

    """
    accumulator: GaussianAccumulator | None = None
    for vector in features:
        rows = np.atleast_2d(np.asarray(vector, dtype=np.float64))
        if accumulator is None:
            accumulator = GaussianAccumulator(rows.shape[1])
        accumulator.update(rows)
    if accumulator is None:
        raise errors.EmptyStream('no feature vectors were supplied')
    return accumulator.finalize()


def sqrtm_spd(matrix: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric positive semidefinite matrix.

    Uses a symmetric eigendecomposition; eigenvalues below zero are
    clamped to zero.

    Raises:
        NotFiniteInput: the matrix contains NaN or infinity.
        NotSymmetric: the matrix is not square or not symmetric within
            ``1e-8`` relative to its largest entry.

    """
    values = np.asarray(matrix, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise errors.NotSymmetric(f'matrix of shape {values.shape}')
    if not np.all(np.isfinite(values)):
        raise errors.NotFiniteInput('matrix contains non-finite entries')
    scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
    if np.max(np.abs(values - values.T), initial=0.0) > (
        SYMMETRY_TOLERANCE * scale
    ):
        raise errors.NotSymmetric('matrix is not symmetric')
    eigenvalues, eigenvectors = scipy.linalg.eigh((values + values.T) / 2)
    if eigenvalues.size and eigenvalues[0] < -EIGENVALUE_TOLERANCE * scale:
        LOGGER.warning(
            'Clamping negative eigenvalue %.3e to zero', eigenvalues[0]
        )
    root = (eigenvectors * np.sqrt(np.clip(eigenvalues, 0, None))) @ (
        eigenvectors.T
    )
    return typing.cast(np.ndarray, (root + root.T) / 2)


def frechet_distance(
    a: models.GaussianStats, b: models.GaussianStats, eps: float = 1e-6
) -> float:
    """Fréchet distance between two Gaussians.

    ``eps * I`` is added to both covariances first. The cross term is
    computed as ``sqrtm(sqrt(A) B sqrt(A))`` whose argument is symmetric
    positive semidefinite by construction. Tiny negative results from
    rounding are clamped to zero.

    Raises:
        DimensionMismatch: the Gaussians differ in dimension.

    """
    if a.dimension != b.dimension:
        raise errors.DimensionMismatch(
            f'dimensions {a.dimension} and {b.dimension} differ'
        )
    identity = np.eye(a.dimension)
    cov_a = a.cov + eps * identity
    cov_b = b.cov + eps * identity
    root_a = sqrtm_spd(cov_a)
    inner = root_a @ cov_b @ root_a
    cross = float(np.trace(sqrtm_spd((inner + inner.T) / 2)))
    delta = a.mean - b.mean
    distance = (
        float(delta @ delta)
        + float(np.trace(cov_a))
        + float(np.trace(cov_b))
        - 2 * cross
    )
    if distance < -1e-8:
        LOGGER.warning('Fréchet distance %.3e below zero, clamping', distance)
    return max(distance, 0.0)
