"""
Marginal relative entropy of a particle ensemble against a grid density.

Two estimators are offered. ``knn`` is the Kozachenko-Leonenko entropy
estimate with Chebyshev nearest-neighbor balls, combined with the exact
reference log-density. ``kde-grid`` histograms the particles on the reference
grid, smooths with a Gaussian and integrates the relative entropy there.
Standard errors come from bootstrap resampling on a reserved stream.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree
from scipy.special import digamma

from meanfieldlab import streams
from meanfieldlab.diagnostics.information import relative_entropy
from meanfieldlab.errors import EstimatorError
from meanfieldlab.grid import DENSITY_FLOOR, GridDensity
from meanfieldlab.sde import ParticleEnsemble
from meanfieldlab.utils.logger import logger

MIN_PARTICLES = 100
ADMISSIBLE_FLOOR = -0.05


class ChaosEstimator(str, Enum):
    KNN = "knn"
    KDE_GRID = "kde-grid"


@dataclass(frozen=True)
class ChaosEstimate:
    N: int
    k: int
    estimator: ChaosEstimator
    value: float
    stderr: float

    @property
    def is_admissible(self) -> bool:
        """Small negative values are estimator bias; larger ones flag a failure."""
        return self.value >= ADMISSIBLE_FLOOR


def reference_log_density(reference: GridDensity) -> RegularGridInterpolator:
    """Linear interpolant of ``ln reference``, extrapolating outside the box."""
    logs = np.log(np.maximum(reference.values, DENSITY_FLOOR))
    return RegularGridInterpolator(
        (reference.axis,) * reference.d, logs, bounds_error=False, fill_value=None
    )


def knn_terms(samples: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """Per-sample terms whose mean is the nearest-neighbor KL estimate."""
    n, d = samples.shape
    tree = cKDTree(samples)
    # The nearest neighbor of a sample is itself; take the second column.
    distances = tree.query(samples, k=2, p=np.inf)[0][:, 1]
    if np.any(distances <= 0.0):
        raise EstimatorError("coincident samples make the nearest-neighbor estimate undefined")
    entropy_terms = digamma(n) - digamma(1) + d * np.log(2.0 * distances)
    return -entropy_terms - log_q


def _bootstrap(values: np.ndarray, resamples: int, seed: int) -> float:
    rng = streams.generator(seed, streams.RESAMPLE_STEP)
    picks = rng.integers(0, len(values), size=(resamples, len(values)))
    return float(np.std(values[picks].mean(axis=1), ddof=1))


def _pair_samples(positions: np.ndarray) -> np.ndarray:
    half = len(positions) // 2
    return np.concatenate([positions[:half], positions[half : 2 * half]], axis=1)


def marginal_kl(
    ensemble: ParticleEnsemble,
    reference: GridDensity,
    estimator: ChaosEstimator | str = ChaosEstimator.KNN,
    *,
    k: int = 1,
    resamples: int = 32,
    seed: int | None = None,
    bandwidth: float | None = None,
) -> ChaosEstimate:
    """Estimate ``H(law of X^1, ..., X^k | reference^{(x)k})`` from an ensemble.

    ``k = 2`` uses disjoint particle pairs and the ``knn`` estimator only; it
    is high-variance at desk scale and logged as such.

    Raises
    ------
    EstimatorError
        Fewer than 100 particles, or ``k = 2`` with ``kde-grid``.
    """
    estimator = ChaosEstimator(estimator)
    if ensemble.N < MIN_PARTICLES:
        raise EstimatorError(
            f"marginal_kl needs at least {MIN_PARTICLES} particles, got {ensemble.N}"
        )
    if ensemble.d != reference.d:
        raise ValueError(
            f"ensemble dimension {ensemble.d} differs from the reference grid {reference.d}"
        )
    if k not in (1, 2):
        raise ValueError(f"marginal order must be 1 or 2, got {k}")
    seed = ensemble.seed if seed is None else seed
    positions = ensemble.positions

    if k == 2:
        if estimator is not ChaosEstimator.KNN:
            raise EstimatorError("two-particle marginals use the knn estimator")
        logger.warning("k = 2 marginal estimate is high-variance at this sample size")
        log_density = reference_log_density(reference)
        pairs = _pair_samples(positions)
        d = reference.d
        log_q = log_density(pairs[:, :d]) + log_density(pairs[:, d:])
        terms = knn_terms(pairs, log_q)
        return ChaosEstimate(
            ensemble.N, 2, estimator, float(terms.mean()), _bootstrap(terms, resamples, seed)
        )

    if estimator is ChaosEstimator.KNN:
        log_q = reference_log_density(reference)(positions)
        terms = knn_terms(positions, log_q)
        return ChaosEstimate(
            ensemble.N, 1, estimator, float(terms.mean()), _bootstrap(terms, resamples, seed)
        )

    def kde_value(samples: np.ndarray) -> float:
        density = GridDensity.from_samples(
            samples, n=reference.n, half_width=reference.half_width, bandwidth=bandwidth
        )
        return relative_entropy(density, reference)

    value = kde_value(positions)
    rng = streams.generator(seed, streams.RESAMPLE_STEP)
    replicas = [
        kde_value(positions[rng.integers(0, ensemble.N, size=ensemble.N)])
        for _ in range(resamples)
    ]
    stderr = float(np.std(replicas, ddof=1)) if resamples > 1 else math.nan
    return ChaosEstimate(ensemble.N, 1, estimator, value, stderr)
