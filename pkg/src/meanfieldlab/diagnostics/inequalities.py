"""
Lower bounds on log-Sobolev and Poincare constants by test-function scans.

Constants follow the ``H(nu | mu) <= C_H I(nu | mu)`` convention. A scan
returns the largest ratio over a family of test functions, which bounds the
optimal constant from below; enlarging the family can only raise it.
"""

import itertools
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from meanfieldlab.errors import EstimatorError
from meanfieldlab.grid import GridDensity
from meanfieldlab.utils.config import Config

Array = np.ndarray

# A member maps a density to (h, grad h) on its grid, or None where it
# does not apply (for instance a 2-D member on a 1-D grid).
Generator = Callable[[GridDensity], tuple[Array, Array] | None]

ENERGY_FLOOR = 1e-14
DEFAULT_TILTS = (0.1, 0.25, 0.5, 1.0)


@dataclass(frozen=True)
class TestFunctionFamily:
    """Named test functions ``h`` with their gradients.

    Families combine with ``+``, which concatenates their members.
    """

    name: str
    generators: tuple[tuple[str, Generator], ...]

    __test__ = False

    def __add__(self, other: "TestFunctionFamily") -> "TestFunctionFamily":
        return TestFunctionFamily(
            f"{self.name}+{other.name}", self.generators + other.generators
        )

    def __len__(self) -> int:
        return len(self.generators)

    @classmethod
    def hermite(cls, k_max: int) -> "TestFunctionFamily":
        """Products of probabilists' Hermite polynomials of total degree 1..k_max.

        Coordinates are centered and scaled by the moments of the measure.
        """
        if k_max < 1:
            raise ValueError("k_max must be at least 1")

        def member(degrees: tuple[int, ...]) -> Generator:
            def generate(mu: GridDensity) -> tuple[Array, Array] | None:
                if any(degrees[mu.d :]):
                    return None
                degrees_d = degrees[: mu.d]
                mean = mu.mean()
                scale = np.sqrt(mu.second_moment() - mean**2)
                coordinates = [(c - mean[k]) / scale[k] for k, c in enumerate(mu.mesh())]
                values = [special.eval_hermitenorm(n, y) for n, y in zip(degrees_d, coordinates)]
                slopes = [
                    n * special.eval_hermitenorm(n - 1, y) / scale[k] if n > 0 else np.zeros_like(y)
                    for k, (n, y) in enumerate(zip(degrees_d, coordinates))
                ]
                h = np.prod(values, axis=0)
                gradient = np.stack(
                    [
                        np.prod([slopes[k] if j == k else values[j] for j in range(mu.d)], axis=0)
                        for k in range(mu.d)
                    ],
                    axis=-1,
                )
                return h, gradient

            return generate

        generators = tuple(
            (f"hermite{degrees}", member(degrees))
            for degrees in itertools.product(range(k_max + 1), repeat=2)
            if 1 <= sum(degrees) <= k_max
        )
        return cls(f"hermite{k_max}", generators)

    @classmethod
    def exponential_tilts(
        cls, lambdas: Sequence[float] = DEFAULT_TILTS
    ) -> "TestFunctionFamily":
        """``h(x) = exp(lambda x.e / 2)`` along axis and diagonal directions."""

        def member(lam: float, direction: Array) -> Generator:
            def generate(mu: GridDensity) -> tuple[Array, Array] | None:
                length = np.linalg.norm(direction[: mu.d])
                if length == 0.0:
                    return None
                e = direction[: mu.d] / length
                projection = np.einsum("...k,k->...", np.stack(mu.mesh(), axis=-1), e)
                h = np.exp(0.5 * lam * projection)
                return h, 0.5 * lam * h[..., None] * e

            return generate

        directions = [np.array(v, dtype=float) for v in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1))]
        generators = tuple(
            (f"tilt{lam:g}@{tuple(int(v) for v in e)}", member(lam, e))
            for lam in lambdas
            for e in directions
        )
        return cls("exponential_tilts", generators)

    @classmethod
    def compact_bumps(
        cls, centers: Sequence[Sequence[float]], widths: Sequence[float]
    ) -> "TestFunctionFamily":
        """Smooth bumps ``1 + exp(-1 / (1 - |x - c|^2 / w^2))`` supported near ``c``."""

        def member(center: Array, width: float) -> Generator:
            def generate(mu: GridDensity) -> tuple[Array, Array]:
                points = np.stack(mu.mesh(), axis=-1) - center[: mu.d]
                gap = 1.0 - np.sum(points**2, axis=-1) / width**2
                inside = gap > 0
                safe = np.where(inside, gap, 1.0)
                bump = np.where(inside, np.exp(-1.0 / safe), 0.0)
                slope = np.where(inside, -2.0 * bump / (safe**2 * width**2), 0.0)
                return 1.0 + bump, slope[..., None] * points

            return generate

        generators = tuple(
            (f"bump@{tuple(c)}w{w:g}", member(np.asarray(c, dtype=float), w))
            for c in centers
            for w in widths
        )
        return cls("compact_bumps", generators)

    @classmethod
    def perturbed_constant(cls, amplitude: float = 1e-3) -> "TestFunctionFamily":
        """``h = 1 + amplitude x_1``: a constant with a tiny non-constant part."""

        def generate(mu: GridDensity) -> tuple[Array, Array]:
            x = mu.mesh()[0]
            gradient = np.zeros(x.shape + (mu.d,))
            gradient[..., 0] = amplitude
            return 1.0 + amplitude * x, gradient

        return cls("perturbed_constant", (("perturbed_constant", generate),))


class ScanResult(NamedTuple):
    bound: float
    member: str
    ratios: dict[str, float]


def _weights(mu: GridDensity) -> Array:
    return mu.values * mu.cell_volume / mu.mass


def lsi_ratio(h: Array, gradient: Array, weights: Array) -> float | None:
    """``Ent(h^2) / (4 int |grad h|^2)`` after normalizing ``int h^2 = 1``."""
    norm = float(np.sum(h * h * weights))
    if not norm > 0:
        return None
    h2 = h * h / norm
    energy = float(np.sum(np.sum(gradient**2, axis=-1) * weights)) / norm
    if energy < ENERGY_FLOOR:
        return None
    positive = h2 > 0
    entropy = float(np.sum(h2[positive] * np.log(h2[positive]) * weights[positive]))
    return entropy / (4.0 * energy)


def poincare_ratio(h: Array, gradient: Array, weights: Array) -> float | None:
    """``Var(h) / int |grad h|^2`` after normalizing ``int h^2 = 1``."""
    norm = float(np.sum(h * h * weights))
    if not norm > 0:
        return None
    f = h / math.sqrt(norm)
    energy = float(np.sum(np.sum(gradient**2, axis=-1) * weights)) / norm
    if energy < ENERGY_FLOOR:
        return None
    mean = float(np.sum(f * weights))
    variance = float(np.sum(f * f * weights)) - mean * mean
    return variance / energy


def _scan(
    mu: GridDensity,
    family: TestFunctionFamily,
    ratio: Callable[[Array, Array, Array], float | None],
    workers: int | None,
) -> ScanResult:
    weights = _weights(mu)

    def evaluate(entry: tuple[str, Generator]) -> tuple[str, float | None]:
        name, generate = entry
        member = generate(mu)
        if member is None:
            return name, None
        h, gradient = member
        return name, ratio(np.asarray(h, dtype=float), np.asarray(gradient, dtype=float), weights)

    workers = workers or Config().default_workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(evaluate, family.generators))
    ratios = {name: value for name, value in results if value is not None}
    if not ratios:
        raise EstimatorError(f"family {family.name!r} has no admissible member")
    # Index-ordered maximum: the first member attaining it wins ties.
    best_name, best = None, -math.inf
    for name, value in results:
        if value is not None and value > best:
            best_name, best = name, value
    return ScanResult(best, best_name, ratios)


def lsi_scan(
    mu: GridDensity, family: TestFunctionFamily, *, workers: int | None = None
) -> ScanResult:
    """Lower bound on the optimal ``C_H`` with ``H <= C_H I`` for ``mu``.

    Raises
    ------
    EstimatorError
        Every member was filtered out.
    """
    return _scan(mu, family, lsi_ratio, workers)


def poincare_scan(
    mu: GridDensity, family: TestFunctionFamily, *, workers: int | None = None
) -> ScanResult:
    """Lower bound on the optimal Poincare constant of ``mu``."""
    return _scan(mu, family, poincare_ratio, workers)
