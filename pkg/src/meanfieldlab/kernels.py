"""
Interaction kernels, mollifiers, confinement potentials and drifts.

The singular interactions are the logarithmic potential ``g_0(x) = -ln|x|``
and the Riesz potentials ``g_s(x) = |x|^{-s}``; the force is ``K = M grad g``
for a constant matrix ``M``. Mollified versions ``g^eps = g * eta^eps`` are
radial, so they reduce to a one-dimensional radial integral which is tabulated
once per (kernel, mollifier) pair and interpolated afterwards.

Examples
--------
>>> kernel = RieszKernel.vortex(1.0)
>>> potential_eval(kernel, [1.0, 0.0])
-0.0
>>> value, force = mollified_kernel(kernel, Mollifier(0.1), [0.0, 0.0])
"""

import functools
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, special
from scipy.interpolate import CubicSpline
from scipy.stats import qmc

from meanfieldlab.errors import (
    EstimatorError,
    KernelAdmissibilityError,
    SingularityError,
)
from meanfieldlab.utils.logger import logger

Array = NDArray[np.float64]

# Rotation by a quarter turn; M = a * ROTATION is the vortex matrix.
ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])

TABLE_NODES = 4096
TABLE_INNER_FACTOR = 1e-3
DEFAULT_TABLE_RADIUS = 64.0
_QUADRATURE_NODES = 96
_CHUNK_ROWS = 256


def _points(x: ArrayLike, d: int) -> tuple[Array, bool]:
    """Return ``x`` as an array of points and whether a single point was given."""
    points = np.asarray(x, dtype=float)
    if points.shape[-1:] != (d,):
        raise ValueError(
            f"expected points with trailing dimension {d}, got shape {points.shape}"
        )
    return points, points.ndim == 1


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def sphere_directions(d: int, count: int) -> Array:
    """Deterministic, well spread unit vectors in dimension ``d``.

    Halton points are pushed through the normal quantile function and
    projected onto the sphere; in one dimension the directions alternate
    between +1 and -1.
    """
    if d == 1:
        return np.where(np.arange(count) % 2 == 0, 1.0, -1.0)[:, None]
    # The first Halton point is the origin, which has no direction.
    uniform = qmc.Halton(d=d, scramble=False).random(count + 1)[1:]
    gaussian = special.ndtri(uniform)
    return gaussian / np.linalg.norm(gaussian, axis=1, keepdims=True)


def box_points(d: int, count: int, half_width: float) -> Array:
    """Deterministic low-discrepancy points filling ``[-half_width, half_width]^d``."""
    uniform = qmc.Halton(d=d, scramble=False).random(count + 1)[1:]
    return half_width * (2.0 * uniform - 1.0)


def _radial_coefficient(s: float) -> float:
    return s if s > 0 else 1.0


def _riesz_values(r: Array, s: float) -> Array:
    return -np.log(r) if s == 0 else r ** (-s)


def _riesz_slope(r: Array, s: float) -> Array:
    # grad g(x) = x * slope(|x|)
    return -_radial_coefficient(s) * r ** (-s - 2.0)


@dataclass(frozen=True)
class RieszKernel:
    """Logarithmic (``s = 0``) or Riesz (``s > 0``) interaction in dimension ``d``.

    Parameters
    ----------
    d : int
        Dimension, at least 2.
    s : float
        Exponent with ``0 <= s < d - 1``.
    M : array_like
        ``d x d`` matrix applied to ``grad g``. It must be anti-symmetric when
        ``s >= d - 2`` and satisfy ``M : Hess g >= 0`` otherwise.
    check_admissibility : bool, default True
        Set to False for diagnostic kernels (for instance ``M = I`` when only
        the gradient is of interest); the exponent range is always enforced.
    """

    d: int
    s: float
    M: tuple[tuple[float, ...], ...]
    check_admissibility: bool = field(default=True, compare=False)

    def __post_init__(self) -> None:
        matrix = np.asarray(self.M, dtype=float)
        if int(self.d) != self.d or self.d < 2:
            raise KernelAdmissibilityError(f"dimension must be >= 2, got {self.d}")
        if matrix.shape != (self.d, self.d):
            raise KernelAdmissibilityError(
                f"M must be {self.d}x{self.d}, got shape {matrix.shape}"
            )
        if not np.all(np.isfinite(matrix)):
            raise KernelAdmissibilityError("M has non-finite entries")
        if not 0.0 <= self.s < self.d - 1:
            raise KernelAdmissibilityError(
                f"exponent s={self.s} outside [0, {self.d - 1})"
            )
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(
            self, "M", tuple(tuple(float(v) for v in row) for row in matrix)
        )
        if self.check_admissibility:
            self._check_matrix(matrix)

    @classmethod
    def vortex(cls, a: float = 1.0) -> "RieszKernel":
        """The two-dimensional vortex kernel ``d = 2, s = 0, M = a J``."""
        return cls(2, 0.0, a * ROTATION)

    @property
    def matrix(self) -> Array:
        return np.array(self.M)

    @property
    def is_antisymmetric(self) -> bool:
        return bool(np.array_equal(self.matrix, -self.matrix.T))

    @property
    def norm(self) -> float:
        """Spectral norm ``|M|``."""
        return float(np.linalg.norm(self.matrix, 2))

    def _check_matrix(self, matrix: Array) -> None:
        if self.s >= self.d - 2:
            scale = max(1.0, float(np.abs(matrix).max()))
            if not np.allclose(matrix, -matrix.T, rtol=0.0, atol=1e-12 * scale):
                raise KernelAdmissibilityError(
                    f"s={self.s} >= d-2={self.d - 2} requires an anti-symmetric M"
                )
            return
        values = self.hessian_contraction(_admissibility_sample(self.d))
        scale = float(np.abs(values).max())
        violations = int(np.count_nonzero(values < -1e-12 * max(scale, 1e-300)))
        if violations:
            raise KernelAdmissibilityError(
                f"M : Hess g < 0 at {violations} of {values.size} sampled points"
            )

    def potential(self, x: ArrayLike) -> Array | float:
        points, single = _points(x, self.d)
        r = np.linalg.norm(points, axis=-1)
        if np.any(r == 0.0):
            raise SingularityError("the potential is singular at the origin")
        values = _riesz_values(r, self.s)
        return float(values) if single else values

    def gradient(self, x: ArrayLike) -> Array:
        """``grad g`` at each point."""
        points, _ = _points(x, self.d)
        r = np.linalg.norm(points, axis=-1)
        if np.any(r == 0.0):
            raise SingularityError("the force is singular at the origin")
        return points * _riesz_slope(r, self.s)[..., None]

    def force(self, x: ArrayLike) -> Array:
        """``K(x) = M grad g(x)``."""
        return self.gradient(x) @ self.matrix.T

    def hessian_contraction(self, x: Array) -> Array:
        """``M : Hess g`` at nonzero points ``x`` of shape ``(n, d)``."""
        matrix = self.matrix
        r = np.linalg.norm(x, axis=-1)
        c = _radial_coefficient(self.s)
        quadratic = np.einsum("ni,ij,nj->n", x, matrix, x)
        return _riesz_slope(r, self.s) * np.trace(matrix) + c * (
            self.s + 2.0
        ) * r ** (-self.s - 4.0) * quadratic


@functools.lru_cache(maxsize=8)
def _admissibility_sample(d: int) -> Array:
    directions = sphere_directions(d, 100)
    radii = np.geomspace(1e-2, 1e2, 10)
    return (radii[:, None, None] * directions[None, :, :]).reshape(-1, d)


class MollifierProfile(str, Enum):
    """Radial bump profiles supported in ``|x| < eps``."""

    BUMP = "bump"
    POLYNOMIAL = "polynomial"


def _profile_values(profile: MollifierProfile, u: ArrayLike) -> Array:
    u = np.asarray(u, dtype=float)
    gap = 1.0 - u * u
    inside = gap > 0.0
    safe = np.where(inside, gap, 1.0)
    if profile is MollifierProfile.BUMP:
        return np.where(inside, np.exp(-1.0 / safe), 0.0)
    return np.where(inside, safe**4, 0.0)


def _unit_quad(function: Callable[[float], float]) -> float:
    value, _ = integrate.quad(function, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return value


@functools.lru_cache(maxsize=None)
def _profile_mass(profile: MollifierProfile, d: int) -> float:
    """``int_0^1 phi(u) u^{d-1} du`` for the unnormalized profile."""
    return _unit_quad(lambda u: float(_profile_values(profile, u)) * u ** (d - 1))


@dataclass(frozen=True)
class Mollifier:
    """Radial unit-mass bump ``eta^eps`` supported in the ball of radius ``eps``."""

    eps: float
    profile: MollifierProfile = MollifierProfile.BUMP

    def __post_init__(self) -> None:
        if not (math.isfinite(self.eps) and self.eps > 0.0):
            raise ValueError(f"mollification radius must be positive, got {self.eps}")
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "profile", MollifierProfile(self.profile))

    def normalization(self, d: int) -> float:
        """Constant ``c`` with ``eta(x) = c eps^-d phi(|x| / eps)``."""
        return 1.0 / (_sphere_area(d) * _profile_mass(self.profile, d))

    def density(self, r: ArrayLike, d: int) -> Array:
        """``eta^eps`` as a function of the radius."""
        r = np.asarray(r, dtype=float)
        scale = self.normalization(d) * self.eps ** (-d)
        return scale * _profile_values(self.profile, r / self.eps)


def _spherical_mean(r: Array, rho: Array, d: int, s: float) -> Array:
    """Average of ``g_s(x - rho w)`` over unit vectors ``w``, with ``|x| = r``."""
    big = np.maximum(r, rho)
    ratio = (np.minimum(r, rho) / big) ** 2
    if s > 0:
        return big ** (-s) * special.hyp2f1(s / 2, (s - d + 2) / 2, d / 2, ratio)
    if d == 2:
        return -np.log(big)

    # -ln|z| is the derivative at s = 0 of |z|^-s; Richardson-extrapolated
    # central differences keep the error near rounding level.
    def riesz(h: float) -> Array:
        return big ** (-h) * special.hyp2f1(h / 2, (h - d + 2) / 2, d / 2, ratio)

    step = 1e-3
    coarse = (riesz(step) - riesz(-step)) / (2 * step)
    fine = (riesz(step / 2) - riesz(-step / 2)) / step
    return (4 * fine - coarse) / 3


@functools.lru_cache(maxsize=1)
def _unit_gauss_legendre() -> tuple[Array, Array]:
    nodes, weights = np.polynomial.legendre.leggauss(_QUADRATURE_NODES)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _mollified_values(
    d: int, s: float, mollifier: Mollifier, radii: Array
) -> Array:
    """``g^eps`` at the given radii by split Gauss-Legendre panels.

    The panel ``[0, min(r, eps)]`` uses ``rho = a (1 - v^2)`` and the panel
    ``[r, eps]`` uses ``rho = r exp(ln(eps / r) v^2)``; both cluster nodes at
    ``rho = r`` where the spherical mean has a cusp. Values are divided by the
    quadrature mass of the same rule.
    """
    eps = mollifier.eps
    v, w = _unit_gauss_legendre()
    r = radii[:, None]

    inner = np.minimum(r, eps)
    rho_in = inner * (1.0 - v**2)
    weight_in = (
        w * 2.0 * inner * v
        * _profile_values(mollifier.profile, rho_in / eps)
        * rho_in ** (d - 1)
    )

    span = np.log(np.maximum(eps / r, 1.0))
    rho_out = r * np.exp(span * v**2)
    weight_out = (
        w * 2.0 * span * v * rho_out
        * _profile_values(mollifier.profile, rho_out / eps)
        * rho_out ** (d - 1)
    )

    mass = weight_in.sum(axis=1) + weight_out.sum(axis=1)
    total = (weight_in * _spherical_mean(r, rho_in, d, s)).sum(axis=1) + (
        weight_out * _spherical_mean(r, rho_out, d, s)
    ).sum(axis=1)
    return total / mass


def _center_value(d: int, s: float, mollifier: Mollifier) -> float:
    """``g^eps(0) = int g eta^eps`` by adaptive quadrature."""
    profile = mollifier.profile
    mass = _profile_mass(profile, d)
    if s == 0:
        moment = _unit_quad(
            lambda u: -float(_profile_values(profile, u)) * u ** (d - 1) * math.log(u)
            if u > 0
            else 0.0
        )
        return -math.log(mollifier.eps) + moment / mass
    moment = _unit_quad(
        lambda u: float(_profile_values(profile, u)) * u ** (d - 1 - s)
    )
    return mollifier.eps ** (-s) * moment / mass


class RadialTable:
    """Tabulated ``g^eps`` and ``h^eps(r) = (g^eps)'(r) / r`` on a geometric grid.

    Radii below ``r_min = 1e-3 eps`` use the quadratic expansion around the
    origin; radii above ``r_max`` use the raw kernel, which agrees with the
    mollified one away from the support for the logarithmic kernel and up to
    ``O(eps^2 / r^2)`` for Riesz kernels.
    """

    def __init__(self, kernel: RieszKernel, mollifier: Mollifier, r_max: float):
        if r_max <= 2.0 * mollifier.eps:
            raise ValueError(
                f"table radius {r_max} must exceed twice eps={mollifier.eps}"
            )
        self.d = kernel.d
        self.s = kernel.s
        self.eps = mollifier.eps
        self.r_min = mollifier.eps * TABLE_INNER_FACTOR
        self.r_max = float(r_max)
        self.nodes = np.linspace(math.log(self.r_min), math.log(r_max), TABLE_NODES)
        radii = np.exp(self.nodes)
        self.center = _center_value(kernel.d, kernel.s, mollifier)
        self._values = CubicSpline(self.nodes, _mollified_values(kernel.d, kernel.s, mollifier, radii))
        self._slopes = CubicSpline(self.nodes, self._values(self.nodes, 1) / radii**2)
        self.h_min = float(self._slopes(self.nodes[0]))
        logger.debug(
            f"radial table d={self.d} s={self.s} eps={self.eps:.3g} "
            f"r in [{self.r_min:.3g}, {self.r_max:.3g}]"
        )

    @property
    def coefficients(self) -> Array:
        """Piecewise-cubic coefficients of ``h^eps`` in ``ln r`` (highest power first)."""
        return np.ascontiguousarray(self._slopes.c)

    def value(self, r: ArrayLike) -> Array:
        shape = np.shape(r)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        small = r < self.r_min
        large = r > self.r_max
        middle = ~(small | large)
        out[small] = self.center + 0.5 * self.h_min * r[small] ** 2
        out[large] = _riesz_values(r[large], self.s)
        out[middle] = self._values(np.log(r[middle]))
        return out.reshape(shape)

    def slope(self, r: ArrayLike) -> Array:
        shape = np.shape(r)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        small = r < self.r_min
        large = r > self.r_max
        middle = ~(small | large)
        out[small] = self.h_min
        out[large] = _riesz_slope(r[large], self.s)
        out[middle] = self._slopes(np.log(r[middle]))
        return out.reshape(shape)


@functools.lru_cache(maxsize=16)
def radial_table(
    kernel: RieszKernel, mollifier: Mollifier, r_max: float | None = None
) -> RadialTable:
    """Cached radial table; ``r_max`` defaults to ``max(64, 100 eps)``."""
    if r_max is None:
        r_max = max(DEFAULT_TABLE_RADIUS, 100.0 * mollifier.eps)
    return RadialTable(kernel, mollifier, r_max)


def potential_eval(kernel: RieszKernel, x: ArrayLike) -> Array | float:
    """``g_s(x)``: ``-ln|x|`` for ``s = 0`` and ``|x|^-s`` otherwise."""
    return kernel.potential(x)


def kernel_force(kernel: RieszKernel, x: ArrayLike) -> Array:
    """``K(x) = M grad g_s(x)``; raises SingularityError at the origin."""
    return kernel.force(x)


def mollified_kernel(
    kernel: RieszKernel,
    mollifier: Mollifier,
    x: ArrayLike,
    *,
    r_max: float | None = None,
) -> tuple[Array | float, Array]:
    """``(g^eps(x), K^eps(x))`` from the cached radial table; total on R^d."""
    points, single = _points(x, kernel.d)
    table = radial_table(kernel, mollifier, r_max)
    r = np.linalg.norm(points, axis=-1)
    values = table.value(r)
    forces = (points * table.slope(r)[..., None]) @ kernel.matrix.T
    if single:
        return float(values), forces
    return values, forces


class ConfinementKind(str, Enum):
    QUADRATIC = "quadratic"
    DOUBLE_WELL = "double_well"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ConfinementPotential:
    """Confinement ``U`` with its gradient and Hessian.

    ``double_well(a, b)`` is ``U(x) = a |x|^4 / 4 - b |x|^2 / 2``. Custom
    callables act on arrays of shape ``(n, d)`` and return ``(n,)``,
    ``(n, d)`` and ``(n, d, d)`` arrays.
    """

    kind: ConfinementKind
    kappa_u: float | None = None
    radius: float | None = None
    a: float = 0.0
    b: float = 0.0
    functions: tuple[Callable, Callable, Callable] | None = field(
        default=None, compare=False
    )

    @classmethod
    def quadratic(cls, kappa_u: float) -> "ConfinementPotential":
        if kappa_u < 0:
            raise ValueError(f"kappa_u must be nonnegative, got {kappa_u}")
        return cls(ConfinementKind.QUADRATIC, kappa_u=float(kappa_u), radius=0.0)

    @classmethod
    def double_well(
        cls,
        a: float,
        b: float,
        *,
        kappa_u: float | None = None,
        radius: float | None = None,
    ) -> "ConfinementPotential":
        if a <= 0:
            raise ValueError(f"quartic coefficient must be positive, got {a}")
        return cls(
            ConfinementKind.DOUBLE_WELL, kappa_u, radius, a=float(a), b=float(b)
        )

    @classmethod
    def custom(
        cls,
        potential: Callable[[Array], Array],
        gradient: Callable[[Array], Array],
        hessian: Callable[[Array], Array],
        *,
        kappa_u: float | None = None,
        radius: float | None = None,
    ) -> "ConfinementPotential":
        return cls(
            ConfinementKind.CUSTOM,
            kappa_u,
            radius,
            functions=(potential, gradient, hessian),
        )

    def _triple(self, x: Array) -> tuple[Array, Array, Array]:
        d = x.shape[-1]
        sq = np.einsum("...i,...i->...", x, x)
        eye = np.broadcast_to(np.eye(d), x.shape + (d,))
        outer = x[..., :, None] * x[..., None, :]
        if self.kind is ConfinementKind.QUADRATIC:
            k = self.kappa_u
            return 0.5 * k * sq, k * x, k * eye
        if self.kind is ConfinementKind.DOUBLE_WELL:
            a, b = self.a, self.b
            radial = (a * sq - b)[..., None]
            value = 0.25 * a * sq**2 - 0.5 * b * sq
            return value, radial * x, radial[..., None] * eye + 2.0 * a * outer
        potential, gradient, hessian = self.functions
        return (
            np.asarray(potential(x), dtype=float),
            np.asarray(gradient(x), dtype=float),
            np.asarray(hessian(x), dtype=float),
        )

    def evaluate(self, x: ArrayLike) -> tuple[Array | float, Array, Array]:
        points = np.asarray(x, dtype=float)
        single = points.ndim == 1
        batch = points[None, :] if single else points
        value, gradient, hessian = self._triple(batch)
        if single:
            return float(value[0]), gradient[0], hessian[0]
        return value, gradient, hessian

    def gradient(self, x: Array) -> Array:
        """``grad U`` for points of shape ``(n, d)``."""
        if self.kind is ConfinementKind.QUADRATIC:
            return self.kappa_u * x
        if self.kind is ConfinementKind.DOUBLE_WELL:
            sq = np.einsum("...i,...i->...", x, x)
            return (self.a * sq - self.b)[..., None] * x
        return np.asarray(self.functions[1](x), dtype=float)

    def hessian_bound(self, half_width: float, d: int) -> float:
        """Sup of the spectral norm of ``Hess U`` over the box ``[-L, L]^d``."""
        if self.kind is ConfinementKind.QUADRATIC:
            return float(self.kappa_u)
        if self.kind is ConfinementKind.DOUBLE_WELL:
            r2 = d * half_width**2
            return max(abs(3 * self.a * r2 - self.b), abs(self.b))
        sample = box_points(d, 4096, half_width)
        hessians = self._triple(sample)[2]
        return float(np.linalg.norm(hessians, ord=2, axis=(1, 2)).max())


def confinement_eval(
    potential: ConfinementPotential, x: ArrayLike
) -> tuple[Array | float, Array, Array]:
    """``(U(x), grad U(x), Hess U(x))``."""
    return potential.evaluate(x)


class DriftKind(str, Enum):
    EXPLICIT = "explicit"
    MCKEAN = "mckean"
    LOG_RIESZ = "log_riesz"


@dataclass(frozen=True)
class DriftSpec:
    """A time-dependent drift together with its diffusion coefficient.

    The explicit variant holds ``function(t, x)``; the McKean variant holds
    ``base(x)`` and the pair drift ``pair(x, y)``, both broadcasting over
    leading axes; the log/Riesz variant holds a kernel, an optional
    mollifier and a confinement, so that ``b(x, m) = K^eps * m (x) - grad U``.
    """

    kind: DriftKind
    sigma: float = 1.0
    function: Callable[[float, Array], Array] | None = field(
        default=None, compare=False
    )
    base: Callable[[Array], Array] | None = field(default=None, compare=False)
    pair: Callable[[Array, Array], Array] | None = field(default=None, compare=False)
    kernel: RieszKernel | None = None
    mollifier: Mollifier | None = None
    confinement: ConfinementPotential | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be finite and nonnegative, got {self.sigma}")
        required = {
            DriftKind.EXPLICIT: (self.function,),
            DriftKind.MCKEAN: (self.base, self.pair),
            DriftKind.LOG_RIESZ: (self.kernel, self.confinement),
        }[DriftKind(self.kind)]
        if any(part is None for part in required):
            raise ValueError(f"incomplete {self.kind} drift")

    @classmethod
    def explicit(
        cls, function: Callable[[float, Array], Array], sigma: float = 1.0
    ) -> "DriftSpec":
        return cls(DriftKind.EXPLICIT, sigma, function=function)

    @classmethod
    def mckean(
        cls,
        base: Callable[[Array], Array],
        pair: Callable[[Array, Array], Array],
        sigma: float = 1.0,
    ) -> "DriftSpec":
        return cls(DriftKind.MCKEAN, sigma, base=base, pair=pair)

    @classmethod
    def log_riesz(
        cls,
        kernel: RieszKernel,
        confinement: ConfinementPotential,
        mollifier: Mollifier | None = None,
        sigma: float = 1.0,
    ) -> "DriftSpec":
        return cls(
            DriftKind.LOG_RIESZ,
            sigma,
            kernel=kernel,
            mollifier=mollifier,
            confinement=confinement,
        )

    @property
    def needs_measure(self) -> bool:
        return self.kind is not DriftKind.EXPLICIT

    @property
    def dimension(self) -> int | None:
        return self.kernel.d if self.kernel is not None else None

    def pair_force(self, diff: Array, mollifier: Mollifier | None = None) -> Array:
        """Interaction ``K(x - y)`` (or ``b(x, y)``) for displacement arrays."""
        if self.kind is DriftKind.MCKEAN:
            raise TypeError("McKean pair drifts take (x, y), not displacements")
        mollifier = mollifier or self.mollifier
        if mollifier is None:
            return self.kernel.force(diff)
        return mollified_kernel(self.kernel, mollifier, diff)[1]

    def evaluate(
        self,
        t: float,
        x: ArrayLike,
        points: ArrayLike | None = None,
        weights: ArrayLike | None = None,
    ) -> Array:
        """Drift at ``x`` of shape ``(n, d)`` against the weighted measure ``points``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind is DriftKind.EXPLICIT:
            return np.asarray(self.function(t, x), dtype=float)
        if points is None:
            raise ValueError(f"{self.kind.value} drift needs a measure argument")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if weights is None:
            weights = np.full(len(points), 1.0 / len(points))
        weights = np.asarray(weights, dtype=float)
        interaction = np.zeros_like(x)
        for start in range(0, len(x), _CHUNK_ROWS):
            rows = slice(start, start + _CHUNK_ROWS)
            if self.kind is DriftKind.MCKEAN:
                terms = self.pair(x[rows, None, :], points[None, :, :])
            else:
                terms = self.pair_force(x[rows, None, :] - points[None, :, :])
            interaction[rows] = np.einsum("nmd,m->nd", terms, weights)
        if self.kind is DriftKind.MCKEAN:
            return np.asarray(self.base(x), dtype=float) + interaction
        return interaction - self.confinement.gradient(x)

    def freeze(
        self, points: ArrayLike, weights: ArrayLike | None = None
    ) -> "DriftSpec":
        """Explicit drift with the measure argument fixed to ``points``."""
        if not self.needs_measure:
            return self
        frozen_points = np.array(points, dtype=float)
        frozen_weights = None if weights is None else np.array(weights, dtype=float)

        def frozen(t: float, x: Array) -> Array:
            return self.evaluate(t, x, frozen_points, frozen_weights)

        return DriftSpec.explicit(frozen, self.sigma)

    def with_sigma(self, sigma: float) -> "DriftSpec":
        return DriftSpec(
            self.kind,
            sigma,
            function=self.function,
            base=self.base,
            pair=self.pair,
            kernel=self.kernel,
            mollifier=self.mollifier,
            confinement=self.confinement,
        )


def _explicit_only(drift: DriftSpec) -> None:
    if drift.needs_measure:
        raise ValueError(
            f"{drift.kind.value} drift needs a measure; freeze it first"
        )


def convexity_profile(
    drift: DriftSpec,
    radii: Sequence[float],
    *,
    d: int | None = None,
    base_points: int = 64,
    half_width: float = 3.0,
    t: float = 0.0,
) -> list[tuple[float, float]]:
    """Empirical ``kappa(r) = max (b(x) - b(y)).(x - y) / |x - y|^2`` at ``|x - y| = r``.

    Base points are Halton points of ``[-half_width, half_width]^d``; each is
    paired with its own low-discrepancy direction.
    """
    _explicit_only(drift)
    radii = [float(r) for r in radii]
    if not radii:
        raise EstimatorError("convexity_profile needs at least one radius")
    if any(r <= 0 for r in radii):
        raise ValueError("radii must be positive")
    d = d or drift.dimension or 1
    x = box_points(d, base_points, half_width)
    directions = sphere_directions(d, base_points)
    bx = drift.evaluate(t, x)
    profile = []
    for r in radii:
        y = x + r * directions
        increments = np.einsum("nd,nd->n", bx - drift.evaluate(t, y), x - y)
        profile.append((r, float(increments.max() / r**2)))
    return profile


@dataclass(frozen=True)
class CurvatureConstants:
    """``(rho, L, R)``: contraction outside the ball of radius R, curvature L."""

    rho: float
    L: float
    R: float


def curvature_constants(
    drift: DriftSpec,
    rho: float,
    *,
    d: int = 1,
    half_width: float = 3.0,
    radii: Sequence[float] | None = None,
    base_points: int = 1024,
    t: float = 0.0,
) -> CurvatureConstants:
    """Estimate ``L`` and the smallest sampled ``R`` for a given ``rho``.

    ``L = max(0, max_r kappa(r))`` and ``R`` is the smallest radius on a
    uniform grid such that every sampled pair with ``|x| >= R`` satisfies
    ``(b(x) - b(y)).(x - y) <= -rho |x - y|^2``.
    """
    _explicit_only(drift)
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if radii is None:
        radii = np.geomspace(1e-3, 4.0 * half_width, 64)
    radii = np.asarray(radii, dtype=float)
    x = box_points(d, base_points, half_width)
    if d == 1:
        x = np.linspace(-half_width, half_width, base_points)[:, None]
    directions = sphere_directions(d, 2 * d if d > 1 else 2)
    bx = drift.evaluate(t, x)
    norms = np.linalg.norm(x, axis=1)
    worst = np.full(len(x), -np.inf)
    for direction in directions:
        for r in radii:
            y = x + r * direction
            ratio = np.einsum("nd,nd->n", bx - drift.evaluate(t, y), x - y) / r**2
            worst = np.maximum(worst, ratio)
    curvature = max(0.0, float(worst.max()))
    candidates = np.linspace(0.0, half_width, 301)
    radius = half_width
    for candidate in candidates:
        if np.all(worst[norms >= candidate] <= -rho):
            radius = float(candidate)
            break
    else:
        logger.warning(
            f"no contraction radius for rho={rho} inside the sampled box; "
            f"using R={half_width}"
        )
    return CurvatureConstants(rho=float(rho), L=curvature, R=radius)


def drift_bound(
    drift: DriftSpec, radius: float, *, d: int = 1, t: float = 0.0
) -> float:
    """``K = max(0, sup_{|x| <= radius} -x.b(x))`` over a radial sample."""
    _explicit_only(drift)
    fractions = np.linspace(0.0, 1.0, 257)
    directions = sphere_directions(d, 64 if d > 1 else 2)
    x = (radius * fractions[:, None, None] * directions[None, :, :]).reshape(-1, d)
    values = -np.einsum("nd,nd->n", x, drift.evaluate(t, x))
    return max(0.0, float(values.max()))
