"""
Finite-volume Fokker-Planck solver on uniform boxes in one and two dimensions.

Densities live on cell centers of ``[-L, L]^d`` with ``n`` cells per axis.
The flow ``dm/dt = div(sigma^2 grad m - b m)`` is advanced with explicit,
conservative face fluxes and zero-flux boundary faces. Interaction drifts
``K^eps * m`` are computed by zero-padded FFT convolution with the kernel
sampled on lattice offsets, so that spectral and direct summation give the
same discrete convolution.

Examples
--------
>>> m0 = GridDensity.gaussian(d=1, n=256, half_width=8.0, variance=0.5)
>>> drift = DriftSpec.explicit(lambda t, x: -x, sigma=1.0)
>>> run = evolve(m0, drift, PdeConfig(dt=1e-4, T=0.5))
>>> round(run.final.mass, 12)
1.0
"""

import functools
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import fft, special
from scipy.ndimage import gaussian_filter

from meanfieldlab import streams
from meanfieldlab.errors import (
    BoxTooSmallError,
    CflError,
    InstabilityError,
    MaskError,
    MassConservationError,
    UnderResolvedKernelError,
)
from meanfieldlab.kernels import (
    ConfinementKind,
    ConfinementPotential,
    DriftKind,
    DriftSpec,
    Mollifier,
    MollifierProfile,
    RieszKernel,
    mollified_kernel,
    radial_table,
)
from meanfieldlab.sde import ParticleEnsemble
from meanfieldlab.utils.logger import logger

Array = NDArray[np.float64]

DENSITY_FLOOR = 1e-300
MASK_MASS = 0.9999
NEGATIVITY_TOLERANCE = 1e-12
CFL_SAFETY = 0.4
_CHUNK_ROWS = 256


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and n & (n - 1) == 0


def cell_centers(n: int, half_width: float) -> Array:
    """Cell centers of ``[-L, L]`` with ``n`` cells, exactly symmetric about 0."""
    dx = 2.0 * half_width / n
    half = (np.arange(n // 2) + 0.5) * dx
    return np.concatenate([-half[::-1], half])


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Density values on the cell centers of a square box.

    Parameters
    ----------
    values : array_like
        Shape ``(n,)`` or ``(n, n)`` with ``n`` a power of two.
    half_width : float
        The box is ``[-half_width, half_width]^d``.
    t : float, default 0.0
        Time label.
    """

    values: Array
    half_width: float
    t: float = 0.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim not in (1, 2):
            raise ValueError(f"grids are 1-D or 2-D, got shape {values.shape}")
        if len(set(values.shape)) != 1 or not _is_power_of_two(values.shape[0]):
            raise ValueError(
                f"grid must be square with a power-of-two side, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "half_width", float(self.half_width))
        object.__setattr__(self, "t", float(self.t))

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def axis(self) -> Array:
        return cell_centers(self.n, self.half_width)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def mesh(self) -> tuple[Array, ...]:
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    def points(self) -> Array:
        """Cell centers as an ``(n^d, d)`` array in row-major order."""
        return np.stack([c.ravel() for c in self.mesh()], axis=-1)

    def with_values(self, values: ArrayLike, t: float | None = None) -> "GridDensity":
        return GridDensity(values, self.half_width, self.t if t is None else t)

    def normalized(self) -> "GridDensity":
        return self.with_values(self.values / self.mass)

    @classmethod
    def from_function(
        cls,
        function: Callable[[Array], Array],
        *,
        d: int,
        n: int,
        half_width: float,
        t: float = 0.0,
        normalize: bool = True,
    ) -> "GridDensity":
        """Sample ``function`` (acting on ``(n^d, d)`` points) at the cell centers."""
        axis = cell_centers(n, half_width)
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        points = np.stack([c.ravel() for c in mesh], axis=-1)
        values = np.asarray(function(points), dtype=float).reshape((n,) * d)
        grid = cls(values, half_width, t)
        return grid.normalized() if normalize else grid

    @classmethod
    def gaussian(
        cls,
        *,
        d: int,
        n: int,
        half_width: float,
        mean: ArrayLike = 0.0,
        variance: float = 1.0,
        t: float = 0.0,
    ) -> "GridDensity":
        """``N(mean, variance I)`` normalized to unit discrete mass."""
        center = np.broadcast_to(np.asarray(mean, dtype=float), (d,))

        def density(points: Array) -> Array:
            return np.exp(-np.sum((points - center) ** 2, axis=1) / (2.0 * variance))

        return cls.from_function(density, d=d, n=n, half_width=half_width, t=t)

    @classmethod
    def from_samples(
        cls,
        samples: ArrayLike,
        *,
        n: int,
        half_width: float,
        bandwidth: float | None = None,
        t: float = 0.0,
    ) -> "GridDensity":
        """Histogram of ``samples`` smoothed by a Gaussian of the given bandwidth.

        The bandwidth defaults to Scott's rule. Samples outside the box are
        dropped with a warning.
        """
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        count, d = samples.shape
        edges = np.linspace(-half_width, half_width, n + 1)
        histogram, _ = np.histogramdd(samples, bins=[edges] * d)
        kept = histogram.sum()
        if kept < count:
            logger.warning(
                f"{count - int(kept)} of {count} samples fall outside the box "
                f"[-{half_width}, {half_width}]^{d}"
            )
        if kept == 0:
            raise MaskError("no samples inside the box")
        if bandwidth is None:
            spread = float(np.mean(np.std(samples, axis=0, ddof=1)))
            bandwidth = spread * count ** (-1.0 / (d + 4))
        dx = 2.0 * half_width / n
        smoothed = gaussian_filter(histogram, sigma=bandwidth / dx, mode="constant")
        return cls(smoothed, half_width, t).normalized()

    def rescaled(self, factor: float) -> "GridDensity":
        """``m_lambda(x) = lambda^d m(lambda x)`` on the box of half-width ``L / lambda``."""
        if factor <= 0:
            raise ValueError(f"scale factor must be positive, got {factor}")
        return GridDensity(
            self.values * factor**self.d, self.half_width / factor, self.t
        )

    def rotated(self, quarter_turns: int = 1) -> "GridDensity":
        if self.d != 2:
            raise ValueError("rotation needs a 2-D grid")
        return self.with_values(np.rot90(self.values, quarter_turns))

    def boundary_mass_fraction(self) -> float:
        """Share of the mass held by the outermost ring of cells."""
        interior = self.values[(slice(1, -1),) * self.d].sum()
        total = self.values.sum()
        return float((total - interior) / total) if total > 0 else 0.0

    def check_box(self, tolerance: float = 1e-6) -> None:
        fraction = self.boundary_mass_fraction()
        if fraction >= tolerance:
            raise BoxTooSmallError(
                f"boundary cells carry {fraction:.3e} of the mass "
                f"(tolerance {tolerance:.1e}); enlarge half_width"
            )

    def lp_norm(self, p: float) -> float:
        if math.isinf(p):
            return float(np.abs(self.values).max())
        return float((np.sum(np.abs(self.values) ** p) * self.cell_volume) ** (1.0 / p))

    def second_moment(self) -> Array:
        """Per-axis second moment ``int x_k^2 m / int m``."""
        weights = self.values / self.values.sum()
        return np.array([float(np.sum(c**2 * weights)) for c in self.mesh()])

    def mean(self) -> Array:
        weights = self.values / self.values.sum()
        return np.array([float(np.sum(c * weights)) for c in self.mesh()])


def total_variation(m: GridDensity, other: GridDensity) -> float:
    """``sum |m - other| dx^d``."""
    _check_shared_grid(m, other)
    return float(np.abs(m.values - other.values).sum() * m.cell_volume)


def _check_shared_grid(m: GridDensity, other: GridDensity) -> None:
    if m.values.shape != other.values.shape or not math.isclose(
        m.half_width, other.half_width, rel_tol=1e-14
    ):
        raise ValueError("densities live on different grids")


class ConvolutionMode(str, Enum):
    SPECTRAL = "spectral"
    DIRECT = "direct"


class KernelSampling(str, Enum):
    """How the kernel is placed on lattice offsets.

    ``lattice`` takes centered differences of the sampled potential, which
    keeps the discrete divergence of ``K`` zero for anti-symmetric ``M``;
    ``analytic`` samples ``K^eps`` itself.
    """

    LATTICE = "lattice"
    ANALYTIC = "analytic"


class LatticeConvolver:
    """``K^eps * m`` for 2-D grids of a fixed size.

    Outputs cover the grid extended by one ring of cells (``n + 2`` per
    axis); :meth:`convolve` returns the interior.
    """

    def __init__(
        self,
        kernel: RieszKernel,
        mollifier: Mollifier,
        n: int,
        half_width: float,
        *,
        mode: ConvolutionMode = ConvolutionMode.SPECTRAL,
        sampling: KernelSampling = KernelSampling.LATTICE,
        workers: int | None = None,
    ):
        if kernel.d != 2:
            raise ValueError(f"grid convolution supports d = 2 kernels, got d = {kernel.d}")
        self.kernel = kernel
        self.mollifier = mollifier
        self.n = n
        self.half_width = float(half_width)
        self.dx = 2.0 * half_width / n
        if mollifier.eps < self.dx:
            raise UnderResolvedKernelError(
                f"eps={mollifier.eps:.4g} is below the grid spacing {self.dx:.4g}"
            )
        self.mode = ConvolutionMode(mode)
        self.sampling = KernelSampling(sampling)
        self.workers = workers
        self.ring = n + 2
        self.fft_size = fft.next_fast_len(2 * self.ring - 1, real=True)
        self._lattice = self._sample_kernel()
        self._spectra = self._kernel_spectra() if self.mode is ConvolutionMode.SPECTRAL else None
        logger.debug(
            f"convolver n={n} dx={self.dx:.4g} eps={mollifier.eps:.4g} "
            f"fft={self.fft_size} mode={self.mode.value} sampling={self.sampling.value}"
        )

    def _sample_kernel(self) -> Array:
        """``K`` at offsets ``-(n+1) .. (n+1)`` per axis, shape ``(2P-1, 2P-1, 2)``."""
        reach = self.ring
        r_max = max(64.0, 1.5 * (self.n + 2) * self.dx * math.sqrt(2.0))
        table = radial_table(self.kernel, self.mollifier, r_max)
        if self.sampling is KernelSampling.ANALYTIC:
            offsets = np.arange(-(reach - 1), reach) * self.dx
            a, b = np.meshgrid(offsets, offsets, indexing="ij")
            points = np.stack([a, b], axis=-1)
            return mollified_kernel(self.kernel, self.mollifier, points, r_max=r_max)[1]
        offsets = np.arange(-reach, reach + 1) * self.dx
        a, b = np.meshgrid(offsets, offsets, indexing="ij")
        potential = table.value(np.hypot(a, b))
        gradient = np.stack(
            [
                (potential[2:, 1:-1] - potential[:-2, 1:-1]) / (2.0 * self.dx),
                (potential[1:-1, 2:] - potential[1:-1, :-2]) / (2.0 * self.dx),
            ],
            axis=-1,
        )
        return gradient @ self.kernel.matrix.T

    def _circular_index(self) -> Array:
        return np.arange(-(self.ring - 1), self.ring) % self.fft_size

    def _kernel_spectra(self) -> list[Array]:
        size = self.fft_size
        index = self._circular_index()
        spectra = []
        for component in range(2):
            padded = np.zeros((size, size))
            padded[np.ix_(index, index)] = self._lattice[..., component]
            spectra.append(fft.rfftn(padded, workers=self.workers))
        return spectra

    def lattice_kernel(self, offsets: ArrayLike) -> Array:
        """Sampled ``K`` at integer lattice offsets of shape ``(..., 2)``."""
        offsets = np.asarray(offsets, dtype=np.int64)
        shifted = offsets + (self.ring - 1)
        if np.any(shifted < 0) or np.any(shifted >= 2 * self.ring - 1):
            raise ValueError(f"lattice offsets must lie within +-{self.ring - 1}")
        return self._lattice[shifted[..., 0], shifted[..., 1]]

    def _check(self, m: GridDensity) -> None:
        if m.d != 2 or m.n != self.n or not math.isclose(
            m.half_width, self.half_width, rel_tol=1e-14
        ):
            raise ValueError(
                f"convolver built for {self.n}^2 cells on half-width "
                f"{self.half_width}, got {m.values.shape} on {m.half_width}"
            )

    def convolve_extended(self, m: GridDensity | Array) -> Array:
        """``K * m`` on the grid plus one ring, shape ``(n + 2, n + 2, 2)``."""
        values = m.values if isinstance(m, GridDensity) else np.asarray(m, dtype=float)
        if isinstance(m, GridDensity):
            self._check(m)
        if self.mode is ConvolutionMode.DIRECT:
            return self._convolve_direct(values)
        size = self.fft_size
        padded = np.zeros((size, size))
        padded[: self.n, : self.n] = values
        spectrum = fft.rfftn(padded, workers=self.workers)
        index = np.arange(-1, self.n + 1) % size
        out = np.empty((self.n + 2, self.n + 2, 2))
        for component, kernel_spectrum in enumerate(self._spectra):
            full = fft.irfftn(
                spectrum * kernel_spectrum, s=(size, size), workers=self.workers
            )
            out[..., component] = full[np.ix_(index, index)]
        return out * self.dx**2

    def _convolve_direct(self, values: Array) -> Array:
        sources = np.argwhere(values != 0.0)
        weights = values[sources[:, 0], sources[:, 1]] * self.dx**2
        targets = np.stack(
            np.meshgrid(np.arange(-1, self.n + 1), np.arange(-1, self.n + 1), indexing="ij"),
            axis=-1,
        ).reshape(-1, 2)
        out = np.zeros((len(targets), 2))
        for start in range(0, len(targets), _CHUNK_ROWS):
            rows = targets[start : start + _CHUNK_ROWS]
            offsets = rows[:, None, :] - sources[None, :, :]
            out[start : start + _CHUNK_ROWS] = np.einsum(
                "tsk,s->tk", self.lattice_kernel(offsets), weights
            )
        return out.reshape(self.n + 2, self.n + 2, 2)

    def convolve(self, m: GridDensity | Array) -> Array:
        """``K * m`` at the grid cells, shape ``(n, n, 2)``."""
        return self.convolve_extended(m)[1:-1, 1:-1]


@functools.lru_cache(maxsize=8)
def lattice_convolver(
    kernel: RieszKernel,
    mollifier: Mollifier,
    n: int,
    half_width: float,
    mode: ConvolutionMode = ConvolutionMode.SPECTRAL,
    sampling: KernelSampling = KernelSampling.LATTICE,
    workers: int | None = None,
) -> LatticeConvolver:
    """Cached :class:`LatticeConvolver`."""
    return LatticeConvolver(
        kernel, mollifier, n, half_width, mode=mode, sampling=sampling, workers=workers
    )


def convolve_field(
    m: GridDensity,
    kernel: RieszKernel,
    mollifier: Mollifier,
    *,
    mode: ConvolutionMode = ConvolutionMode.SPECTRAL,
    sampling: KernelSampling = KernelSampling.LATTICE,
    workers: int | None = None,
) -> Array:
    """``K^eps * m`` on the grid of ``m``, shape ``(n, n, 2)``.

    Raises
    ------
    UnderResolvedKernelError
        ``mollifier.eps`` is smaller than the grid spacing.
    """
    convolver = lattice_convolver(
        kernel, mollifier, m.n, m.half_width, ConvolutionMode(mode),
        KernelSampling(sampling), workers,
    )
    return convolver.convolve(m)


class FluxScheme(str, Enum):
    CENTRAL = "central"
    UPWIND_HYBRID = "upwind_hybrid"


def _bernoulli(z: Array) -> Array:
    # B(z) = z / (exp(z) - 1)
    return 1.0 / special.exprel(z)


def _axis_divergence(
    values: Array, velocity: Array, sigma: float, dx: float, flux: FluxScheme, axis: int
) -> Array:
    m = np.moveaxis(values, axis, 0)
    v = np.moveaxis(velocity, axis, 0)
    face_v = 0.5 * (v[:-1] + v[1:])
    left, right = m[:-1], m[1:]
    diffusion = sigma * sigma
    if diffusion == 0.0:
        faces = np.maximum(face_v, 0.0) * left + np.minimum(face_v, 0.0) * right
    elif flux is FluxScheme.CENTRAL:
        faces = face_v * 0.5 * (left + right) - diffusion * (right - left) / dx
    else:
        z = face_v * dx / diffusion
        faces = diffusion / dx * (_bernoulli(-z) * left - _bernoulli(z) * right)
    zero = np.zeros((1,) + faces.shape[1:])
    faces = np.concatenate([zero, faces, zero])
    return np.moveaxis((faces[1:] - faces[:-1]) / dx, 0, axis)


def fp_step(
    m: GridDensity,
    drift_field: Array,
    sigma: float,
    dt: float,
    flux: FluxScheme = FluxScheme.UPWIND_HYBRID,
) -> GridDensity:
    """One explicit finite-volume step of ``dm/dt = div(sigma^2 grad m - b m)``.

    ``drift_field`` has shape ``m.values.shape + (d,)``; the boundary faces
    carry no flux, so the update conserves mass up to rounding.

    Raises
    ------
    InstabilityError
        A value dropped below ``-1e-12``.
    """
    field_ = np.asarray(drift_field, dtype=float).reshape(m.values.shape + (m.d,))
    flux = FluxScheme(flux)
    divergence = sum(
        _axis_divergence(m.values, field_[..., k], sigma, m.dx, flux, k)
        for k in range(m.d)
    )
    values = m.values - dt * divergence
    lowest = float(values.min())
    if lowest < -NEGATIVITY_TOLERANCE:
        bound = cfl_bound(m, sigma, float(np.abs(field_).max()))
        raise InstabilityError(
            f"density reached {lowest:.3e} at t={m.t + dt:.6g}; "
            f"dt={dt:.3e} against the CFL bound {bound:.3e}"
        )
    return m.with_values(values, m.t + dt)


def cfl_bound(m: GridDensity, sigma: float, max_drift: float) -> float:
    """``0.4 min(dx^2 / (2 sigma^2 d), dx / max|b|)``."""
    diffusive = m.dx**2 / (2.0 * sigma**2 * m.d) if sigma > 0 else math.inf
    advective = m.dx / max_drift if max_drift > 0 else math.inf
    return CFL_SAFETY * min(diffusive, advective)


@dataclass(frozen=True)
class PdeConfig:
    """Options of the grid solver.

    ``eps`` is the mollification radius of interaction kernels; it must be at
    least the grid spacing. ``sigma`` overrides the drift's own diffusion
    coefficient when set.
    """

    dt: float
    T: float
    eps: float | None = None
    convolution: ConvolutionMode = ConvolutionMode.SPECTRAL
    flux: FluxScheme = FluxScheme.UPWIND_HYBRID
    sigma: float | None = None
    sampling: KernelSampling = KernelSampling.LATTICE
    mass_tolerance: float = 1e-8
    workers: int | None = None

    def __post_init__(self) -> None:
        if not (self.dt > 0 and self.T >= 0):
            raise ValueError(f"need dt > 0 and T >= 0, got dt={self.dt}, T={self.T}")
        if self.eps is not None and self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        object.__setattr__(self, "convolution", ConvolutionMode(self.convolution))
        object.__setattr__(self, "flux", FluxScheme(self.flux))
        object.__setattr__(self, "sampling", KernelSampling(self.sampling))

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


def _grid_mollifier(spec: DriftSpec, m: GridDensity, eps: float | None) -> Mollifier:
    if eps is not None:
        profile = spec.mollifier.profile if spec.mollifier else MollifierProfile.BUMP
        return Mollifier(eps, profile)
    if spec.mollifier is not None:
        return spec.mollifier
    return Mollifier(2.0 * m.dx)


def grid_drift(
    spec: DriftSpec,
    m: GridDensity,
    t: float | None = None,
    *,
    convolver: LatticeConvolver | None = None,
    eps: float | None = None,
) -> Array:
    """Drift field of ``spec`` against the grid measure ``m``, shape ``(n,)*d + (d,)``."""
    t = m.t if t is None else t
    points = m.points()
    shape = m.values.shape + (m.d,)
    if spec.kind is DriftKind.LOG_RIESZ:
        if convolver is None:
            convolver = lattice_convolver(
                spec.kernel, _grid_mollifier(spec, m, eps), m.n, m.half_width
            )
        confinement = spec.confinement.gradient(points).reshape(shape)
        return convolver.convolve(m) - confinement
    weights = (m.values * m.cell_volume).ravel()
    support = weights > 0.0
    values = spec.evaluate(t, points, points[support], weights[support])
    return values.reshape(shape)


@dataclass
class GridRun:
    final: GridDensity
    snapshots: list[GridDensity]
    records: list[dict[str, float]]
    events: list[dict[str, float | int | str]] = field(default_factory=list)


def _probe_steps(probes: Sequence[float] | None, config: PdeConfig) -> set[int]:
    if probes is None:
        return {0, config.steps}
    return {min(config.steps, int(round(p / config.dt))) for p in probes}


def evolve(
    m0: GridDensity,
    drift: DriftSpec | Callable[[GridDensity], Array],
    config: PdeConfig,
    probes: Sequence[float] | None = None,
    *,
    on_probe: Callable[[GridDensity], dict[str, float]] | None = None,
    keep_snapshots: bool = True,
) -> GridRun:
    """Explicit flow of ``m0`` to ``config.T`` with probes at the given times.

    ``drift`` is a DriftSpec (explicit, McKean or log/Riesz) or a callable
    returning the drift field of a density.

    Raises
    ------
    CflError
        ``config.dt`` exceeds the explicit stability bound at the start.
    MassConservationError
        Mass drifted by more than ``config.mass_tolerance``.
    """
    if isinstance(drift, DriftSpec):
        spec = drift if config.sigma is None else drift.with_sigma(config.sigma)
        convolver = None
        if spec.kind is DriftKind.LOG_RIESZ:
            convolver = lattice_convolver(
                spec.kernel,
                _grid_mollifier(spec, m0, config.eps),
                m0.n,
                m0.half_width,
                config.convolution,
                config.sampling,
                config.workers,
            )
        sigma = spec.sigma

        def field_of(m: GridDensity) -> Array:
            return grid_drift(spec, m, convolver=convolver)

    else:
        if config.sigma is None:
            raise ValueError("callable drifts need config.sigma")
        sigma = config.sigma
        field_of = drift

    initial_field = field_of(m0)
    bound = cfl_bound(m0, sigma, float(np.abs(initial_field).max()))
    if config.dt > bound:
        raise CflError(config.dt, bound)
    if m0.boundary_mass_fraction() >= 1e-6:
        logger.warning(
            f"initial boundary mass {m0.boundary_mass_fraction():.2e} exceeds 1e-6"
        )
    logger.info(
        f"grid flow d={m0.d} n={m0.n} dx={m0.dx:.4g} dt={config.dt:.2e} "
        f"steps={config.steps} (CFL bound {bound:.2e})"
    )

    probe_steps = _probe_steps(probes, config)
    mass0 = m0.mass
    snapshots: list[GridDensity] = []
    records: list[dict[str, float]] = []

    def probe(m: GridDensity) -> None:
        drift_mass = abs(m.mass - mass0)
        if drift_mass > config.mass_tolerance * max(mass0, 1.0):
            raise MassConservationError(
                f"mass changed by {drift_mass:.3e} by t={m.t:.6g}"
            )
        record = {
            "t": m.t,
            "mass": m.mass,
            "min_value": float(m.values.min()),
            "linf": m.lp_norm(math.inf),
            "l2": m.lp_norm(2.0),
            "boundary_mass": m.boundary_mass_fraction(),
        }
        if on_probe is not None:
            record.update(on_probe(m))
        records.append(record)
        if keep_snapshots:
            snapshots.append(m)
        logger.debug(f"probe t={m.t:.4g} mass={m.mass:.12f} linf={record['linf']:.4g}")

    m = m0
    current_field = initial_field
    if 0 in probe_steps:
        probe(m)
    for step in range(1, config.steps + 1):
        m = fp_step(m, current_field, sigma, config.dt, config.flux)
        if step in probe_steps:
            probe(m)
        if step < config.steps:
            current_field = field_of(m)
    return GridRun(m, snapshots, records)


def run_meanfield(
    m0: GridDensity,
    kernel: RieszKernel,
    confinement: ConfinementPotential,
    config: PdeConfig,
    probes: Sequence[float] | None = None,
    *,
    on_probe: Callable[[GridDensity], dict[str, float]] | None = None,
    keep_snapshots: bool = True,
) -> GridRun:
    """The mollified mean-field flow ``b = K^eps * m - grad U``."""
    eps = config.eps if config.eps is not None else 2.0 * m0.dx
    spec = DriftSpec.log_riesz(
        kernel,
        confinement,
        Mollifier(eps),
        sigma=1.0 if config.sigma is None else config.sigma,
    )
    return evolve(
        m0, spec, replace(config, eps=eps), probes,
        on_probe=on_probe, keep_snapshots=keep_snapshots,
    )


def invariant_gaussian(
    confinement: ConfinementPotential,
    *,
    d: int,
    n: int,
    half_width: float,
    sigma: float = 1.0,
    boundary_tol: float = 1e-6,
) -> GridDensity:
    """Normalized ``exp(-U / sigma^2)`` for a quadratic confinement.

    Raises
    ------
    BoxTooSmallError
        The boundary ring carries ``boundary_tol`` or more of the mass.
    """
    if confinement.kind is not ConfinementKind.QUADRATIC or not confinement.kappa_u:
        raise ValueError("invariant_gaussian needs a quadratic confinement with kappa_u > 0")
    m = GridDensity.gaussian(
        d=d, n=n, half_width=half_width, variance=sigma**2 / confinement.kappa_u
    )
    m.check_box(boundary_tol)
    return m


def evaluation_mask(reference: GridDensity, share: float = MASK_MASS) -> NDArray[np.bool_]:
    """Cells holding ``share`` of the reference mass, minus the boundary ring.

    Raises
    ------
    MaskError
        No cell qualifies.
    """
    values = reference.values.ravel()
    order = np.argsort(values)[::-1]
    cumulative = np.cumsum(values[order])
    total = cumulative[-1]
    if total <= 0:
        raise MaskError("reference density has no mass")
    count = int(np.searchsorted(cumulative, share * total)) + 1
    mask = np.zeros(values.size, dtype=bool)
    mask[order[:count]] = True
    mask = mask.reshape(reference.values.shape)
    mask[(0,) + (slice(None),) * (reference.d - 1)] = False
    mask[(-1,) + (slice(None),) * (reference.d - 1)] = False
    if reference.d == 2:
        mask[:, 0] = False
        mask[:, -1] = False
    if not mask.any():
        raise MaskError("evaluation mask is empty")
    return mask


def centered_gradient(values: Array, dx: float) -> Array:
    """Centered differences with zero extension, shape ``values.shape + (d,)``."""
    d = values.ndim
    padded = np.pad(values, 1)
    parts = []
    for k in range(d):
        upper = [slice(1, -1)] * d
        lower = [slice(1, -1)] * d
        upper[k] = slice(2, None)
        lower[k] = slice(None, -2)
        parts.append((padded[tuple(upper)] - padded[tuple(lower)]) / (2.0 * dx))
    return np.stack(parts, axis=-1)


def hessian_norm(values: Array, dx: float) -> Array:
    """Spectral norm of the centered-difference Hessian (interior cells valid)."""
    u = np.pad(values, 1, mode="edge")
    if values.ndim == 1:
        return np.abs(u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx**2
    c = u[1:-1, 1:-1]
    uxx = (u[2:, 1:-1] - 2.0 * c + u[:-2, 1:-1]) / dx**2
    uyy = (u[1:-1, 2:] - 2.0 * c + u[1:-1, :-2]) / dx**2
    uxy = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4.0 * dx**2)
    return np.abs(0.5 * (uxx + uyy)) + np.hypot(0.5 * (uxx - uyy), uxy)


def log_ratio(m: GridDensity, reference: GridDensity, mask: NDArray[np.bool_]) -> Array:
    """``u = ln reference - ln m`` with both densities floored at 1e-300."""
    if np.any(m.values[mask] <= DENSITY_FLOOR) or np.any(reference.values[mask] <= DENSITY_FLOOR):
        raise MaskError("a density vanishes on the evaluation mask")
    floor_m = np.maximum(m.values, DENSITY_FLOOR)
    floor_ref = np.maximum(reference.values, DENSITY_FLOOR)
    return np.log(floor_ref) - np.log(floor_m)


def kernel_field_decay(
    m: GridDensity,
    reference: GridDensity,
    convolver: LatticeConvolver,
    mask: NDArray[np.bool_] | None = None,
) -> float:
    """``sup |x . K^eps * (m - reference)(x)|`` over the evaluation mask."""
    _check_shared_grid(m, reference)
    mask = evaluation_mask(reference) if mask is None else mask
    field_ = convolver.convolve(m.values - reference.values)
    radial = np.einsum("...k,...k->...", np.stack(m.mesh(), axis=-1), field_)
    return float(np.abs(radial[mask]).max())


def log_density_diagnostics(
    m: GridDensity,
    reference: GridDensity,
    *,
    convolver: LatticeConvolver | None = None,
) -> tuple[float, float, float]:
    """``(sup|grad u|, sup|Hess u|, sup|x . K^eps * (m - reference)|)`` on the mask.

    The last entry is ``nan`` when no convolver is given.
    """
    _check_shared_grid(m, reference)
    mask = evaluation_mask(reference)
    u = log_ratio(m, reference, mask)
    gradient = np.linalg.norm(centered_gradient(u, m.dx), axis=-1)
    hessian = hessian_norm(u, m.dx)
    decay = (
        kernel_field_decay(m, reference, convolver, mask)
        if convolver is not None
        else math.nan
    )
    return float(gradient[mask].max()), float(hessian[mask].max()), decay


@dataclass(frozen=True)
class JabinWangCheck:
    sup_phi: float
    max_residual: float
    samples: int

    @property
    def relative_residual(self) -> float:
        return self.max_residual / self.sup_phi if self.sup_phi > 0 else math.inf


def _sample_cells(mask: NDArray[np.bool_], count: int) -> NDArray[np.int64]:
    cells = np.argwhere(mask)
    if len(cells) <= count:
        return cells
    picks = np.linspace(0, len(cells) - 1, count).round().astype(np.int64)
    return cells[picks]


def phi_matrix(
    cells: NDArray[np.int64],
    convolver: LatticeConvolver,
    field_: Array,
    score: Array,
) -> Array:
    """``phi(x_a, x_b)`` for grid cells ``x_a, x_b`` given ``K * m`` and ``grad ln m``."""
    f = field_[cells[:, 0], cells[:, 1]]
    g = score[cells[:, 0], cells[:, 1]]
    kernel = convolver.lattice_kernel(cells[:, None, :] - cells[None, :, :])
    cross = 0.5 * np.einsum("abk,abk->ab", kernel, g[:, None, :] - g[None, :, :])
    own = np.einsum("ak,ak->a", f, g)
    return cross - 0.5 * (own[:, None] + own[None, :])


def jabin_wang_phi(
    m: GridDensity,
    convolver: LatticeConvolver,
    *,
    samples: int = 256,
    mask: NDArray[np.bool_] | None = None,
) -> JabinWangCheck:
    """Sup of the centered pair functional and the quadrature of its marginal.

    ``phi(x, y) = 1/2 K(x - y).(grad ln m(x) - grad ln m(y))
    - 1/2 (K * m)(x).grad ln m(x) - 1/2 (K * m)(y).grad ln m(y)``
    with ``grad ln m = D m / m``. The marginal ``sum_y phi(x, y) m(y) dx^d``
    runs over the grid extended by one ring, where ``D m`` is supported.
    """
    mask = evaluation_mask(m) if mask is None else mask
    if np.any(m.values[mask] <= DENSITY_FLOOR):
        raise MaskError("density vanishes on the evaluation mask")
    cells = _sample_cells(mask, samples)
    n = m.n
    volume = m.cell_volume

    extended = np.pad(m.values, 1)
    slope = centered_gradient(np.pad(m.values, 1), m.dx)
    field_ext = convolver.convolve_extended(m)
    field_ = field_ext[1:-1, 1:-1]
    score = slope[1:-1, 1:-1] / np.maximum(m.values, DENSITY_FLOOR)[..., None]

    phi = phi_matrix(cells, convolver, field_, score)

    ring = np.stack(
        np.meshgrid(np.arange(-1, n + 1), np.arange(-1, n + 1), indexing="ij"), axis=-1
    ).reshape(-1, 2)
    weights = extended.ravel()
    slopes = slope.reshape(-1, 2)
    drift_term = float(np.einsum("yk,yk->", field_ext.reshape(-1, 2), slopes)) * volume
    mass = float(weights.sum()) * volume
    residuals = np.empty(len(cells))
    for a, cell in enumerate(cells):
        f = field_[cell[0], cell[1]]
        g = score[cell[0], cell[1]]
        kernel = convolver.lattice_kernel(cell[None, :] - ring)
        pair = 0.5 * (
            float(np.einsum("yk,k,y->", kernel, g, weights))
            - float(np.einsum("yk,yk->", kernel, slopes))
        ) * volume
        residuals[a] = pair - 0.5 * float(f @ g) * mass - 0.5 * drift_term
    check = JabinWangCheck(
        sup_phi=float(np.abs(phi).max()),
        max_residual=float(np.abs(residuals).max()),
        samples=len(cells),
    )
    logger.debug(
        f"phi sup={check.sup_phi:.4e} residual={check.max_residual:.3e} "
        f"over {check.samples} cells"
    )
    return check


def sample_from_grid(m: GridDensity, N: int, seed: int) -> ParticleEnsemble:
    """I.i.d. particles from ``m``: inverse-CDF cell choice plus uniform jitter."""
    if N < 1:
        raise ValueError("need at least one particle")
    uniform = streams.uniform_block(seed, streams.INIT_STEP, (N, 1 + m.d))
    cumulative = np.cumsum(m.values.ravel())
    cumulative /= cumulative[-1]
    cells = np.minimum(np.searchsorted(cumulative, uniform[:, 0], side="right"), cumulative.size - 1)
    index = np.stack(np.unravel_index(cells, m.values.shape), axis=-1)
    positions = -m.half_width + (index + uniform[:, 1:]) * m.dx
    return ParticleEnsemble(positions, t=m.t, seed=seed)
