"""
Numerical check of the ``L^1``-``L^p`` control of Riesz potentials.

For ``m`` on a grid, ``|.|^{-s} * m`` is evaluated at the cell vertices,
where it is finite, with cell-integrated kernel weights. Its sup-norm (or
its ``C^theta`` seminorm) is compared with
``|m|_1^{1 - q(s + theta)/d} |m|_p^{q(s + theta)/d}``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.special import gamma

from meanfieldlab.errors import IntegrabilityError
from meanfieldlab.grid import GridDensity
from meanfieldlab.utils.logger import logger

SUBCELLS = 32
NEAR_CELLS = 4
CALIBRATION_VARIANCES = (0.5, 1.0, 2.0)
CALIBRATION_MARGIN = 1.05
_CHUNK_ROWS = 256


@dataclass(frozen=True)
class ConvolutionCheck:
    s: float
    p: float
    theta: float | None
    lhs: float
    rhs: float
    ratio: float
    constant: float | None = None

    @property
    def passed(self) -> bool | None:
        return None if self.constant is None else self.ratio <= self.constant


def _conjugate(p: float) -> float:
    return 1.0 if math.isinf(p) else p / (p - 1.0)


def check_exponents(s: float, p: float, d: int, theta: float | None = None) -> None:
    """Raise IntegrabilityError unless ``p > (1 - (s + theta)/d)^{-1}``."""
    if s < 0 or s >= d:
        raise IntegrabilityError(f"s={s} outside [0, {d})")
    if theta is None:
        if s == 0:
            raise IntegrabilityError("s = 0 is only covered by the Holder branch")
        order = s
    else:
        if not 0 < theta < 1:
            raise IntegrabilityError(f"theta={theta} outside (0, 1)")
        order = s + theta
    if order >= d or p <= 1.0 / (1.0 - order / d):
        raise IntegrabilityError(
            f"p={p} must exceed (1 - {order:g}/{d})^-1 = "
            f"{1.0 / (1.0 - order / d) if order < d else math.inf:.4g}"
        )


def _kernel(r: np.ndarray, s: float) -> np.ndarray:
    return -np.log(r) if s == 0 else r ** (-s)


def vertex_weights(n: int, dx: float, d: int, s: float) -> np.ndarray:
    """``int_cell |v - y|^{-s} dy`` for vertex-to-cell offsets ``-(n-1) .. n``.

    Cells within a few cells of the vertex are integrated on a
    ``32^d`` sub-grid; farther cells use the center value.
    """
    offsets = (np.arange(-(n - 1), n + 1) - 0.5) * dx
    mesh = np.meshgrid(*([offsets] * d), indexing="ij")
    centers = np.stack(mesh, axis=-1)
    weights = _kernel(np.linalg.norm(centers, axis=-1), s) * dx**d
    sub = ((np.arange(SUBCELLS) + 0.5) / SUBCELLS - 0.5) * dx
    sub_points = np.stack(np.meshgrid(*([sub] * d), indexing="ij"), axis=-1).reshape(-1, d)
    near = np.argwhere(np.all(np.abs(centers) <= (NEAR_CELLS + 0.5) * dx, axis=-1))
    for index in near:
        point = centers[tuple(index)]
        r = np.linalg.norm(point + sub_points, axis=-1)
        weights[tuple(index)] = float(np.mean(_kernel(r, s))) * dx**d
    return weights


def riesz_potential_at_vertices(m: GridDensity, s: float) -> np.ndarray:
    """``|.|^{-s} * m`` (``-ln|.| * m`` for ``s = 0``) on the ``(n + 1)^d`` vertices."""
    n = m.n
    weights = vertex_weights(n, m.dx, m.d, s)
    full = signal.fftconvolve(m.values, weights, mode="full")
    return full[(slice(n - 1, 2 * n),) * m.d]


def holder_seminorm(values: np.ndarray, spacing: float, theta: float) -> float:
    """``max |F(a) - F(b)| / |a - b|^theta`` over all vertex pairs."""
    shape = values.shape
    index = np.stack(np.meshgrid(*[np.arange(k) for k in shape], indexing="ij"), axis=-1)
    points = index.reshape(-1, len(shape)) * spacing
    flat = values.ravel()
    best = 0.0
    for start in range(0, len(flat), _CHUNK_ROWS):
        rows = slice(start, start + _CHUNK_ROWS)
        gaps = np.linalg.norm(points[rows, None, :] - points[None, :, :], axis=-1)
        jumps = np.abs(flat[rows, None] - flat[None, :])
        ratios = np.divide(jumps, gaps**theta, out=np.zeros_like(jumps), where=gaps > 0)
        best = max(best, float(ratios.max()))
    return best


def convolution_inequality_check(
    m: GridDensity,
    s: float,
    p: float,
    theta: float | None = None,
    constant: float | None = None,
) -> ConvolutionCheck:
    """Ratio of ``|| |.|^{-s} * m ||`` to the interpolation product.

    Without ``theta`` the left side is the sup-norm; with ``theta`` it is the
    ``C^theta`` seminorm and ``s + theta`` replaces ``s`` in the exponents.

    Raises
    ------
    IntegrabilityError
        The exponent preconditions fail.
    """
    d = m.d
    check_exponents(s, p, d, theta)
    potential = riesz_potential_at_vertices(m, s)
    order = s if theta is None else s + theta
    if theta is None:
        lhs = float(np.abs(potential).max())
    else:
        lhs = holder_seminorm(potential, m.dx, theta)
    share = _conjugate(p) * order / d
    rhs = m.lp_norm(1.0) ** (1.0 - share) * m.lp_norm(p) ** share
    check = ConvolutionCheck(s, p, theta, lhs, rhs, lhs / rhs, constant)
    logger.debug(f"convolution check s={s} p={p} theta={theta}: ratio {check.ratio:.6g}")
    return check


def calibrate_convolution_constant(
    s: float,
    p: float,
    theta: float | None = None,
    *,
    d: int = 2,
    n: int = 64,
    half_width: float = 8.0,
    variances: tuple[float, ...] = CALIBRATION_VARIANCES,
    margin: float = CALIBRATION_MARGIN,
) -> float:
    """Largest ratio over centered Gaussians of the given variances, times ``margin``."""
    ratios = [
        convolution_inequality_check(
            GridDensity.gaussian(d=d, n=n, half_width=half_width, variance=v), s, p, theta
        ).ratio
        for v in variances
    ]
    constant = margin * max(ratios)
    logger.info(f"calibrated constant for s={s}, p={p}, theta={theta}: {constant:.6g}")
    return constant


def gaussian_sup_ratio(s: float) -> float:
    """Exact sup-norm ratio for a standard Gaussian in d = 2 with p = infinity."""
    return math.pi ** (s / 2.0) * gamma(1.0 - s / 2.0)
