"""
Particle systems and time-inhomogeneous diffusions.

The engine advances ``dX^i = b_t(X^i, mu^N) dt + sqrt(2) sigma dB^i`` with
explicit Euler-Maruyama steps, where ``mu^N`` is the empirical measure of the
other particles (weight ``1 / (N - 1)``). Noise comes from counter-based
streams keyed by ``(seed, step)`` and the particle label, so trajectories are
bit-identical for any worker count. Couplings of two ensembles, the
well-posedness monitors (energy, collision distance, moments) and the 1-D
dominating radius process of the reflection coupling live here as well.
"""

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special
from scipy.spatial.distance import pdist

from meanfieldlab import _pairsum, streams
from meanfieldlab.errors import CollisionError, EstimatorError, SingularityError
from meanfieldlab.kernels import (
    DriftKind,
    DriftSpec,
    Mollifier,
    MollifierProfile,
    RieszKernel,
    radial_table,
)
from meanfieldlab.utils.logger import logger

Array = NDArray[np.float64]

_CHUNK_ROWS = 256
# Largest log of a finite float64 mean.
_EXP_LIMIT = 709.0


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """``N`` particles in ``R^d`` with their clock and stream state.

    ``labels`` are the canonical particle indices used to key the noise; they
    travel with the particles when the array is permuted.
    """

    positions: Array
    t: float = 0.0
    seed: int = 0
    step: int = 0
    labels: NDArray[np.int64] | None = None

    def __post_init__(self) -> None:
        positions = np.array(self.positions, dtype=float)
        if positions.ndim == 1:
            positions = positions[:, None]
        if positions.ndim != 2 or len(positions) < 1:
            raise ValueError(f"positions must be (N, d) with N >= 1, got {positions.shape}")
        if not np.all(np.isfinite(positions)):
            raise ValueError("positions must be finite")
        labels = (
            np.arange(len(positions), dtype=np.int64)
            if self.labels is None
            else np.array(self.labels, dtype=np.int64)
        )
        if labels.shape != (len(positions),):
            raise ValueError("labels must have one entry per particle")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        positions.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "step", int(self.step))

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @classmethod
    def gaussian(
        cls,
        N: int,
        d: int,
        seed: int,
        *,
        mean: ArrayLike = 0.0,
        std: float = 1.0,
    ) -> "ParticleEnsemble":
        """I.i.d. ``N(mean, std^2 I)`` particles from the initialization stream."""
        labels = np.arange(N, dtype=np.int64)
        noise = streams.normal_block(seed, streams.INIT_STEP, labels, d)
        return cls(np.asarray(mean, dtype=float) + std * noise, seed=seed)

    @classmethod
    def from_positions(
        cls, positions: ArrayLike, seed: int = 0, *, t: float = 0.0
    ) -> "ParticleEnsemble":
        """Ensemble at given positions with canonical labels and a fresh stream."""
        return cls(np.asarray(positions, dtype=float), t=t, seed=seed)

    def permuted(self, order: Sequence[int]) -> "ParticleEnsemble":
        order = np.asarray(order)
        return replace(self, positions=self.positions[order], labels=self.labels[order])

    def advanced(self, positions: Array, dt: float) -> "ParticleEnsemble":
        return replace(self, positions=positions, t=self.t + dt, step=self.step + 1)

    def noise(self) -> Array:
        """Standard normal increments of the current step."""
        return streams.normal_block(self.seed, self.step, self.labels, self.d)


class Scheme(str, Enum):
    EULER_MARUYAMA = "euler_maruyama"
    RK4_DETERMINISTIC = "rk4_deterministic"


@dataclass(frozen=True)
class SdeConfig:
    """Time stepping options.

    ``mollification_eps > 0`` replaces the drift's kernel by its mollified
    version at that radius; 0 keeps the drift's own mollifier (raw kernel if
    it has none). The collision threshold plays the role of ``1/n`` in the
    stopping times ``tau_n``.
    """

    dt: float
    scheme: Scheme = Scheme.EULER_MARUYAMA
    mollification_eps: float = 0.0
    collision_threshold: float = 1e-6
    monitor_energy: bool = False
    workers: int | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.mollification_eps < 0:
            raise ValueError("mollification_eps must be >= 0")
        if self.collision_threshold <= 0:
            raise ValueError("collision_threshold must be positive")
        object.__setattr__(self, "scheme", Scheme(self.scheme))


def effective_mollifier(drift: DriftSpec, config: SdeConfig) -> Mollifier | None:
    if config.mollification_eps > 0:
        profile = drift.mollifier.profile if drift.mollifier else MollifierProfile.BUMP
        return Mollifier(config.mollification_eps, profile)
    return drift.mollifier


def _kernel_sum(
    positions: Array, kernel: RieszKernel, mollifier: Mollifier | None
) -> Array:
    """``sum_{j != i} K(x_i - x_j)`` with ``M`` applied after the sum."""
    if mollifier is None:
        gradients = _pairsum.raw_gradient_sum(positions, kernel.s)
    else:
        table = radial_table(kernel, mollifier)
        gradients = _pairsum.tabulated_gradient_sum(
            positions,
            table.nodes,
            table.coefficients,
            table.r_min,
            table.r_max,
            table.h_min,
            kernel.s,
        )
    return gradients @ kernel.matrix.T


def _mckean_sum(positions: Array, drift: DriftSpec) -> Array:
    n = len(positions)
    out = np.zeros_like(positions)
    for start in range(0, n, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n)
        terms = np.asarray(
            drift.pair(positions[start:stop, None, :], positions[None, :, :]),
            dtype=float,
        )
        rows = np.arange(start, stop)
        terms[rows - start, rows, :] = 0.0
        out[start:stop] = terms.sum(axis=1)
    return out


def particle_drift(
    positions: Array, t: float, drift: DriftSpec, config: SdeConfig
) -> Array:
    """Drift of every particle against the empirical measure of the others."""
    n = len(positions)
    if drift.kind is DriftKind.EXPLICIT:
        return np.asarray(drift.function(t, positions), dtype=float)
    weight = 1.0 / (n - 1) if n > 1 else 0.0
    with _pairsum.thread_count(config.workers):
        if drift.kind is DriftKind.MCKEAN:
            interaction = _mckean_sum(positions, drift) if n > 1 else 0.0
            return np.asarray(drift.base(positions), dtype=float) + weight * interaction
        mollifier = effective_mollifier(drift, config)
        interaction = _kernel_sum(positions, drift.kernel, mollifier) if n > 1 else 0.0
    return weight * interaction - drift.confinement.gradient(positions)


def check_collisions(
    ensemble: ParticleEnsemble, drift: DriftSpec, config: SdeConfig
) -> None:
    """Raise CollisionError when a raw log/Riesz system is closer than the threshold."""
    if drift.kind is not DriftKind.LOG_RIESZ or effective_mollifier(drift, config):
        return
    distance, i, j = _pairsum.min_pair_distance(ensemble.positions)
    if distance < config.collision_threshold:
        raise CollisionError(
            ensemble.labels[i], ensemble.labels[j], distance, ensemble.t
        )


def _rk4(positions: Array, t: float, drift: DriftSpec, config: SdeConfig) -> Array:
    dt = config.dt
    k1 = particle_drift(positions, t, drift, config)
    k2 = particle_drift(positions + 0.5 * dt * k1, t + 0.5 * dt, drift, config)
    k3 = particle_drift(positions + 0.5 * dt * k2, t + 0.5 * dt, drift, config)
    k4 = particle_drift(positions + dt * k3, t + dt, drift, config)
    return positions + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _euler_update(
    positions: Array, t: float, drift: DriftSpec, config: SdeConfig, noise: Array
) -> Array:
    b = particle_drift(positions, t, drift, config)
    return positions + b * config.dt + drift.sigma * math.sqrt(2.0 * config.dt) * noise


def step_particles(
    ensemble: ParticleEnsemble, drift: DriftSpec, config: SdeConfig
) -> ParticleEnsemble:
    """One step of the particle system.

    Raises
    ------
    CollisionError
        Raw log/Riesz kernel with two particles closer than the threshold.
    """
    check_collisions(ensemble, drift, config)
    if config.scheme is Scheme.RK4_DETERMINISTIC:
        if drift.sigma != 0:
            raise ValueError("rk4_deterministic requires sigma = 0")
        positions = _rk4(ensemble.positions, ensemble.t, drift, config)
    else:
        positions = _euler_update(
            ensemble.positions, ensemble.t, drift, config, ensemble.noise()
        )
    return ensemble.advanced(positions, config.dt)


class Coupling(str, Enum):
    SYNCHRONOUS = "synchronous"
    REFLECTION = "reflection"
    INDEPENDENT = "independent"


@dataclass(frozen=True, eq=False)
class CoupledPair:
    """Two ensembles of equal shape whose particles are paired by row.

    For the reflection coupling a pair merges once its distance falls below
    ``merge_threshold`` or its difference changes side; merged pairs share
    increments and positions from then on.
    """

    first: ParticleEnsemble
    second: ParticleEnsemble
    coupling: Coupling = Coupling.SYNCHRONOUS
    merge_threshold: float | None = None
    merged: NDArray[np.bool_] | None = field(default=None)

    def __post_init__(self) -> None:
        if self.first.positions.shape != self.second.positions.shape:
            raise ValueError(
                f"coupled ensembles differ in shape: {self.first.positions.shape} "
                f"vs {self.second.positions.shape}"
            )
        object.__setattr__(self, "coupling", Coupling(self.coupling))
        if self.merge_threshold is None:
            mean_gap = float(self.gaps().mean())
            object.__setattr__(
                self, "merge_threshold", 1e-4 * mean_gap if mean_gap > 0 else 1e-12
            )
        if self.merge_threshold <= 0:
            raise ValueError("merge_threshold must be positive")
        if self.merged is None:
            object.__setattr__(self, "merged", np.zeros(self.first.N, dtype=bool))

    def gaps(self) -> Array:
        return np.linalg.norm(self.first.positions - self.second.positions, axis=1)

    def mean_square_gap(self) -> float:
        return float(np.mean(self.gaps() ** 2))


def step_coupled(
    pair: CoupledPair,
    drift: DriftSpec,
    drift2: DriftSpec,
    config: SdeConfig,
) -> CoupledPair:
    """Advance both ensembles of a coupled pair by one step."""
    first, second = pair.first, pair.second
    check_collisions(first, drift, config)
    check_collisions(second, drift2, config)
    xi = first.noise()
    merged = pair.merged.copy()
    direction = None
    if pair.coupling is Coupling.SYNCHRONOUS:
        xi2 = xi
    elif pair.coupling is Coupling.INDEPENDENT:
        xi2 = second.noise()
    else:
        diff = first.positions - second.positions
        gap = np.linalg.norm(diff, axis=1, keepdims=True)
        direction = np.divide(diff, gap, out=np.zeros_like(diff), where=gap > 0)
        xi2 = xi - 2.0 * direction * np.sum(direction * xi, axis=1, keepdims=True)
        xi2[merged] = xi[merged]

    if config.scheme is Scheme.RK4_DETERMINISTIC:
        if drift.sigma != 0 or drift2.sigma != 0:
            raise ValueError("rk4_deterministic requires sigma = 0")
        x1 = _rk4(first.positions, first.t, drift, config)
        x2 = _rk4(second.positions, second.t, drift2, config)
    else:
        x1 = _euler_update(first.positions, first.t, drift, config, xi)
        x2 = _euler_update(second.positions, second.t, drift2, config, xi2)

    if pair.coupling is Coupling.REFLECTION:
        after = x1 - x2
        crossed = np.sum(after * direction, axis=1) <= 0.0
        close = np.linalg.norm(after, axis=1) < pair.merge_threshold
        merged |= crossed | close
        x2 = np.where(merged[:, None], x1, x2)

    return replace(
        pair,
        first=first.advanced(x1, config.dt),
        second=second.advanced(x2, config.dt),
        merged=merged,
    )


class ContractionFit(NamedTuple):
    M: float
    rate: float
    r_squared: float


def contraction_fit(gap_series: Sequence[tuple[float, float]]) -> ContractionFit:
    """Least-squares fit of ``gap(t) = M exp(-rate t)`` on ``(t, ln gap)``."""
    data = np.asarray(gap_series, dtype=float)
    if data.ndim != 2 or data.shape[0] < 5 or data.shape[1] != 2:
        raise EstimatorError("contraction_fit needs at least 5 (t, gap) points")
    t, gap = data[:, 0], data[:, 1]
    if np.any(gap <= 0) or not np.all(np.isfinite(gap)):
        raise EstimatorError("gap series must be positive and finite")
    design = np.column_stack([np.ones_like(t), t])
    log_gap = np.log(gap)
    (intercept, slope), *_ = np.linalg.lstsq(design, log_gap, rcond=None)
    residual = log_gap - (intercept + slope * t)
    total = float(np.sum((log_gap - log_gap.mean()) ** 2))
    r_squared = 1.0 if total == 0.0 else 1.0 - float(np.sum(residual**2)) / total
    return ContractionFit(M=float(np.exp(intercept)), rate=float(-slope), r_squared=r_squared)


def _pair_distances(ensemble: ParticleEnsemble) -> Array:
    distances = pdist(ensemble.positions)
    if np.any(distances == 0.0):
        raise SingularityError("coincident particles have infinite energy")
    return distances


def energy_functional(ensemble: ParticleEnsemble, kernel: RieszKernel) -> float:
    """``E(x) = 1/2 sum_{i != j} g(x_i - x_j) + (N 1_{s=0} / 2) sum_i |x_i|^2``."""
    distances = _pair_distances(ensemble)
    energy = float(np.sum(-np.log(distances) if kernel.s == 0 else distances ** (-kernel.s)))
    if kernel.s == 0:
        energy += 0.5 * ensemble.N * float(np.sum(ensemble.positions**2))
    return energy


def pair_energy(ensemble: ParticleEnsemble, kernel: RieszKernel) -> float:
    """``sum_{i != j} g(x_i - x_j)``, conserved by the deterministic vortex flow."""
    distances = _pair_distances(ensemble)
    values = -np.log(distances) if kernel.s == 0 else distances ** (-kernel.s)
    return 2.0 * float(np.sum(values))


class EnsembleMonitors(NamedTuple):
    min_distance: float
    k_moment: float
    exp_pair_moment: float
    exp_pair_stderr: float
    overflow: bool


def ensemble_monitors(
    ensemble: ParticleEnsemble, delta: float, k: float
) -> EnsembleMonitors:
    """Collision distance, ``k``-th moment and Gaussian pair moment.

    The pair moment averages ``exp(delta |X_i - X_j|^2)`` over the disjoint
    pairs ``(i, i + N // 2)``. The average is taken in log space; when its
    logarithm exceeds 709 the moment is reported as ``inf`` with the overflow
    flag set.
    """
    x = ensemble.positions
    n = ensemble.N
    min_distance = _pairsum.min_pair_distance(x)[0]
    k_moment = float(np.mean(np.linalg.norm(x, axis=1) ** k))
    half = n // 2
    if half == 0:
        return EnsembleMonitors(min_distance, k_moment, math.nan, math.nan, False)
    exponents = delta * np.sum((x[:half] - x[half : 2 * half]) ** 2, axis=1)
    log_mean = float(special.logsumexp(exponents)) - math.log(half)
    if log_mean > _EXP_LIMIT:
        logger.warning(
            f"exp pair moment overflows at delta={delta:.3g} "
            f"(log mean {log_mean:.1f}); delta is above the integrability threshold"
        )
        return EnsembleMonitors(min_distance, k_moment, math.inf, math.inf, True)
    shift = float(exponents.max())
    scaled = np.exp(exponents - shift)
    stderr = math.nan
    if half > 1:
        spread = float(scaled.std(ddof=1))
        stderr = float(np.exp(shift + np.log(spread))) / math.sqrt(half) if spread > 0 else 0.0
    mean = float(np.exp(shift) * scaled.mean()) if shift <= _EXP_LIMIT else math.exp(log_mean)
    return EnsembleMonitors(min_distance, k_moment, mean, stderr, False)


class SurvivalCurve(NamedTuple):
    times: Array
    survival: Array


def dominating_radius(
    kappa: Callable[[Array], Array],
    r0: float,
    dt: float,
    T: float,
    paths: int,
    *,
    seed: int = 0,
) -> SurvivalCurve:
    """Survival ``P[r_v > 0]`` of ``dr = -r kappa(r) dt + 2 sqrt(2) dW``, absorbed at 0."""
    if r0 < 0:
        raise ValueError(f"r0 must be nonnegative, got {r0}")
    if dt <= 0 or T <= 0 or paths < 1:
        raise ValueError("dt, T and paths must be positive")
    steps = int(round(T / dt))
    times = dt * np.arange(steps + 1)
    survival = np.zeros(steps + 1)
    if r0 == 0:
        return SurvivalCurve(times, survival)
    r = np.full(paths, float(r0))
    alive = np.ones(paths, dtype=bool)
    labels = np.arange(paths, dtype=np.int64)
    survival[0] = 1.0
    scale = 2.0 * math.sqrt(2.0 * dt)
    for step in range(steps):
        noise = streams.normal_block(seed, step, labels, 1)[:, 0]
        moved = r - r * np.asarray(kappa(r), dtype=float) * dt + scale * noise
        alive &= moved > 0.0
        r = np.where(alive, moved, 0.0)
        survival[step + 1] = alive.mean()
    return SurvivalCurve(times, survival)


@dataclass
class SimulationResult:
    ensemble: ParticleEnsemble
    records: list[dict[str, float]]
    events: list[dict[str, float | int | str]]
    halted: bool = False


def _probe_record(
    ensemble: ParticleEnsemble, drift: DriftSpec, config: SdeConfig, delta: float
) -> dict[str, float]:
    monitors = ensemble_monitors(ensemble, delta, 2.0)
    record = {
        "t": ensemble.t,
        "min_distance": monitors.min_distance,
        "second_moment": monitors.k_moment,
        "exp_pair_moment": monitors.exp_pair_moment,
    }
    if config.monitor_energy and drift.kind is DriftKind.LOG_RIESZ and ensemble.N > 1:
        record["energy"] = energy_functional(ensemble, drift.kernel)
    return record


def simulate(
    ensemble: ParticleEnsemble,
    drift: DriftSpec,
    config: SdeConfig,
    T: float,
    *,
    probe_every: int = 100,
    delta: float = 0.0,
    on_probe: Callable[[ParticleEnsemble], dict[str, float]] | None = None,
) -> SimulationResult:
    """Run to time ``T`` with probes every ``probe_every`` steps.

    A collision halts the trajectory and is returned as an event instead of
    being raised.
    """
    steps = int(round(T / config.dt))
    records: list[dict[str, float]] = []
    events: list[dict[str, float | int | str]] = []

    def probe(current: ParticleEnsemble) -> None:
        record = _probe_record(current, drift, config, delta)
        if on_probe is not None:
            record.update(on_probe(current))
        if math.isinf(record["exp_pair_moment"]):
            events.append({"kind": "overflow", "metric": "exp_pair_moment", "t": current.t})
        records.append(record)

    probe(ensemble)
    for step in range(steps):
        try:
            ensemble = step_particles(ensemble, drift, config)
        except CollisionError as err:
            logger.warning(f"trajectory halted: {err}")
            events.append(err.as_event())
            return SimulationResult(ensemble, records, events, halted=True)
        if (step + 1) % probe_every == 0 or step + 1 == steps:
            probe(ensemble)
    return SimulationResult(ensemble, records, events)


@dataclass
class CoupledRun:
    pair: CoupledPair
    gap_series: list[tuple[float, float]]
    events: list[dict[str, float | int | str]]


def run_coupled(
    pair: CoupledPair,
    drift: DriftSpec,
    drift2: DriftSpec,
    config: SdeConfig,
    T: float,
    *,
    probe_every: int = 100,
    on_probe: Callable[[CoupledPair], None] | None = None,
) -> CoupledRun:
    """Run a coupled pair to ``T`` recording ``(t, E|X - X'|^2)`` and merge events."""
    steps = int(round(T / config.dt))
    series = [(pair.first.t, pair.mean_square_gap())]
    events: list[dict[str, float | int | str]] = []
    if on_probe is not None:
        on_probe(pair)
    for step in range(steps):
        before = pair.merged
        pair = step_coupled(pair, drift, drift2, config)
        for index in np.flatnonzero(pair.merged & ~before):
            events.append({"kind": "merge", "pair": int(index), "t": pair.first.t})
        if (step + 1) % probe_every == 0 or step + 1 == steps:
            series.append((pair.first.t, pair.mean_square_gap()))
            if on_probe is not None:
                on_probe(pair)
    return CoupledRun(pair, series, events)
