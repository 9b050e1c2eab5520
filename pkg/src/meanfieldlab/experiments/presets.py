"""
Experiment presets.

A preset binds the particle engine, the grid solver and the diagnostics into
one checkable claim. Its ``defaults`` are the run-configuration keys it
consumes; ``constants`` are fixed internals echoed into the report; ``quick``
overrides shrink the run for smoke tests. Verdict tolerances are the
acceptance defaults.
"""

import math
import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from meanfieldlab.diagnostics import (
    TestFunctionFamily,
    bakry_emery_constant,
    calibrate_convolution_constant,
    contraction_constants,
    convolution_inequality_check,
    entropy_to_lsi_convention,
    gaussian_flow_constant,
    gaussian_moment_bound,
    gaussian_sup_ratio,
    high_temp_threshold,
    lsi_scan,
    marginal_kl,
    perturbation_potential,
    poincare_scan,
    relative_entropy,
    total_variation,
    uniform_poincare_bound,
)
from meanfieldlab.errors import MeanFieldLabError, PresetNotFoundError
from meanfieldlab.experiments.report import ExperimentReport, PlotHint
from meanfieldlab.grid import (
    ConvolutionMode,
    GridDensity,
    KernelSampling,
    LatticeConvolver,
    PdeConfig,
    evolve,
    invariant_gaussian,
    jabin_wang_phi,
    lattice_convolver,
    log_density_diagnostics,
    run_meanfield,
    sample_from_grid,
)
from meanfieldlab.kernels import (
    ConfinementPotential,
    DriftSpec,
    Mollifier,
    RieszKernel,
    convexity_profile,
    curvature_constants,
    drift_bound,
)
from meanfieldlab.scenarios import Scenario
from meanfieldlab.sde import (
    CoupledPair,
    Coupling,
    ParticleEnsemble,
    Scheme,
    SdeConfig,
    contraction_fit,
    dominating_radius,
    ensemble_monitors,
    run_coupled,
    simulate,
)
from meanfieldlab.utils.config import Config
from meanfieldlab.utils.logger import logger

OVERRIDE_KEYS = (
    "N",
    "dt",
    "T",
    "grid_n",
    "half_width",
    "eps",
    "sigma",
    "kappa_u",
    "m_abs",
    "seed",
    "workers",
)

# Exponential fits skip the initial transient.
FIT_START = 0.2

Runner = Callable[[dict[str, Any], ExperimentReport], None]


@dataclass(frozen=True)
class Preset:
    scenario: Scenario
    runner: Runner
    defaults: Mapping[str, Any]
    constants: Mapping[str, Any] = field(default_factory=dict)
    quick: Mapping[str, Any] = field(default_factory=dict)
    budget_seconds: float = 60.0


PRESETS: dict[Scenario, Preset] = {}


def preset(
    scenario: Scenario,
    *,
    defaults: Mapping[str, Any],
    constants: Mapping[str, Any] | None = None,
    quick: Mapping[str, Any] | None = None,
    budget_seconds: float = 60.0,
) -> Callable[[Runner], Runner]:
    """Register the decorated runner as the preset of ``scenario``."""

    def register(runner: Runner) -> Runner:
        PRESETS[scenario] = Preset(
            scenario, runner, dict(defaults), dict(constants or {}), dict(quick or {}),
            budget_seconds,
        )
        return runner

    return register


def _fit_rate(
    times: np.ndarray, values: np.ndarray, t_min: float = FIT_START, t_max: float = math.inf
) -> tuple[float, float]:
    """Slope and ``r^2`` of ``ln values`` against ``t`` on ``[t_min, t_max]``."""
    keep = (times >= t_min - 1e-12) & (times <= t_max + 1e-12) & (values > 0)
    if keep.sum() < 2:
        return math.nan, math.nan
    t, y = times[keep], np.log(values[keep])
    slope, intercept = np.polyfit(t, y, 1)
    residual = y - (slope * t + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if total == 0.0 else 1.0 - float(np.sum(residual**2)) / total
    return float(slope), r_squared


def _column(records: list[dict[str, float]], key: str) -> np.ndarray:
    return np.array([r[key] for r in records], dtype=float)


def _workers(params: Mapping[str, Any]) -> int:
    return params.get("workers") or Config().default_workers


def _envelope_excess(values: np.ndarray) -> float:
    """``max_{i > j} values[i] / values[j]``, at most 1 for a non-increasing sequence."""
    excess = 0.0
    for i in range(1, len(values)):
        excess = max(excess, float(values[i] / values[:i].min()))
    return excess if len(values) > 1 else 1.0


# --------------------------------------------------------------------------- #
# Gaussian flows and constants
# --------------------------------------------------------------------------- #


@preset(
    Scenario.BAKRY_EMERY_GAUSSIAN,
    defaults={
        "grid_n": 512,
        "half_width": 8.0,
        "dt": 1e-4,
        "T": 1.0,
        "sigma": 1.0,
        "kappa_u": 1.0,
        "workers": None,
    },
    constants={
        "v0": 2.0,
        "hermite_degree": 4,
        "lattice_size": 10,
        "sigma_sweep": (0.5, 1.0, 1.5),
    },
    quick={"grid_n": 128, "dt": 1e-3, "T": 0.5},
    budget_seconds=60.0,
)
def bakry_emery_gaussian(params: dict[str, Any], report: ExperimentReport) -> None:
    kappa, sigma, v0 = params["kappa_u"], params["sigma"], params["v0"]
    size = params["lattice_size"]
    errors = [
        abs(bakry_emery_constant(-1.0, v / 2.0, 1.0, t) - gaussian_flow_constant(v, t))
        for v in np.linspace(0.25, 4.0, size)
        for t in np.linspace(0.0, 2.0, size)
    ]
    report.add_metric("formula_max_error", max(errors))

    drift = DriftSpec.explicit(lambda t, x: -kappa * x, sigma=sigma)
    m0 = GridDensity.gaussian(
        d=1, n=params["grid_n"], half_width=params["half_width"], variance=v0
    )
    family = TestFunctionFamily.hermite(params["hermite_degree"]) + TestFunctionFamily.exponential_tilts()
    workers = _workers(params)

    def on_probe(m: GridDensity) -> dict[str, float]:
        scan = lsi_scan(m, family, workers=workers)
        exact = bakry_emery_constant(-kappa, v0 / 2.0, sigma, m.t)
        return {"lsi_scan": scan.bound, "bakry_emery": exact, "gap": exact - scan.bound}

    T = params["T"]
    run = evolve(
        m0,
        drift,
        PdeConfig(params["dt"], T, workers=params["workers"]),
        [0.0, T / 4, T / 2, T],
        on_probe=on_probe,
        keep_snapshots=False,
    )
    report.add_series(
        "lsi", [{k: r[k] for k in ("t", "lsi_scan", "bakry_emery", "gap")} for r in run.records]
    )
    gaps = _column(run.records, "gap")
    report.add_metric("scan_max_gap", float(np.abs(gaps).max()))
    report.add_metric("scan_max_excess", float(max(0.0, -gaps.min())))
    final = run.records[-1]
    report.add_metric("final_scan_lsi", entropy_to_lsi_convention(final["lsi_scan"]))
    report.add_metric("final_bakry_emery_lsi", entropy_to_lsi_convention(final["bakry_emery"]))

    # Long-time constants against sigma^2 / rho; recorded as a trend, not a verdict.
    ratios = []
    for level in params["sigma_sweep"]:
        m_star = invariant_gaussian(
            ConfinementPotential.quadratic(kappa),
            d=1,
            n=params["grid_n"],
            half_width=params["half_width"],
            sigma=level,
        )
        ratios.append(lsi_scan(m_star, family, workers=workers).bound * kappa / level**2)
    logger.info(
        f"stationary C_H / (sigma^2 / rho) over sigma {params['sigma_sweep']}: "
        + ", ".join(f"{r:.4f}" for r in ratios)
    )
    report.add_metric("stationary_ratio_min", min(ratios))
    report.add_metric("stationary_ratio_max", max(ratios))
    report.check("formula_exact", "formula_max_error", "<=", 1e-12)
    report.check("scan_matches_formula", "scan_max_gap", "<=", 1e-3)


@preset(
    Scenario.HIGH_TEMPERATURE_CONTRACTION,
    defaults={"N": 10_000, "dt": 2e-4, "T": 5.0, "sigma": None, "seed": 0, "workers": None},
    constants={
        "rho": 1.0,
        "quartic": 1.0,
        "quadratic": 1.0,
        "probe_every": 10,
        "moment_stride": 25,
        "poincare_stride": 250,
        "kde_cells": 256,
        "gap_floor": 1e-24,
        "reflection_pairs": 1000,
        "radius_paths": 1000,
    },
    quick={"N": 1000, "T": 0.5},
    budget_seconds=300.0,
)
def high_temperature_contraction(params: dict[str, Any], report: ExperimentReport) -> None:
    rho = params["rho"]
    U = ConfinementPotential.double_well(params["quartic"], params["quadratic"])
    base = DriftSpec.explicit(lambda t, x: -U.gradient(x), sigma=1.0)
    curvature = curvature_constants(base, rho, d=1)
    r_star, _ = high_temp_threshold(rho, curvature.L, curvature.R, 0.0, 1)
    K = drift_bound(base, r_star)
    r_star, sigma0_sq = high_temp_threshold(rho, curvature.L, curvature.R, K, 1)
    sigma = params["sigma"] if params["sigma"] is not None else math.sqrt(sigma0_sq)
    drift = base.with_sigma(sigma)
    for name, value in (
        ("L", curvature.L),
        ("R", curvature.R),
        ("R_star", r_star),
        ("K", K),
        ("sigma0_sq", sigma0_sq),
        ("sigma", sigma),
    ):
        report.add_metric(name, value)
    logger.info(
        f"curvature rho={rho} L={curvature.L:.4g} R={curvature.R:.4g}; "
        f"sigma^2 = {sigma**2:.6g} (threshold {sigma0_sq:.6g})"
    )

    N, dt, T, seed = params["N"], params["dt"], params["T"], params["seed"]
    first = ParticleEnsemble.gaussian(N, 1, seed)
    second = ParticleEnsemble.gaussian(N, 1, seed + 1, mean=0.5)
    pair = CoupledPair(first, second, Coupling.SYNCHRONOUS)
    config = SdeConfig(dt, workers=params["workers"])

    delta = rho / (5.0 * sigma**2)
    rate, M = contraction_constants(rho, curvature.L, r_star, 1, sigma)
    kde_width = 1.2 * (100.0 * sigma**2) ** 0.25
    family = TestFunctionFamily.hermite(4)
    moments: list[dict[str, float]] = []
    poincare: list[dict[str, float]] = []
    calls = 0

    def on_probe(current: CoupledPair) -> None:
        nonlocal calls
        t = current.first.t
        if calls % params["moment_stride"] == 0:
            monitors = ensemble_monitors(current.first, delta, 2.0)
            if monitors.overflow:
                report.events.append({"kind": "overflow", "metric": "exp_pair_moment", "t": t})
            moments.append(
                {"t": t, "exp_pair_moment": monitors.exp_pair_moment, "stderr": monitors.exp_pair_stderr}
            )
        if calls % params["poincare_stride"] == 0:
            m = GridDensity.from_samples(
                current.first.positions, n=params["kde_cells"], half_width=kde_width, t=t
            )
            bound = uniform_poincare_bound(M, rate, sigma, 1.0, t)
            scan = poincare_scan(m, family, workers=params["workers"])
            poincare.append({"t": t, "poincare_scan": scan.bound, "uniform_bound": bound})
        calls += 1

    run = run_coupled(
        pair, drift, drift, config, T, probe_every=params["probe_every"], on_probe=on_probe
    )
    times = np.array([t for t, _ in run.gap_series])
    gaps = np.array([g for _, g in run.gap_series])
    above = gaps > params["gap_floor"] * gaps[0]
    # The fit stops where the gaps reach roundoff.
    t_max = float(times[above].max()) if above.any() else float(times[-1])
    fit = contraction_fit([(t, g) for t, g, keep in zip(times, gaps, above) if keep])
    report.add_series(
        "gap",
        [{"t": t, "mean_square_gap": g} for t, g in run.gap_series],
        PlotHint("mean_square_gap", rate=-fit.rate, label="fitted rate"),
    )
    report.add_metric("fit_rate", fit.rate)
    report.add_metric("fit_M", fit.M)
    report.add_metric("fit_r_squared", fit.r_squared)
    report.add_metric("fit_t_max", t_max)
    report.check("contraction_rate_positive", "fit_rate", ">", 0.0)
    report.check("contraction_fit_quality", "fit_r_squared", ">=", 0.95)

    report.add_series("exp_pair_moment", moments)
    split = min(0.5, T / 2.0)
    values = np.array([r["exp_pair_moment"] for r in moments])
    stamps = np.array([r["t"] for r in moments])
    early = values[stamps <= split + 1e-12]
    late = values[stamps >= split - 1e-12]
    report.add_metric("exp_moment_excess", float(late.max() / early.max()))
    report.check("gaussian_moment_bounded", "exp_moment_excess", "<=", 1.1)
    report.add_metric(
        "gaussian_moment_bound",
        gaussian_moment_bound(rho / 5.0, rho, curvature.L, curvature.R, 1, float(values[0]), T).bound,
    )

    report.add_series("poincare", poincare)
    scans = np.array([r["poincare_scan"] for r in poincare])
    bounds = np.array([r["uniform_bound"] for r in poincare])
    report.add_metric("poincare_bound_ratio", float((scans / bounds).max()))
    report.add_metric("poincare_spread", float(scans.max() / scans.min()))
    report.check("poincare_within_uniform_bound", "poincare_bound_ratio", "<=", 1.0)

    # Reflection coupling and the one-dimensional dominating process are descriptive.
    pairs = params["reflection_pairs"]
    reflected = run_coupled(
        CoupledPair(
            ParticleEnsemble.gaussian(pairs, 1, seed + 2),
            ParticleEnsemble.gaussian(pairs, 1, seed + 3, mean=0.5),
            Coupling.REFLECTION,
        ),
        drift,
        drift,
        config,
        min(T, 1.0),
        probe_every=100,
    )
    report.add_metric("reflection_merged_fraction", float(reflected.pair.merged.mean()))
    report.events.extend(reflected.events[:100])
    radii = np.geomspace(1e-2, 10.0, 32)
    profile = np.array([k for _, k in convexity_profile(base, radii, d=1)])
    survival = dominating_radius(
        lambda r: -np.interp(r, radii, profile), 1.0, 1e-3, min(T, 2.0), params["radius_paths"],
        seed=seed,
    )
    report.add_metric("dominating_survival", float(survival.survival[-1]))


@preset(
    Scenario.PERTURBATION_CONVERGENCE,
    defaults={"grid_n": 64, "half_width": 3.5, "dt": 1e-3, "T": 8.0, "sigma": 1.0, "workers": None},
    constants={
        "interaction": 0.5,
        "quartic": 1.0,
        "quadratic": 1.0,
        "relax_T": 20.0,
        "initial_mean": 1.5,
        "initial_variance": 0.5,
        "probes": 17,
    },
    quick={"T": 0.5, "relax_T": 1.0},
    budget_seconds=120.0,
)
def perturbation_convergence(params: dict[str, Any], report: ExperimentReport) -> None:
    eta = params["interaction"]
    U = ConfinementPotential.double_well(params["quartic"], params["quadratic"])

    def pair(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        z = x - y
        return eta * z * np.exp(-0.5 * np.sum(z**2, axis=-1, keepdims=True))

    drift = DriftSpec.mckean(lambda x: -U.gradient(x), pair, sigma=params["sigma"])
    n, L, dt = params["grid_n"], params["half_width"], params["dt"]
    relaxed = evolve(
        GridDensity.gaussian(d=1, n=n, half_width=L),
        drift,
        PdeConfig(dt, params["relax_T"], workers=params["workers"]),
        keep_snapshots=False,
    )
    m_star = relaxed.final.with_values(relaxed.final.values, t=0.0)
    m0 = GridDensity.gaussian(
        d=1, n=n, half_width=L, mean=params["initial_mean"], variance=params["initial_variance"]
    )

    def on_probe(m: GridDensity) -> dict[str, float]:
        sup_phi, sup_g = perturbation_potential(m, m_star, drift)
        tv = total_variation(m, m_star)
        return {
            "sup_phi": sup_phi,
            "sup_g": sup_g,
            "tv": tv,
            "phi_over_sqrt_tv": sup_phi / math.sqrt(tv) if tv > 0 else math.nan,
        }

    T = params["T"]
    run = evolve(
        m0,
        drift,
        PdeConfig(dt, T, workers=params["workers"]),
        list(np.linspace(0.0, T, params["probes"])),
        on_probe=on_probe,
        keep_snapshots=False,
    )
    records = [{k: r[k] for k in ("t", "sup_phi", "sup_g", "tv", "phi_over_sqrt_tv")} for r in run.records]
    report.add_series("perturbation", records, PlotHint("sup_phi", label="sup |phi_t|"))
    times = _column(records, "t")
    phi = _column(records, "sup_phi")
    report.add_metric("phi_decay_ratio", float(phi[-1] / phi[0]))
    report.add_metric("phi_envelope_excess", _envelope_excess(phi))
    report.add_metric("phi_rate", _fit_rate(times, phi)[0])
    report.add_metric("phi_tv_constant", float(np.nanmax(_column(records, "phi_over_sqrt_tv"))))
    report.check("phi_decays", "phi_decay_ratio", "<", 0.1)
    report.check("phi_non_increasing", "phi_envelope_excess", "<=", 1.0)


# --------------------------------------------------------------------------- #
# Vortex model
# --------------------------------------------------------------------------- #

_VORTEX_DEFAULTS = {
    "grid_n": 128,
    "half_width": 4.0,
    "eps": None,
    "dt": 2e-4,
    "T": 2.0,
    "sigma": 1.0,
    "kappa_u": 1.0,
    "m_abs": 1.0,
    "workers": None,
}
_VORTEX_CONSTANTS = {"shift": 0.5, "initial_variance": 0.7, "boundary_tolerance": 1e-4}
_VORTEX_QUICK = {"grid_n": 64, "dt": 1e-3, "T": 0.5}


@dataclass(frozen=True)
class _VortexFlow:
    kernel: RieszKernel
    confinement: ConfinementPotential
    m0: GridDensity
    m_star: GridDensity
    config: PdeConfig
    eps: float

    def convolver(self) -> LatticeConvolver:
        return lattice_convolver(
            self.kernel,
            Mollifier(self.eps),
            self.m0.n,
            self.m0.half_width,
            ConvolutionMode.SPECTRAL,
            KernelSampling.LATTICE,
            self.config.workers,
        )


def _vortex_flow(params: Mapping[str, Any]) -> _VortexFlow:
    n, L = params["grid_n"], params["half_width"]
    sigma, kappa = params["sigma"], params["kappa_u"]
    eps = params["eps"] if params["eps"] is not None else 2.0 * (2.0 * L / n)
    confinement = ConfinementPotential.quadratic(kappa)
    m_star = invariant_gaussian(
        confinement, d=2, n=n, half_width=L, sigma=sigma,
        boundary_tol=params["boundary_tolerance"],
    )
    m0 = GridDensity.gaussian(
        d=2,
        n=n,
        half_width=L,
        mean=(params["shift"], 0.0),
        variance=params["initial_variance"] * sigma**2 / kappa,
    )
    config = PdeConfig(params["dt"], params["T"], eps=eps, sigma=sigma, workers=params["workers"])
    return _VortexFlow(RieszKernel.vortex(params["m_abs"]), confinement, m0, m_star, config, eps)


@preset(
    Scenario.VORTEX_ENTROPY_DECAY,
    defaults=_VORTEX_DEFAULTS,
    constants={**_VORTEX_CONSTANTS, "probe_spacing": 0.1},
    quick=_VORTEX_QUICK,
    budget_seconds=600.0,
)
def vortex_entropy_decay(params: dict[str, Any], report: ExperimentReport) -> None:
    flow = _vortex_flow(params)
    convolver = flow.convolver()
    kappa = params["kappa_u"]

    def on_probe(m: GridDensity) -> dict[str, float]:
        grad, hess, decay = log_density_diagnostics(m, flow.m_star, convolver=convolver)
        return {
            "entropy": relative_entropy(m, flow.m_star),
            "grad_u": grad,
            "hess_u": hess,
            "hess_envelope": hess * math.sqrt(min(m.t, 1.0)),
            "kernel_decay": decay,
        }

    T = params["T"]
    probes = list(np.arange(0.0, T + 1e-9, params["probe_spacing"]))
    run = run_meanfield(
        flow.m0, flow.kernel, flow.confinement, flow.config, probes,
        on_probe=on_probe, keep_snapshots=False,
    )
    report.events.extend(run.events)
    columns = ("t", "entropy", "grad_u", "hess_u", "hess_envelope", "kernel_decay", "mass")
    records = [{k: r[k] for k in columns} for r in run.records]
    report.add_series(
        "entropy", records, PlotHint("entropy", rate=-2.0 * kappa, label="exp(-2 kappa_U t)")
    )
    times = _column(records, "t")
    entropy = _column(records, "entropy")
    grad = _column(records, "grad_u")
    envelope = _column(records, "hess_envelope")
    after = times >= FIT_START - 1e-12

    rate, r_squared = _fit_rate(times, entropy)
    report.add_metric("entropy_rate", rate)
    report.add_metric("entropy_fit_r_squared", r_squared)
    report.add_metric("entropy_rate_target", -2.0 * kappa)
    report.add_metric("fit_window_start", FIT_START)
    report.add_metric("grad_u_ratio", float(grad[after][0] / grad[-1]) if after.any() else math.nan)
    report.add_metric("grad_u_rate", _fit_rate(times, grad)[0])
    report.add_metric("hess_envelope_excess", _envelope_excess(envelope[after]))
    report.add_metric("mass_drift", float(np.abs(_column(records, "mass") - records[0]["mass"]).max()))
    report.check("entropy_decay_rate", "entropy_rate", "<=", -0.9 * 2.0 * kappa)
    report.check("log_gradient_decay", "grad_u_ratio", ">=", 5.0)
    report.check("log_gradient_rate_negative", "grad_u_rate", "<", 0.0)
    report.check("hessian_envelope", "hess_envelope_excess", "<=", 1.1)


@preset(
    Scenario.VORTEX_TWO_PARTICLE,
    defaults={"dt": 1e-4, "T": 1.0, "kappa_u": 1.0, "m_abs": 1.0, "seed": 0, "workers": None},
    constants={"initial_distance": 1.0},
    quick={"T": 0.1},
    budget_seconds=1.0,
)
def vortex_two_particle(params: dict[str, Any], report: ExperimentReport) -> None:
    kappa, r0, T = params["kappa_u"], params["initial_distance"], params["T"]
    drift = DriftSpec.log_riesz(
        RieszKernel.vortex(params["m_abs"]), ConfinementPotential.quadratic(kappa), sigma=0.0
    )
    ensemble = ParticleEnsemble.from_positions(
        [[0.5 * r0, 0.0], [-0.5 * r0, 0.0]], params["seed"]
    )
    config = SdeConfig(params["dt"], Scheme.RK4_DETERMINISTIC, workers=params["workers"])
    steps = int(round(T / params["dt"]))

    def on_probe(current: ParticleEnsemble) -> dict[str, float]:
        gap = current.positions[0] - current.positions[1]
        return {"distance": float(np.linalg.norm(gap)), "angle": float(math.atan2(gap[1], gap[0]))}

    result = simulate(ensemble, drift, config, T, probe_every=max(1, steps // 100), on_probe=on_probe)
    report.events.extend(result.events)
    report.add_series(
        "distance",
        [{k: r[k] for k in ("t", "distance", "angle")} for r in result.records],
        PlotHint("distance", rate=-kappa, label="exp(-kappa_U t)"),
    )
    ratio = result.records[-1]["distance"] / r0
    expected = math.exp(-kappa * result.ensemble.t)
    report.add_metric("radius_ratio", ratio)
    report.add_metric("expected_ratio", expected)
    report.add_metric("radius_ratio_error", abs(ratio - expected))
    report.check("radius_oracle", "radius_ratio_error", "<=", 1e-6)


@preset(
    Scenario.JABIN_WANG_CANCELLATION,
    defaults=_VORTEX_DEFAULTS,
    constants={**_VORTEX_CONSTANTS, "samples": 256},
    quick=_VORTEX_QUICK,
    budget_seconds=120.0,
)
def jabin_wang_cancellation(params: dict[str, Any], report: ExperimentReport) -> None:
    flow = _vortex_flow(params)
    convolver = flow.convolver()

    def on_probe(m: GridDensity) -> dict[str, float]:
        check = jabin_wang_phi(m, convolver, samples=params["samples"])
        return {
            "sup_phi": check.sup_phi,
            "max_residual": check.max_residual,
            "relative_residual": check.relative_residual,
        }

    T = params["T"]
    run = run_meanfield(
        flow.m0, flow.kernel, flow.confinement, flow.config, [T / 4, T / 2, T],
        on_probe=on_probe, keep_snapshots=False,
    )
    records = [{k: r[k] for k in ("t", "sup_phi", "max_residual", "relative_residual")} for r in run.records]
    report.add_series("cancellation", records)
    report.add_metric("max_relative_residual", float(_column(records, "relative_residual").max()))
    report.add_metric("min_sup_phi", float(_column(records, "sup_phi").min()))
    report.check("marginal_cancellation", "max_relative_residual", "<=", 1e-6)


@preset(
    Scenario.VORTEX_POC_SCALING,
    defaults={
        "N": 1024,
        "dt": 1e-3,
        "T": 2.0,
        "grid_n": 64,
        "half_width": 4.0,
        "eps": None,
        "sigma": 1.0,
        "kappa_u": 1.0,
        "m_abs": 1.0,
        "seed": 0,
        "workers": None,
    },
    constants={
        **_VORTEX_CONSTANTS,
        "replicas": 8,
        "bandwidth": 0.25,
        "resamples": 32,
        "m_sweep": (0.5, 1.0, 2.0, 4.0),
        "sweep_replicas": 4,
    },
    quick={"N": 256, "T": 0.5, "m_sweep": (1.0,)},
    budget_seconds=1200.0,
)
def vortex_poc_scaling(params: dict[str, Any], report: ExperimentReport) -> None:
    T, N_max = params["T"], params["N"]
    sizes = [N_max // 16, N_max // 4, N_max]
    probe_times = [T / 4, T / 2, T]

    def mean_field(m_abs: float) -> tuple[dict[int, GridDensity], _VortexFlow]:
        flow = _vortex_flow({**params, "m_abs": m_abs})
        run = run_meanfield(flow.m0, flow.kernel, flow.confinement, flow.config, probe_times)
        return {int(round(s.t / params["dt"])): s for s in run.snapshots}, flow

    def pooled_kl(
        N: int, replicas: int, references: dict[int, GridDensity], flow: _VortexFlow
    ) -> dict[int, Any]:
        drift = DriftSpec.log_riesz(flow.kernel, flow.confinement, Mollifier(flow.eps), params["sigma"])
        config = SdeConfig(params["dt"], workers=params["workers"])
        every = max(1, int(round(probe_times[0] / params["dt"])))
        pools: dict[int, list[np.ndarray]] = {step: [] for step in references}
        for r in range(replicas):
            seed = params["seed"] + 7919 * r + N

            def keep(current: ParticleEnsemble) -> dict[str, float]:
                if current.step in pools:
                    pools[current.step].append(current.positions.copy())
                return {}

            result = simulate(sample_from_grid(flow.m0, N, seed), drift, config, T, probe_every=every, on_probe=keep)
            report.events.extend(result.events)
        return {
            step: marginal_kl(
                ParticleEnsemble.from_positions(np.concatenate(chunks), params["seed"]),
                references[step],
                "kde-grid",
                resamples=params["resamples"],
                bandwidth=params["bandwidth"],
            )
            for step, chunks in pools.items()
        }

    references, flow = mean_field(params["m_abs"])
    steps = sorted(references)
    rows = []
    estimates = {}
    for N in sizes:
        estimates[N] = pooled_kl(N, params["replicas"], references, flow)
        for step in steps:
            e = estimates[N][step]
            rows.append({"t": step * params["dt"], "N": N, "kl": e.value, "stderr": e.stderr})
            logger.info(f"N={N} t={step * params['dt']:.3g}: KL {e.value:.4e} +- {e.stderr:.1e}")
    report.add_series("marginal_kl", rows)

    middle = steps[len(steps) // 2]
    at_middle = [estimates[N][middle] for N in sizes]
    separations = [
        (a.value - b.value) / math.hypot(a.stderr, b.stderr)
        for a, b in zip(at_middle, at_middle[1:])
    ]
    slope = np.polyfit(np.log(sizes), np.log([max(e.value, 1e-300) for e in at_middle]), 1)[0]
    largest = [estimates[N_max][step] for step in steps]
    excess = [
        (b.value - a.value) / math.hypot(a.stderr, b.stderr) for a, b in zip(largest, largest[1:])
    ]
    report.add_metric("n_separation_sigma", min(separations))
    report.add_metric("kl_log_slope", float(slope))
    report.add_metric("t_excess_sigma", max(excess))
    report.add_metric(
        "min_kl", min(e.value for N in sizes for e in estimates[N].values())
    )
    report.check("kl_decreasing_in_N", "n_separation_sigma", ">=", 2.0)
    report.check("kl_slope_in_N", "kl_log_slope", "<=", -0.5)
    report.check("kl_nonincreasing_in_t", "t_excess_sigma", "<=", 2.0)
    report.check("kl_admissible", "min_kl", ">=", -0.05)

    # The interaction-strength sweep is descriptive: where decay in t is lost.
    sweep_rows = []
    lost_at = math.nan
    for m_abs in params["m_sweep"]:
        sweep_refs, sweep_flow = mean_field(m_abs)
        sweep = pooled_kl(N_max // 4, params["sweep_replicas"], sweep_refs, sweep_flow)
        ordered = [sweep[s] for s in sorted(sweep)]
        ratio = ordered[-1].value / ordered[0].value if ordered[0].value > 0 else math.nan
        sweep_rows.append({"t": T, "m_abs": m_abs, "kl_ratio": ratio})
        if ratio >= 1.0 and math.isnan(lost_at):
            lost_at = m_abs
    report.add_series("m_sweep", sweep_rows)
    report.add_metric("decay_lost_at_m_abs", lost_at)


@preset(
    Scenario.RIESZ_CONVOLUTION_BOUNDS,
    defaults={"grid_n": 64, "half_width": 8.0},
    constants={
        "s_values": (0.5, 0.9),
        "p": math.inf,
        "holder_theta": 0.5,
        "scales": (0.5, 1.0, 2.0),
        "mixture_centers": (-2.0, 2.0),
        "mixture_variance": 0.5,
    },
    quick={"grid_n": 32},
    budget_seconds=120.0,
)
def riesz_convolution_bounds(params: dict[str, Any], report: ExperimentReport) -> None:
    n, L, p = params["grid_n"], params["half_width"], params["p"]
    variance = params["mixture_variance"]
    centers = np.array([[c, 0.0] for c in params["mixture_centers"]])

    def mixture(points: np.ndarray) -> np.ndarray:
        return sum(
            np.exp(-np.sum((points - c) ** 2, axis=1) / (2.0 * variance)) for c in centers
        )

    m = GridDensity.from_function(mixture, d=2, n=n, half_width=L)
    rows = []
    branches = [(s, None) for s in params["s_values"]] + [(0.0, params["holder_theta"])]
    for s, theta in branches:
        tag = f"s{s:g}" if theta is None else f"s{s:g}_theta{theta:g}"
        constant = calibrate_convolution_constant(s, p, theta, d=2, n=n, half_width=L)
        ratios = {}
        for scale in params["scales"]:
            check = convolution_inequality_check(m.rescaled(scale), s, p, theta, constant)
            ratios[scale] = check.ratio
            rows.append({"t": 0.0, "s": s, "scale": scale, "ratio": check.ratio, "constant": constant})
        spread = max(abs(r / ratios[1.0] - 1.0) for r in ratios.values())
        report.add_metric(f"{tag}_constant", constant)
        report.add_metric(f"{tag}_scale_spread", spread)
        report.add_metric(f"{tag}_constant_margin", constant - max(ratios.values()))
        report.check(f"{tag}_scale_invariant", f"{tag}_scale_spread", "<=", 0.02)
        report.check(f"{tag}_bounded", f"{tag}_constant_margin", ">=", 0.0)
        if theta is None:
            gaussian = convolution_inequality_check(
                GridDensity.gaussian(d=2, n=n, half_width=L), s, p
            ).ratio
            exact = gaussian_sup_ratio(s)
            report.add_metric(f"{tag}_gaussian_error", abs(gaussian / exact - 1.0))
            report.check(f"{tag}_gaussian_closed_form", f"{tag}_gaussian_error", "<=", 0.02)
    report.add_series("ratios", rows)


@preset(
    Scenario.WELLPOSEDNESS_MONITORS,
    defaults={
        "N": 64,
        "dt": 1e-3,
        "T": 2.0,
        "sigma": 1.0,
        "kappa_u": 1.0,
        "m_abs": 1.0,
        "seed": 0,
        "workers": None,
    },
    constants={
        "seeds": 8,
        "eps_levels": (1e-1, 1e-2, 1e-3),
        "collision_threshold": 1e-6,
        "probe_every": 10,
    },
    quick={"T": 0.2, "seeds": 2},
    budget_seconds=300.0,
)
def wellposedness_monitors(params: dict[str, Any], report: ExperimentReport) -> None:
    sigma, kappa = params["sigma"], params["kappa_u"]
    kernel = RieszKernel.vortex(params["m_abs"])
    confinement = ConfinementPotential.quadratic(kappa)
    config = SdeConfig(
        params["dt"],
        collision_threshold=params["collision_threshold"],
        monitor_energy=True,
        workers=params["workers"],
    )
    levels = list(params["eps_levels"])
    threshold = params["collision_threshold"]
    sup_gaps = np.zeros(len(levels) - 1)
    near_collisions = dict.fromkeys(levels, 0)
    raw_collisions = 0
    energy: list[np.ndarray] = []
    moments: list[np.ndarray] = []
    times = None

    for r in range(params["seeds"]):
        seed = params["seed"] + r
        start = ParticleEnsemble.gaussian(params["N"], 2, seed, std=sigma / math.sqrt(kappa))
        paths = {}
        for eps in levels:
            drift = DriftSpec.log_riesz(kernel, confinement, Mollifier(eps), sigma)
            snapshots: list[np.ndarray] = []

            def keep(current: ParticleEnsemble) -> dict[str, float]:
                snapshots.append(current.positions.copy())
                return {}

            result = simulate(
                start, drift, config, params["T"], probe_every=params["probe_every"], on_probe=keep
            )
            paths[eps] = np.stack(snapshots)
            near_collisions[eps] += sum(rec["min_distance"] < threshold for rec in result.records)
            if eps == levels[0]:
                energy.append(_column(result.records, "energy"))
                moments.append(_column(result.records, "second_moment"))
                times = _column(result.records, "t")
        for k in range(len(levels) - 1):
            gap = np.linalg.norm(paths[levels[k]] - paths[levels[k + 1]], axis=-1).max()
            sup_gaps[k] = max(sup_gaps[k], float(gap))
        raw = simulate(
            start, DriftSpec.log_riesz(kernel, confinement, None, sigma), config, params["T"],
            probe_every=params["probe_every"],
        )
        raw_collisions += len(raw.events)
        report.events.extend(raw.events)

    mean_energy = np.mean(energy, axis=0)
    mean_moment = np.mean(moments, axis=0)
    report.add_series(
        "monitors",
        [
            {"t": t, "energy": e, "second_moment": v}
            for t, e, v in zip(times, mean_energy, mean_moment)
        ],
    )
    late = times >= params["T"] / 4 - 1e-12
    report.add_metric(
        "energy_growth",
        float((mean_energy.max() - mean_energy[0]) / max(1.0, abs(mean_energy[0]))),
    )
    report.add_metric("moment_flatness", float(mean_moment[late].max() / mean_moment[late].min()))
    for k in range(len(levels) - 1):
        report.add_metric(f"sup_gap_{levels[k]:g}_{levels[k + 1]:g}", sup_gaps[k])
    report.add_metric(
        "cauchy_ratio", float(sup_gaps[-1] / sup_gaps[0]) if sup_gaps[0] > 0 else math.inf
    )
    report.add_metric(
        "collisions_mollified",
        float(sum(near_collisions[eps] for eps in levels if eps >= 1e-2)),
    )
    report.add_metric("collisions_raw", float(raw_collisions))
    report.check("energy_bounded", "energy_growth", "<=", 0.5)
    report.check("moment_flat", "moment_flatness", "<=", 1.5)
    report.check("mollified_trajectories_converge", "cauchy_ratio", "<", 1.0)
    report.check("no_collisions_when_mollified", "collisions_mollified", "<=", 0.0)


# --------------------------------------------------------------------------- #
# Entry point
# --------------------------------------------------------------------------- #


def get_preset(name: str | Scenario) -> Preset:
    try:
        return PRESETS[Scenario(name)]
    except ValueError:
        known = ", ".join(s.value for s in Scenario)
        raise PresetNotFoundError(f"no preset named {name!r}; known presets: {known}") from None


def resolve_parameters(
    preset_: Preset, overrides: Mapping[str, Any] | None = None, *, quick: bool = False
) -> tuple[dict[str, Any], list[str]]:
    """Merge defaults, constants, quick settings and overrides.

    Returns the effective parameters and the override keys the preset does
    not consume.
    """
    params = {**preset_.defaults, **preset_.constants}
    if quick:
        params.update(preset_.quick)
    ignored = []
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in OVERRIDE_KEYS:
            raise ValueError(f"{key!r} is not an experiment override")
        if key in preset_.defaults:
            params[key] = value
        else:
            ignored.append(key)
    return params, sorted(ignored)


def run_experiment(
    name: str | Scenario,
    overrides: Mapping[str, Any] | Any | None = None,
    *,
    quick: bool = False,
) -> ExperimentReport:
    """Run a preset and return its report.

    ``overrides`` is a mapping of run-configuration keys or an object with an
    ``overrides()`` method (such as ``RunConfig``). Engine and solver errors
    propagate with a note naming the preset.

    Raises
    ------
    PresetNotFoundError
        No preset is registered under ``name``.
    """
    spec = get_preset(name)
    if overrides is not None and hasattr(overrides, "overrides"):
        overrides = overrides.overrides()
    params, ignored = resolve_parameters(spec, overrides, quick=quick)
    if ignored:
        logger.warning(f"{spec.scenario.value} ignores overrides: {', '.join(ignored)}")
    report = ExperimentReport(
        spec.scenario.value,
        parameters={k: _echo(v) for k, v in sorted(params.items())} | {"ignored": ignored},
    )
    logger.info(f"running {spec.scenario.value}{' (quick)' if quick else ''}")
    start = time.perf_counter()
    try:
        spec.runner(params, report)
    except MeanFieldLabError as err:
        if hasattr(err, "as_event"):
            report.events.append(err.as_event())
        err.add_note(f"while running preset {spec.scenario.value!r}")
        # The partial report keeps the events recorded before the abort.
        err.report = report
        raise
    runtime = time.perf_counter() - start
    report.provenance = {
        "seed": params.get("seed"),
        "grid": {k: params[k] for k in ("grid_n", "half_width") if k in params},
        "dt": params.get("dt"),
        "quick": quick,
        "runtime_seconds": runtime,
        "budget_seconds": spec.budget_seconds,
    }
    if runtime > spec.budget_seconds and not quick:
        logger.warning(
            f"{spec.scenario.value} took {runtime:.1f}s, over its {spec.budget_seconds:.0f}s budget"
        )
    status = "pass" if report.passed else "FAIL"
    logger.info(f"{spec.scenario.value}: {status} in {runtime:.2f}s")
    return report


def _echo(value: Any) -> Any:
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value
