#!/usr/bin/env python3
"""Tests for the particle engine, couplings and well-posedness monitors."""

import math

import numpy as np
import pytest
from scipy import special

from meanfieldlab.errors import CollisionError, EstimatorError, SingularityError
from meanfieldlab.kernels import ConfinementPotential, DriftSpec, RieszKernel
from meanfieldlab.sde import (
    CoupledPair,
    Coupling,
    ParticleEnsemble,
    Scheme,
    SdeConfig,
    contraction_fit,
    dominating_radius,
    energy_functional,
    ensemble_monitors,
    pair_energy,
    run_coupled,
    simulate,
    step_particles,
)

LINEAR = DriftSpec.explicit(lambda t, x: -x, sigma=1.0)


def vortex_drift(kappa_u: float = 1.0, sigma: float = 0.0) -> DriftSpec:
    return DriftSpec.log_riesz(
        RieszKernel.vortex(1.0), ConfinementPotential.quadratic(kappa_u), sigma=sigma
    )


class TestParticleEnsemble:
    """Ensemble construction and stepping basics."""

    def test_gaussian_is_reproducible(self):
        first = ParticleEnsemble.gaussian(100, 2, seed=42)
        again = ParticleEnsemble.gaussian(100, 2, seed=42)
        other = ParticleEnsemble.gaussian(100, 2, seed=43)
        np.testing.assert_array_equal(first.positions, again.positions)
        assert not np.array_equal(first.positions, other.positions)
        assert first.N == 100 and first.d == 2

    def test_positions_are_read_only(self):
        ensemble = ParticleEnsemble.from_positions([[0.0, 1.0], [2.0, 3.0]])
        with pytest.raises(ValueError):
            ensemble.positions[0, 0] = 5.0

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            ParticleEnsemble.from_positions([[np.nan, 0.0]])
        with pytest.raises(ValueError):
            ParticleEnsemble(np.zeros((3, 2)), labels=[0, 1])
        with pytest.raises(ValueError):
            SdeConfig(dt=0.0)

    def test_zero_drift_without_noise(self):
        """b = 0 and sigma = 0 leave positions unchanged."""
        drift = DriftSpec.explicit(lambda t, x: np.zeros_like(x), sigma=0.0)
        ensemble = ParticleEnsemble.gaussian(20, 3, seed=1)
        stepped = step_particles(ensemble, drift, SdeConfig(dt=0.01))
        np.testing.assert_array_equal(stepped.positions, ensemble.positions)
        assert stepped.t == 0.01
        assert stepped.step == 1
        print("✅ Zero-drift step test passed")

    def test_rk4_requires_zero_noise(self):
        ensemble = ParticleEnsemble.gaussian(4, 1, seed=0)
        with pytest.raises(ValueError):
            step_particles(ensemble, LINEAR, SdeConfig(dt=0.01, scheme=Scheme.RK4_DETERMINISTIC))

    @pytest.mark.slow
    def test_linear_stationary_variance(self):
        """b(x) = -x, sigma = 1 keeps the N(0, 1) law."""
        ensemble = ParticleEnsemble.gaussian(100_000, 1, seed=7)
        config = SdeConfig(dt=0.005)
        for _ in range(2000):
            ensemble = step_particles(ensemble, LINEAR, config)
        variance = float(np.var(ensemble.positions))
        mean = float(np.mean(ensemble.positions))
        assert abs(variance - 1.0) < 0.02, f"variance {variance}"
        assert abs(mean) < 0.015, f"mean {mean}"
        print(f"📊 Variance at t={ensemble.t:.1f}: {variance:.4f}")


class TestVortexParticles:
    """Deterministic and stochastic runs of the point-vortex system."""

    def test_two_vortices_spiral_in(self):
        """The relative radius decays like exp(-kappa_U t)."""
        ensemble = ParticleEnsemble.from_positions([[0.5, 0.0], [-0.5, 0.0]])
        config = SdeConfig(dt=1e-3, scheme=Scheme.RK4_DETERMINISTIC)
        result = simulate(ensemble, vortex_drift(), config, 1.0, probe_every=250)
        final = result.ensemble.positions
        ratio = float(np.linalg.norm(final[0] - final[1]))
        assert not result.halted
        assert abs(ratio - math.exp(-1.0)) < 1e-6, f"ratio {ratio}"
        assert [round(r["t"], 9) for r in result.records] == [0.0, 0.25, 0.5, 0.75, 1.0]
        np.testing.assert_allclose(final[0], -final[1], atol=1e-14)
        print(f"✅ Two-vortex radius ratio {ratio:.10f}")

    def test_pair_energy_conserved_without_confinement(self):
        """The deterministic vortex flow with U = 0 conserves the pair energy."""
        ensemble = ParticleEnsemble.from_positions(
            [[1.0, 0.0], [0.0, 1.2], [-1.0, 0.3], [0.2, -1.0], [-0.5, -0.6]]
        )
        drift = vortex_drift(kappa_u=0.0)
        config = SdeConfig(dt=1e-3, scheme=Scheme.RK4_DETERMINISTIC)
        kernel = drift.kernel
        before = pair_energy(ensemble, kernel)
        for _ in range(500):
            ensemble = step_particles(ensemble, drift, config)
        after = pair_energy(ensemble, kernel)
        assert abs(after - before) <= 1e-7 * abs(before), f"{before} -> {after}"

    def test_worker_count_does_not_change_trajectories(self):
        ensemble = ParticleEnsemble.gaussian(64, 2, seed=5)
        drift = vortex_drift(sigma=1.0)
        runs = []
        for workers in (1, 2):
            config = SdeConfig(dt=1e-3, mollification_eps=0.05, workers=workers)
            current = ensemble
            for _ in range(10):
                current = step_particles(current, drift, config)
            runs.append(current.positions)
        np.testing.assert_array_equal(runs[0], runs[1])
        print("✅ Worker determinism test passed")

    def test_permutation_commutes_with_stepping(self):
        ensemble = ParticleEnsemble.gaussian(32, 2, seed=9)
        order = np.random.default_rng(0).permutation(32)
        drift = vortex_drift(sigma=1.0)
        config = SdeConfig(dt=1e-3, mollification_eps=0.05)
        plain, permuted = ensemble, ensemble.permuted(order)
        for _ in range(5):
            plain = step_particles(plain, drift, config)
            permuted = step_particles(permuted, drift, config)
        np.testing.assert_array_equal(permuted.labels, order)
        np.testing.assert_allclose(permuted.positions, plain.positions[order], rtol=0, atol=1e-12)

    def test_collision_halts_raw_run(self):
        ensemble = ParticleEnsemble.from_positions([[0.0, 0.0], [1e-7, 0.0], [1.0, 1.0]])
        config = SdeConfig(dt=1e-3)
        with pytest.raises(CollisionError) as info:
            step_particles(ensemble, vortex_drift(sigma=1.0), config)
        assert {info.value.i, info.value.j} == {0, 1}

        result = simulate(ensemble, vortex_drift(sigma=1.0), config, 0.1)
        assert result.halted
        assert result.events[0]["kind"] == "collision"
        assert len(result.records) == 1

    def test_mollified_run_never_collides(self):
        ensemble = ParticleEnsemble.from_positions([[0.0, 0.0], [1e-7, 0.0], [1.0, 1.0]])
        config = SdeConfig(dt=1e-3, mollification_eps=0.01)
        result = simulate(ensemble, vortex_drift(sigma=1.0), config, 0.05, probe_every=10)
        assert not result.halted
        assert result.events == []

    def test_simulate_records_energy(self):
        ensemble = ParticleEnsemble.gaussian(16, 2, seed=3)
        config = SdeConfig(dt=1e-3, mollification_eps=0.05, monitor_energy=True)
        result = simulate(ensemble, vortex_drift(sigma=1.0), config, 0.01, probe_every=5)
        assert len(result.records) == 3
        assert set(result.records[0]) == {
            "t", "min_distance", "second_moment", "exp_pair_moment", "energy",
        }


class TestCouplings:
    """Synchronous and reflection couplings and the contraction fit."""

    def test_synchronous_identical_start(self):
        ensemble = ParticleEnsemble.gaussian(50, 2, seed=2)
        pair = CoupledPair(ensemble, ParticleEnsemble.from_positions(ensemble.positions, seed=2))
        run = run_coupled(pair, LINEAR, LINEAR, SdeConfig(dt=1e-2), 0.5, probe_every=10)
        np.testing.assert_array_equal(run.pair.first.positions, run.pair.second.positions)
        assert all(gap == 0.0 for _, gap in run.gap_series)

    def test_synchronous_linear_contraction(self):
        """Under b(x) = -x the gap shrinks by (1 - dt) per step."""
        dt = 1e-3
        first = ParticleEnsemble.gaussian(50, 1, seed=4)
        second = ParticleEnsemble.from_positions(first.positions + 1.0, seed=99)
        run = run_coupled(CoupledPair(first, second), LINEAR, LINEAR, SdeConfig(dt=dt), 1.0)
        gaps = run.pair.gaps()
        np.testing.assert_allclose(gaps, (1.0 - dt) ** 1000, rtol=1e-10)
        assert abs(gaps[0] / math.exp(-1.0) - 1.0) < 1e-3
        fit = contraction_fit(run.gap_series)
        assert math.isclose(fit.rate, -2.0 * math.log1p(-dt) / dt, rel_tol=1e-8)
        assert fit.r_squared > 0.999999
        print(f"✅ Synchronous contraction rate {fit.rate:.6f}")

    @pytest.mark.slow
    def test_reflection_meeting_probability(self):
        """Merged fraction against the absorbed OU radius and its closed form."""
        n = 2000
        first = ParticleEnsemble.from_positions(np.full((n, 1), 0.5), seed=3)
        second = ParticleEnsemble.from_positions(np.full((n, 1), -0.5), seed=4)
        pair = CoupledPair(first, second, Coupling.REFLECTION)
        run = run_coupled(pair, LINEAR, LINEAR, SdeConfig(dt=1e-3), 1.0)
        merged = float(run.pair.merged.mean())
        merged_rows = run.pair.merged
        np.testing.assert_array_equal(
            run.pair.first.positions[merged_rows], run.pair.second.positions[merged_rows]
        )
        assert len(run.events) == int(merged_rows.sum())

        curve = dominating_radius(np.ones_like, 1.0, 1e-3, 1.0, n, seed=11)
        exact = 2.0 * special.ndtr(-1.0 / math.sqrt(4.0 * (math.exp(2.0) - 1.0)))
        assert abs(merged - (1.0 - curve.survival[-1])) < 0.05
        assert abs(merged - exact) < 0.05, f"merged {merged:.3f} vs {exact:.3f}"
        print(f"📊 Merged fraction {merged:.3f}, closed form {exact:.3f}")

    def test_contraction_fit_exact(self):
        t = np.linspace(0.0, 2.0, 11)
        fit = contraction_fit(list(zip(t, 2.0 * np.exp(-3.0 * t))))
        assert math.isclose(fit.M, 2.0, rel_tol=1e-10)
        assert math.isclose(fit.rate, 3.0, rel_tol=1e-10)
        assert math.isclose(fit.r_squared, 1.0, rel_tol=1e-10)

    def test_contraction_fit_constant(self):
        fit = contraction_fit([(float(t), 1.0) for t in range(6)])
        assert abs(fit.rate) < 1e-12
        assert fit.M == 1.0
        assert fit.r_squared == 1.0

    def test_contraction_fit_errors(self):
        with pytest.raises(EstimatorError):
            contraction_fit([(0.0, 1.0), (1.0, 0.5)])
        with pytest.raises(EstimatorError):
            contraction_fit([(float(t), 1.0 - t) for t in range(6)])

    def test_mismatched_shapes(self):
        with pytest.raises(ValueError):
            CoupledPair(
                ParticleEnsemble.gaussian(3, 2, seed=0), ParticleEnsemble.gaussian(4, 2, seed=0)
            )


class TestMonitors:
    """Energy, moments and the dominating radius."""

    def test_two_particle_energy(self):
        ensemble = ParticleEnsemble.from_positions([[0.5, 0.0], [-0.5, 0.0]])
        assert energy_functional(ensemble, RieszKernel.vortex()) == 0.5

    def test_energy_grows_as_pair_approaches(self):
        kernel = RieszKernel.vortex()
        energies = [
            energy_functional(
                ParticleEnsemble.from_positions([[gap / 2, 0.0], [-gap / 2, 0.0]]), kernel
            )
            for gap in (0.1, 0.01, 0.001)
        ]
        assert energies[0] < energies[1] < energies[2]

    def test_energy_singular_for_coincident_particles(self):
        ensemble = ParticleEnsemble.from_positions([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(SingularityError):
            energy_functional(ensemble, RieszKernel.vortex())

    def test_riesz_energy_vanishes_far_apart(self):
        kernel = RieszKernel(3, 0.5, -np.eye(3))
        energies = [
            energy_functional(
                ParticleEnsemble.from_positions([[0.0, 0.0, 0.0], [gap, 0.0, 0.0]]), kernel
            )
            for gap in (1e3, 1e6)
        ]
        assert energies[0] > energies[1] > 0.0

    def test_monitors_at_origin(self):
        monitors = ensemble_monitors(ParticleEnsemble.from_positions(np.zeros((10, 2))), 0.1, 2)
        assert monitors.min_distance == 0.0
        assert monitors.k_moment == 0.0
        assert monitors.exp_pair_moment == 1.0
        assert monitors.exp_pair_stderr == 0.0
        assert not monitors.overflow

    def test_gaussian_pair_moment(self):
        """E exp(delta |X - Y|^2) = (1 - 4 delta)^(-1/2) for standard normals."""
        delta = 0.1
        ensemble = ParticleEnsemble.gaussian(20_000, 1, seed=1)
        monitors = ensemble_monitors(ensemble, delta, 2)
        exact = (1.0 - 4.0 * delta) ** -0.5
        assert abs(monitors.exp_pair_moment - exact) < 5.0 * monitors.exp_pair_stderr
        assert abs(monitors.k_moment - 1.0) < 0.05
        print(f"📊 Pair moment {monitors.exp_pair_moment:.4f} ± {monitors.exp_pair_stderr:.4f}")

    def test_pair_moment_overflow(self):
        ensemble = ParticleEnsemble.from_positions([[0.0], [100.0]])
        monitors = ensemble_monitors(ensemble, 1.0, 2)
        assert monitors.overflow
        assert monitors.exp_pair_moment == math.inf

    def test_pair_moment_near_the_float_limit(self):
        """Large but representable means stay finite; the sum is never formed."""
        gap = math.sqrt(708.5)
        positions = np.concatenate([np.zeros(1000), np.full(1000, gap)])[:, None]
        monitors = ensemble_monitors(ParticleEnsemble.from_positions(positions), 1.0, 2)
        assert not monitors.overflow
        assert math.isfinite(monitors.exp_pair_moment)
        assert monitors.exp_pair_moment == pytest.approx(math.exp(708.5), rel=1e-9)
        assert monitors.exp_pair_stderr == 0.0

        gap = math.sqrt(709.5)
        positions = np.concatenate([np.zeros(1000), np.full(1000, gap)])[:, None]
        monitors = ensemble_monitors(ParticleEnsemble.from_positions(positions), 1.0, 2)
        assert monitors.overflow
        assert monitors.exp_pair_moment == math.inf
        print("✅ pair moment overflow is decided on the log of the mean")

    def test_overflow_is_an_event(self):
        ensemble = ParticleEnsemble.from_positions([[0.0], [100.0]])
        still = DriftSpec.explicit(lambda t, x: np.zeros_like(x), sigma=0.0)
        result = simulate(ensemble, still, SdeConfig(0.1), 0.2, delta=1.0)
        assert not result.halted
        assert [e["kind"] for e in result.events] == ["overflow"] * 2
        assert result.records[-1]["exp_pair_moment"] == math.inf

    def test_single_particle(self):
        monitors = ensemble_monitors(ParticleEnsemble.from_positions([[1.0, 2.0]]), 0.1, 2)
        assert math.isnan(monitors.exp_pair_moment)
        assert monitors.min_distance == math.inf

    def test_dominating_radius_from_zero(self):
        curve = dominating_radius(np.ones_like, 0.0, 0.01, 1.0, 100)
        assert np.all(curve.survival == 0.0)
        assert len(curve.times) == 101

    def test_dominating_radius_survival_is_monotone(self):
        curve = dominating_radius(lambda r: np.ones_like(r), 1.0, 1e-3, 1.0, 500, seed=2)
        assert curve.survival[0] == 1.0
        assert np.all(np.diff(curve.survival) <= 0.0)
        assert 0.0 < curve.survival[-1] < 1.0


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
