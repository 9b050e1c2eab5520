#!/usr/bin/env python3
"""Tests for the finite-volume Fokker-Planck solver and grid diagnostics."""

import math

import numpy as np
import pytest

from meanfieldlab.diagnostics import relative_entropy
from meanfieldlab.errors import (
    BoxTooSmallError,
    CflError,
    InstabilityError,
    MaskError,
    UnderResolvedKernelError,
)
from meanfieldlab.grid import (
    ConvolutionMode,
    FluxScheme,
    GridDensity,
    LatticeConvolver,
    PdeConfig,
    centered_gradient,
    cell_centers,
    cfl_bound,
    convolve_field,
    evaluation_mask,
    evolve,
    fp_step,
    hessian_norm,
    invariant_gaussian,
    jabin_wang_phi,
    lattice_convolver,
    log_density_diagnostics,
    phi_matrix,
    run_meanfield,
    sample_from_grid,
    total_variation,
)
from meanfieldlab.kernels import ConfinementPotential, DriftSpec, Mollifier, RieszKernel

HEAT = DriftSpec.explicit(lambda t, x: np.zeros_like(x), sigma=1.0)
LINEAR = DriftSpec.explicit(lambda t, x: -x, sigma=1.0)


def tangential(m: GridDensity, field: np.ndarray) -> np.ndarray:
    """``x . field(x)`` at every cell."""
    return np.einsum("...k,...k->...", np.stack(m.mesh(), axis=-1), field)


class TestGridDensity:
    """Construction and elementary functionals of grid densities."""

    def test_cell_centers_are_symmetric(self):
        axis = cell_centers(64, 3.0)
        np.testing.assert_array_equal(axis, -axis[::-1])
        assert math.isclose(axis[1] - axis[0], 6.0 / 64)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            GridDensity(np.ones(12), 1.0)
        with pytest.raises(ValueError):
            GridDensity(np.ones((8, 16)), 1.0)
        with pytest.raises(ValueError):
            GridDensity(np.ones(8), 0.0)

    def test_gaussian_moments(self):
        m = GridDensity.gaussian(d=2, n=128, half_width=8.0, mean=(0.5, -1.0), variance=0.8)
        assert math.isclose(m.mass, 1.0, rel_tol=1e-13)
        np.testing.assert_allclose(m.mean(), [0.5, -1.0], atol=1e-10)
        np.testing.assert_allclose(m.second_moment(), [0.8 + 0.25, 0.8 + 1.0], atol=1e-9)

    def test_rescaling_keeps_mass(self):
        m = GridDensity.gaussian(d=2, n=32, half_width=4.0)
        scaled = m.rescaled(2.0)
        assert scaled.half_width == 2.0
        assert math.isclose(scaled.mass, m.mass, rel_tol=1e-13)
        assert math.isclose(scaled.lp_norm(math.inf), 4.0 * m.lp_norm(math.inf))

    def test_total_variation_needs_shared_grid(self):
        a = GridDensity.gaussian(d=1, n=32, half_width=4.0)
        b = GridDensity.gaussian(d=1, n=32, half_width=5.0)
        assert total_variation(a, a) == 0.0
        with pytest.raises(ValueError):
            total_variation(a, b)

    def test_from_samples(self):
        rng = np.random.default_rng(3)
        m = GridDensity.from_samples(rng.normal(size=20_000), n=128, half_width=6.0, bandwidth=0.1)
        assert math.isclose(m.mass, 1.0, rel_tol=1e-12)
        assert abs(m.mean()[0]) < 0.05
        assert abs(m.second_moment()[0] - 1.0) < 0.1

    def test_from_samples_outside_box(self):
        with pytest.raises(MaskError):
            GridDensity.from_samples(np.full((10, 2), 100.0), n=16, half_width=1.0)

    def test_sample_from_grid(self):
        m = GridDensity.gaussian(d=2, n=64, half_width=6.0)
        ensemble = sample_from_grid(m, 20_000, seed=4)
        assert ensemble.positions.shape == (20_000, 2)
        assert np.all(np.abs(ensemble.positions) <= 6.0)
        np.testing.assert_allclose(ensemble.positions.mean(axis=0), 0.0, atol=0.05)
        np.testing.assert_allclose((ensemble.positions**2).mean(axis=0), 1.0, atol=0.05)
        again = sample_from_grid(m, 20_000, seed=4)
        np.testing.assert_array_equal(ensemble.positions, again.positions)


class TestInvariantGaussian:
    """The Gibbs state of a quadratic confinement."""

    def test_moments_and_symmetry(self):
        m = invariant_gaussian(ConfinementPotential.quadratic(1.0), d=2, n=128, half_width=8.0)
        assert math.isclose(m.mass, 1.0, rel_tol=1e-13)
        np.testing.assert_allclose(m.second_moment(), [1.0, 1.0], atol=1e-9)
        np.testing.assert_array_equal(m.values, m.values[::-1, ::-1])
        np.testing.assert_array_equal(m.values, m.values.T)
        print(f"✅ Invariant Gaussian second moment {m.second_moment()}")

    def test_temperature_scaling(self):
        m = invariant_gaussian(
            ConfinementPotential.quadratic(2.0), d=1, n=256, half_width=8.0, sigma=2.0
        )
        np.testing.assert_allclose(m.second_moment(), [2.0], atol=1e-9)

    def test_box_too_small(self):
        with pytest.raises(BoxTooSmallError):
            invariant_gaussian(ConfinementPotential.quadratic(0.01), d=1, n=64, half_width=2.0)

    def test_needs_quadratic(self):
        with pytest.raises(ValueError):
            invariant_gaussian(ConfinementPotential.double_well(1.0, 1.0), d=1, n=64, half_width=4.0)


class TestFluxes:
    """Single steps and full flows of the linear Fokker-Planck equation."""

    def test_gibbs_state_is_stationary(self):
        """The exponential-fitting flux has zero flux on sampled Gibbs states."""
        for d in (1, 2):
            m = GridDensity.gaussian(d=d, n=64 if d == 2 else 256, half_width=8.0)
            field = -m.points().reshape(m.values.shape + (d,))
            stepped = fp_step(m, field, 1.0, 1e-4)
            assert total_variation(stepped, m) <= 1e-12, f"d={d}"

    def test_single_step_conserves_mass(self):
        m = GridDensity.gaussian(d=2, n=64, half_width=6.0, mean=(1.0, 0.0))
        field = np.stack(np.broadcast_arrays(*m.mesh()), axis=-1) ** 3 * -1.0
        for flux in FluxScheme:
            stepped = fp_step(m, field, 0.7, 1e-4, flux)
            assert abs(stepped.mass - m.mass) <= 1e-12

    def test_negative_values_raise(self):
        values = np.zeros(64)
        values[32] = 8.0
        m = GridDensity(values, 4.0)
        with pytest.raises(InstabilityError):
            fp_step(m, np.zeros((64, 1)), 1.0, 0.01)

    def test_cfl_bound(self):
        m = GridDensity.gaussian(d=2, n=64, half_width=4.0)
        dx = 8.0 / 64
        assert math.isclose(cfl_bound(m, 1.0, 0.0), 0.4 * dx**2 / 4.0)
        assert math.isclose(cfl_bound(m, 0.0, 2.0), 0.4 * dx / 2.0)

    def test_heat_flow_matches_closed_form(self):
        """Heat flow from N(0, 1/2) reaches N(0, 1) at t = 1/4."""
        m0 = GridDensity.gaussian(d=1, n=256, half_width=8.0, variance=0.5)
        run = evolve(m0, HEAT, PdeConfig(dt=5e-4, T=0.25))
        exact = GridDensity.gaussian(d=1, n=256, half_width=8.0, variance=1.0)
        assert abs(run.final.second_moment()[0] - 1.0) < 1e-8
        assert total_variation(run.final, exact) < 5e-3
        assert math.isclose(run.final.t, 0.25)
        print(f"📊 Heat flow L1 error {total_variation(run.final, exact):.2e}")

    def test_mass_and_positivity_along_flow(self):
        m0 = GridDensity.gaussian(d=1, n=128, half_width=4.0, mean=0.5, variance=0.3)
        drift = DriftSpec.explicit(lambda t, x: x - x**3, sigma=1.0)
        run = evolve(m0, drift, PdeConfig(dt=2e-4, T=0.5), probes=[0.0, 0.1, 0.25, 0.5])
        assert [round(r["t"], 9) for r in run.records] == [0.0, 0.1, 0.25, 0.5]
        for record in run.records:
            assert abs(record["mass"] - 1.0) < 1e-10
            assert record["min_value"] >= -1e-12
        assert len(run.snapshots) == 4
        assert run.events == []

    def test_cfl_rejection(self):
        m0 = GridDensity.gaussian(d=1, n=256, half_width=8.0)
        with pytest.raises(CflError) as info:
            evolve(m0, HEAT, PdeConfig(dt=0.01, T=0.1))
        assert info.value.as_event()["kind"] == "cfl_rejection"

    def test_callable_drift_needs_sigma(self):
        m0 = GridDensity.gaussian(d=1, n=64, half_width=6.0)

        def field(m: GridDensity) -> np.ndarray:
            return np.zeros(m.values.shape + (1,))

        with pytest.raises(ValueError):
            evolve(m0, field, PdeConfig(dt=1e-3, T=0.01))
        run = evolve(m0, field, PdeConfig(dt=1e-3, T=0.01, sigma=1.0))
        assert math.isclose(run.final.mass, 1.0, rel_tol=1e-12)


class TestConvolution:
    """Lattice convolution of the mollified vortex kernel."""

    @classmethod
    def setup_class(cls):
        """Set up a 32 x 32 grid with a shifted Gaussian and a centered one."""
        cls.kernel = RieszKernel.vortex(1.0)
        cls.mollifier = Mollifier(0.5)
        cls.shifted = GridDensity.gaussian(d=2, n=32, half_width=4.0, mean=(0.5, -0.3), variance=0.7)
        cls.centered = GridDensity.gaussian(d=2, n=32, half_width=4.0)

    def test_spectral_matches_direct(self):
        spectral = convolve_field(self.shifted, self.kernel, self.mollifier)
        direct = convolve_field(
            self.shifted, self.kernel, self.mollifier, mode=ConvolutionMode.DIRECT
        )
        assert spectral.shape == (32, 32, 2)
        np.testing.assert_allclose(spectral, direct, rtol=0, atol=1e-10 * np.abs(direct).max())
        print("✅ Spectral and direct convolution agree")

    def test_lattice_kernel_is_odd(self):
        convolver = lattice_convolver(self.kernel, self.mollifier, 32, 4.0)
        offsets = np.array([[1, 0], [3, -2], [0, 7], [-5, 5]])
        np.testing.assert_array_equal(
            convolver.lattice_kernel(offsets), -convolver.lattice_kernel(-offsets)
        )
        with pytest.raises(ValueError):
            convolver.lattice_kernel([[40, 0]])

    def test_radial_density_on_diagonals(self):
        """Radial m: the field is orthogonal to x on the grid diagonals."""
        field = convolve_field(self.centered, self.kernel, self.mollifier)
        dots = tangential(self.centered, field)
        scale = np.abs(dots).max() + np.abs(field).max()
        index = np.arange(32)
        assert np.abs(dots[index, index]).max() <= 1e-12 * scale
        assert np.abs(dots[index, index[::-1]]).max() <= 1e-12 * scale

    def test_radial_defect_shrinks_under_refinement(self):
        """Off the diagonals the tangential defect is a discretization error."""
        defects = []
        for n in (32, 64):
            m = GridDensity.gaussian(d=2, n=n, half_width=4.0)
            field = convolve_field(m, self.kernel, self.mollifier)
            radius = np.linalg.norm(np.stack(m.mesh(), axis=-1), axis=-1)
            defects.append(float(np.abs(tangential(m, field)).max() / (radius * np.linalg.norm(field, axis=-1)).max()))
        assert defects[1] < 0.5 * defects[0], f"defects {defects}"
        print(f"📊 Tangential defects: {defects}")

    def test_under_resolved_kernel(self):
        with pytest.raises(UnderResolvedKernelError):
            convolve_field(self.shifted, self.kernel, Mollifier(0.1))
        with pytest.raises(ValueError):
            LatticeConvolver(RieszKernel(3, 0.5, -np.eye(3)), self.mollifier, 32, 4.0)

    def test_grid_mismatch(self):
        convolver = lattice_convolver(self.kernel, self.mollifier, 32, 4.0)
        with pytest.raises(ValueError):
            convolver.convolve(GridDensity.gaussian(d=2, n=32, half_width=5.0))


class TestMeanField:
    """The mollified mean-field vortex flow."""

    def test_gibbs_state_without_interaction(self):
        """M = 0 leaves the Gibbs state of the confinement in place."""
        confinement = ConfinementPotential.quadratic(1.0)
        m_star = invariant_gaussian(confinement, d=2, n=32, half_width=6.0)
        kernel = RieszKernel(2, 0.0, np.zeros((2, 2)))
        run = run_meanfield(m_star, kernel, confinement, PdeConfig(dt=0.01, T=0.5))
        assert total_variation(run.final, m_star) <= 1e-10

    def test_vortex_entropy_decreases(self):
        confinement = ConfinementPotential.quadratic(1.0)
        m_star = invariant_gaussian(confinement, d=2, n=32, half_width=6.0)
        m0 = GridDensity.gaussian(d=2, n=32, half_width=6.0, mean=(0.5, 0.0), variance=0.7)
        run = run_meanfield(
            m0, RieszKernel.vortex(1.0), confinement, PdeConfig(dt=0.01, T=1.0),
            probes=[0.0, 0.25, 0.5, 0.75, 1.0],
            on_probe=lambda m: {"entropy": relative_entropy(m, m_star)},
        )
        entropy = [r["entropy"] for r in run.records]
        assert all(later < earlier for earlier, later in zip(entropy, entropy[1:])), entropy
        assert entropy[-1] < 0.3 * entropy[0]
        print(f"📊 Entropy along the vortex flow: {[f'{h:.3e}' for h in entropy]}")

    def test_rotation_commutes_with_step(self):
        confinement = ConfinementPotential.quadratic(1.0)
        m0 = GridDensity.gaussian(d=2, n=32, half_width=6.0, mean=(0.5, -0.2), variance=0.7)
        config = PdeConfig(dt=0.01, T=0.01)
        kernel = RieszKernel.vortex(1.0)
        stepped = run_meanfield(m0, kernel, confinement, config).final
        rotated = run_meanfield(m0.rotated(), kernel, confinement, config).final
        scale = np.abs(stepped.values).max()
        np.testing.assert_allclose(
            rotated.values, np.rot90(stepped.values), rtol=0, atol=1e-12 * scale
        )


class TestLogDensityDiagnostics:
    """Log-density derivatives and the centered pair functional."""

    @classmethod
    def setup_class(cls):
        """Set up a vortex convolver and two Gaussians on a 32 x 32 grid."""
        cls.m_star = GridDensity.gaussian(d=2, n=32, half_width=6.0)
        cls.m = GridDensity.gaussian(d=2, n=32, half_width=6.0, mean=(0.4, 0.1), variance=0.8)
        cls.convolver = lattice_convolver(RieszKernel.vortex(1.0), Mollifier(0.75), 32, 6.0)

    def test_equal_densities(self):
        grad, hess, decay = log_density_diagnostics(
            self.m_star, self.m_star, convolver=self.convolver
        )
        assert (grad, hess, decay) == (0.0, 0.0, 0.0)

    def test_without_convolver(self):
        grad, hess, decay = log_density_diagnostics(self.m, self.m_star)
        assert grad > 0.0 and hess > 0.0
        assert math.isnan(decay)

    def test_mask_excludes_boundary(self):
        mask = evaluation_mask(self.m_star)
        assert not mask[0].any() and not mask[-1].any()
        assert not mask[:, 0].any() and not mask[:, -1].any()
        assert self.m_star.values[mask].sum() / self.m_star.values.sum() >= 0.9999 - 1e-3

    def test_hessian_of_quadratic(self):
        axis = cell_centers(16, 2.0)
        x, y = np.meshgrid(axis, axis, indexing="ij")
        norms = hessian_norm(x**2 + y**2, 0.25)
        np.testing.assert_allclose(norms[1:-1, 1:-1], 2.0, rtol=1e-9)

    def test_phi_is_symmetric(self):
        mask = evaluation_mask(self.m)
        cells = np.argwhere(mask)[::7]
        field = self.convolver.convolve(self.m)
        score = centered_gradient(self.m.values, self.m.dx) / self.m.values[..., None]
        phi = phi_matrix(cells, self.convolver, field, score)
        np.testing.assert_array_equal(phi, phi.T)

    def test_marginal_cancellation(self):
        check = jabin_wang_phi(self.m, self.convolver, samples=64)
        assert check.samples == 64
        assert check.sup_phi > 0.0
        assert check.relative_residual <= 1e-8, f"residual {check.relative_residual:.3e}"
        print(f"✅ Pair functional residual {check.relative_residual:.2e}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
