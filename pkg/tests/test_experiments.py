#!/usr/bin/env python3
"""Tests for experiment reports and scenario presets."""

import math

import polars as pl
import pytest

from meanfieldlab.errors import CflError, PresetNotFoundError
from meanfieldlab.experiments import (
    PRESETS,
    ExperimentReport,
    PlotHint,
    Verdict,
    get_preset,
    resolve_parameters,
    run_experiment,
)
from meanfieldlab.scenarios import CLAIMS, Scenario

# Series columns, a subset of the metrics and the verdicts, in order, of each preset.
LAYOUTS = {
    Scenario.VORTEX_ENTROPY_DECAY: {
        "series": {
            "entropy": ["t", "entropy", "grad_u", "hess_u", "hess_envelope", "kernel_decay", "mass"],
        },
        "metrics": [
            "entropy_rate", "entropy_fit_r_squared", "grad_u_ratio", "grad_u_rate",
            "hess_envelope_excess", "mass_drift",
        ],
        "verdicts": [
            "entropy_decay_rate", "log_gradient_decay", "log_gradient_rate_negative", "hessian_envelope",
        ],
    },
    Scenario.VORTEX_POC_SCALING: {
        "series": {
            "marginal_kl": ["t", "N", "kl", "stderr"],
            "m_sweep": ["t", "m_abs", "kl_ratio"],
        },
        "metrics": ["n_separation_sigma", "kl_log_slope", "t_excess_sigma", "min_kl", "decay_lost_at_m_abs"],
        "verdicts": ["kl_decreasing_in_N", "kl_slope_in_N", "kl_nonincreasing_in_t", "kl_admissible"],
    },
    Scenario.JABIN_WANG_CANCELLATION: {
        "series": {"cancellation": ["t", "sup_phi", "max_residual", "relative_residual"]},
        "metrics": ["max_relative_residual", "min_sup_phi"],
        "verdicts": ["marginal_cancellation"],
    },
    Scenario.HIGH_TEMPERATURE_CONTRACTION: {
        "series": {
            "gap": ["t", "mean_square_gap"],
            "exp_pair_moment": ["t", "exp_pair_moment", "stderr"],
            "poincare": ["t", "poincare_scan", "uniform_bound"],
        },
        "metrics": [
            "L", "R", "R_star", "K", "sigma0_sq", "sigma", "fit_rate", "fit_r_squared",
            "exp_moment_excess", "poincare_bound_ratio", "reflection_merged_fraction",
            "dominating_survival",
        ],
        "verdicts": [
            "contraction_rate_positive", "contraction_fit_quality", "gaussian_moment_bounded",
            "poincare_within_uniform_bound",
        ],
    },
    Scenario.WELLPOSEDNESS_MONITORS: {
        "series": {"monitors": ["t", "energy", "second_moment"]},
        "metrics": [
            "energy_growth", "moment_flatness", "sup_gap_0.1_0.01", "sup_gap_0.01_0.001",
            "cauchy_ratio", "collisions_mollified", "collisions_raw",
        ],
        "verdicts": [
            "energy_bounded", "moment_flat", "mollified_trajectories_converge",
            "no_collisions_when_mollified",
        ],
    },
    Scenario.PERTURBATION_CONVERGENCE: {
        "series": {"perturbation": ["t", "sup_phi", "sup_g", "tv", "phi_over_sqrt_tv"]},
        "metrics": ["phi_decay_ratio", "phi_envelope_excess", "phi_rate", "phi_tv_constant"],
        "verdicts": ["phi_decays", "phi_non_increasing"],
    },
}


def sample_report() -> ExperimentReport:
    report = ExperimentReport("sample", parameters={"dt": 0.01, "T": 1.0, "ignored": []})
    report.add_metric("error", 2e-7)
    report.add_series(
        "decay",
        [{"value": 1.0, "t": 0.0}, {"value": 0.5, "t": 0.5}],
        PlotHint("value", rate=-1.0, label="exp(-t)"),
    )
    report.check("small_error", "error", "<=", 1e-6)
    report.events.append({"kind": "collision", "i": 0, "j": 1, "distance": 1e-7, "t": 0.2})
    report.provenance = {"seed": 3, "quick": True}
    return report


class TestReport:
    """Verdicts, series and the JSON form of reports."""

    def test_verdict_comparisons(self):
        assert Verdict.evaluate("a", "m", 1.0, "<=", 1.0).passed
        assert not Verdict.evaluate("a", "m", 1.0, "<", 1.0).passed
        assert Verdict.evaluate("a", "m", 2.0, ">", 1.0).passed
        with pytest.raises(ValueError):
            Verdict.evaluate("a", "m", 1.0, "==", 1.0)

    def test_nan_never_passes(self):
        for comparison in ("<=", "<", ">=", ">"):
            assert not Verdict.evaluate("a", "m", math.nan, comparison, 0.0).passed

    def test_check_needs_a_known_metric(self):
        report = ExperimentReport("empty", parameters={})
        with pytest.raises(KeyError):
            report.check("missing", "nothing", "<=", 1.0)
        # A report without verdicts has nothing to fail.
        assert report.passed

    def test_series_lead_with_time(self):
        report = sample_report()
        assert report.series["decay"].columns == ["t", "value"]
        assert report.plot_hints["decay"].rate == -1.0

    def test_failed_verdict_fails_the_report(self):
        report = sample_report()
        report.add_metric("drift", 0.3)
        report.check("drift_small", "drift", "<=", 0.1)
        assert not report.passed

    def test_json_is_stable(self):
        report = sample_report()
        text = report.to_json()
        restored = ExperimentReport.from_json(text)
        assert restored.to_json() == text
        assert restored.passed and restored.verdicts[0].value == 2e-7
        assert isinstance(restored.series["decay"], pl.DataFrame)
        print("✅ Report JSON is stable under a round trip")


class TestPresets:
    """Registration, parameter resolution and small runs of presets."""

    def test_every_scenario_has_a_preset_and_claim(self):
        assert set(PRESETS) == set(Scenario)
        assert set(CLAIMS) == set(Scenario)

    def test_unknown_preset(self):
        with pytest.raises(PresetNotFoundError) as info:
            get_preset("vortex_teleport")
        assert "vortex_two_particle" in str(info.value)
        # Lookup failures are also KeyErrors.
        assert isinstance(info.value, KeyError)

    def test_resolve_parameters(self):
        spec = get_preset(Scenario.VORTEX_TWO_PARTICLE)
        params, ignored = resolve_parameters(spec, {"dt": 5e-4, "N": 10, "seed": None})
        assert params["dt"] == 5e-4
        assert params["initial_distance"] == 1.0
        assert ignored == ["N"]
        quick, _ = resolve_parameters(spec, quick=True)
        assert quick["T"] == 0.1
        with pytest.raises(ValueError):
            resolve_parameters(spec, {"initial_distance": 2.0})

    def test_two_particle_quick_run(self):
        report = run_experiment("vortex_two_particle", {"N": 10}, quick=True)
        assert report.passed, report.verdicts
        assert report.metrics["radius_ratio_error"] <= 1e-6
        assert report.parameters["ignored"] == ["N"]
        assert report.provenance["quick"] is True
        frame = report.series["distance"]
        assert frame.columns[0] == "t"
        assert frame["distance"].is_sorted(descending=True)
        print(f"📊 Two-vortex radius error {report.metrics['radius_ratio_error']:.2e}")

    def test_bakry_emery_quick_run(self):
        report = run_experiment(Scenario.BAKRY_EMERY_GAUSSIAN, quick=True)
        names = {v.name: v for v in report.verdicts}
        assert names["formula_exact"].passed
        assert report.series["lsi"].columns == ["t", "lsi_scan", "bakry_emery", "gap"]
        assert report.metrics["scan_max_excess"] >= 0.0
        # Gaussian invariant laws saturate at C_H = sigma^2 / (2 rho)
        assert report.metrics["stationary_ratio_min"] == pytest.approx(0.5, abs=1e-2)
        assert report.metrics["stationary_ratio_max"] == pytest.approx(0.5, abs=1e-2)

    def test_convolution_scale_invariance_quick_run(self):
        report = run_experiment(Scenario.RIESZ_CONVOLUTION_BOUNDS, quick=True)
        invariance = [v for v in report.verdicts if v.name.endswith("_scale_invariant")]
        assert len(invariance) == 3
        assert all(v.passed for v in invariance), invariance

    def test_cfl_rejection_travels_with_the_error(self):
        with pytest.raises(CflError) as info:
            run_experiment(Scenario.BAKRY_EMERY_GAUSSIAN, {"dt": 0.1}, quick=True)
        events = info.value.report.events
        assert events[-1] == info.value.as_event()
        assert events[-1]["kind"] == "cfl_rejection"
        assert any("bakry_emery_gaussian" in note for note in info.value.__notes__)

    @pytest.mark.parametrize("scenario", sorted(LAYOUTS, key=lambda s: s.value))
    def test_quick_run_layout(self, scenario):
        layout = LAYOUTS[scenario]
        report = run_experiment(scenario, quick=True)
        for name, columns in layout["series"].items():
            assert report.series[name].columns == columns, name
        assert set(layout["metrics"]) <= set(report.metrics)
        assert [v.name for v in report.verdicts] == layout["verdicts"]
        assert report.provenance["quick"] is True
        print(f"✅ {scenario.value}: {len(report.verdicts)} verdicts, {len(report.series)} series")

    def test_perturbation_decay_is_measured_end_to_start(self):
        report = run_experiment(Scenario.PERTURBATION_CONVERGENCE, quick=True)
        phi = report.series["perturbation"]["sup_phi"]
        assert report.metrics["phi_decay_ratio"] == pytest.approx(phi[-1] / phi[0])
        verdicts = {v.name: v for v in report.verdicts}
        assert verdicts["phi_decays"].comparison == "<"
        assert verdicts["phi_decays"].tolerance == 0.1
        assert verdicts["phi_non_increasing"].tolerance == 1.0

    @pytest.mark.slow
    def test_two_particle_full_run(self):
        report = run_experiment("vortex_two_particle")
        assert report.passed
        assert report.metrics["radius_ratio_error"] < 1e-6

    @pytest.mark.slow
    def test_bakry_emery_full_run(self):
        report = run_experiment("bakry_emery_gaussian")
        assert report.passed, [v for v in report.verdicts if not v.passed]

    @pytest.mark.slow
    @pytest.mark.parametrize("scenario", sorted(LAYOUTS, key=lambda s: s.value))
    def test_full_run(self, scenario):
        report = run_experiment(scenario)
        assert report.passed, [v for v in report.verdicts if not v.passed]
        print(f"📊 {scenario.value}: {report.provenance['runtime_seconds']:.1f} s")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
