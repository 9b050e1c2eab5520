#!/usr/bin/env python3
"""Tests for run configuration, result files, checkpoints and plot scripts."""

from pathlib import Path

import numpy as np
import pytest

from meanfieldlab.errors import (
    ConfigError,
    ConfigSyntaxError,
    MagicMismatchError,
    MissingFieldError,
    OutOfRangeError,
    TruncatedCheckpointError,
    UnknownKeyError,
    VersionMismatchError,
)
from meanfieldlab.experiments import ExperimentReport, PlotHint
from meanfieldlab.grid import GridDensity
from meanfieldlab.io import (
    CheckpointKind,
    RunConfig,
    apply_overrides,
    decode,
    describe,
    emit_plot_script,
    encode,
    event_log,
    load_checkpoint,
    parse_assignment,
    parse_config,
    read_events,
    read_records,
    save_checkpoint,
    save_report,
    serialize_config,
    write_records,
)
from meanfieldlab.sde import ParticleEnsemble

FIXTURE = Path(__file__).parent / "data" / "ensemble_fixture.mfck"


class TestRunConfig:
    """TOML run configurations and ``--set`` overrides."""

    def test_inline_config(self):
        config = parse_config('scenario = "vortex_two_particle"\ndt = 1e-4\nT = 2\nseed = 9')
        assert config.scenario == "vortex_two_particle"
        assert config.dt == 1e-4
        assert config.T == 2.0 and isinstance(config.T, float)
        assert config.overrides() == {"dt": 1e-4, "T": 2.0, "seed": 9}
        assert config.output_dir == Path("runs")

    def test_config_file(self, tmp_path):
        path = tmp_path / "run.toml"
        path.write_text('scenario = "bakry_emery_gaussian"\ngrid_n = 256\n', encoding="utf-8")
        assert parse_config(path).grid_n == 256
        assert parse_config(str(path)).grid_n == 256

    def test_syntax_error_carries_the_line(self):
        with pytest.raises(ConfigSyntaxError) as info:
            parse_config('scenario = "x"\ndt = = 3\n')
        assert info.value.line == 2
        print(f"✅ Syntax error reported at line {info.value.line}")

    def test_unknown_key(self):
        with pytest.raises(UnknownKeyError) as info:
            parse_config('scenario = "x"\nparticles = 10')
        assert info.value.key == "particles"

    @pytest.mark.parametrize(
        "line", ["dt = -1.0", "grid_n = 9", "grid_n = 24", "N = 2.5", "sigma = -0.1", "workers = 0", 'T = "long"']
    )
    def test_out_of_range(self, line):
        with pytest.raises(OutOfRangeError):
            parse_config(f'scenario = "x"\n{line}')

    def test_missing_scenario(self):
        with pytest.raises(MissingFieldError):
            parse_config("dt = 0.1")

    def test_scenario_from_the_command_line(self):
        assert parse_config("dt = 0.5", scenario="vortex_two_particle").scenario == "vortex_two_particle"
        with pytest.raises(OutOfRangeError):
            parse_config('scenario = "a"', scenario="b")

    def test_config_errors_are_value_errors(self):
        with pytest.raises(ValueError):
            RunConfig(scenario="x", seed=-1)
        assert issubclass(ConfigError, ValueError)

    def test_serialization_round_trip(self):
        config = RunConfig(
            scenario="vortex_poc_scaling", N=512, dt=1e-3, eps=0.05, seed=2**63 - 1,
            output_dir=Path("out/poc"), emit_plots=True,
        )
        assert parse_config(serialize_config(config)) == config

    def test_overrides(self):
        config = RunConfig(scenario="vortex_two_particle")
        updated = apply_overrides(config, ["dt=0.001", "seed=5", "T=3", "emit_plots=true"])
        assert (updated.dt, updated.seed, updated.T, updated.emit_plots) == (0.001, 5, 3.0, True)
        assert parse_assignment("scenario=vortex_two_particle") == ("scenario", "vortex_two_particle")
        with pytest.raises(UnknownKeyError):
            apply_overrides(config, ["bogus=1"])
        with pytest.raises(OutOfRangeError):
            apply_overrides(config, ["dt=-1"])
        with pytest.raises(ConfigSyntaxError):
            apply_overrides(config, ["dt"])


class TestRecords:
    """CSV series, JSONL events and report folders."""

    def test_empty_stream_writes_the_header(self, tmp_path):
        path = tmp_path / "empty.csv"
        assert write_records([], path) == 0
        assert path.read_text(encoding="utf-8") == "t\n"
        assert write_records([], tmp_path / "named.csv", ["energy"]) == 0
        assert (tmp_path / "named.csv").read_text(encoding="utf-8") == "t,energy\n"

    def test_single_record(self, tmp_path):
        path = tmp_path / "one.csv"
        assert write_records([{"t": 0.0, "entropy": 1.0 / 3.0}], path) == 1
        frame = read_records(path)
        assert frame.columns == ["t", "entropy"]
        assert frame["entropy"][0] == 1.0 / 3.0

    def test_long_streams_are_batched(self, tmp_path):
        rows = ({"t": 0.001 * k, "value": float(k) ** 0.5} for k in range(10_000))
        path = tmp_path / "long.csv"
        assert write_records(rows, path) == 10_000
        frame = read_records(path)
        assert frame.height == 10_000
        assert frame["value"][9_999] == 9_999.0**0.5

    def test_event_log_appends(self, tmp_path):
        path = tmp_path / "events.jsonl"
        with event_log(path) as log:
            log.write({"kind": "collision", "t": 0.5, "i": 1, "j": 4, "distance": 1e-7})
        with event_log(path) as log:
            log.extend([{"kind": "merge", "t": 0.75}])
        events = read_events(path)
        assert [e["kind"] for e in events] == ["collision", "merge"]
        assert path.read_text(encoding="utf-8").splitlines()[0].startswith('{"distance"')

    def test_save_report(self, tmp_path):
        report = ExperimentReport("demo", parameters={"dt": 0.1})
        report.add_series("decay", [{"t": 0.0, "h": 1.0}, {"t": 1.0, "h": 0.25}], PlotHint("h", rate=-2.0))
        report.add_metric("rate", -1.39)
        report.check("decays", "rate", "<", 0.0)
        report.events.append({"kind": "cfl_rejection", "t": 0.0})
        run_dir = save_report(report, tmp_path, config_text='scenario = "demo"\n', emit_plots=True)
        assert run_dir == tmp_path / "demo"
        names = sorted(p.name for p in run_dir.iterdir())
        assert names == ["config.toml", "decay.csv", "events.jsonl", "plots.gp", "report.json"]
        restored = ExperimentReport.from_json((run_dir / "report.json").read_text(encoding="utf-8"))
        assert restored.passed and restored.metrics == {"rate": -1.39}
        assert read_events(run_dir / "events.jsonl") == report.events
        # Saving again replaces the event stream instead of appending.
        save_report(report, tmp_path)
        assert len(read_events(run_dir / "events.jsonl")) == 1


class TestPlotScripts:
    """Gnuplot scripts generated from report series."""

    def test_script_is_deterministic(self):
        def build() -> ExperimentReport:
            report = ExperimentReport("decay", parameters={})
            report.add_series("entropy", [{"t": 0.0, "H": 0.5}, {"t": 1.0, "H": 0.07}], PlotHint("H", rate=-2.0))
            report.add_series("moments", [{"t": 0.0, "m2": 1.0, "m4": 3.0}])
            return report

        script = emit_plot_script(build())
        assert script == emit_plot_script(build())
        assert "0.5*exp(-2.0*(x-0.0))" in script
        assert sum(line.startswith("plot ") for line in script.splitlines()) == 2
        assert '"moments.csv" using 1:3 with linespoints title "m4"' in script
        print("✅ Plot script is deterministic")

    def test_no_series_gives_comments_only(self):
        script = emit_plot_script(ExperimentReport("empty", parameters={}))
        assert all(line.startswith("#") for line in script.splitlines())


class TestCheckpoints:
    """Binary checkpoints of ensembles and grids."""

    def test_fixture_decodes(self):
        ensemble = decode(FIXTURE.read_bytes())
        assert isinstance(ensemble, ParticleEnsemble)
        np.testing.assert_array_equal(ensemble.positions, [[0.5, 0.0], [-0.5, 0.0]])
        np.testing.assert_array_equal(ensemble.labels, [0, 1])
        assert (ensemble.t, ensemble.seed, ensemble.step) == (0.0, 7, 0)

    def test_fixture_is_reproduced_byte_for_byte(self):
        data = FIXTURE.read_bytes()
        assert encode(decode(data)) == data
        assert len(data) == 102

    def test_describe(self):
        info = describe(FIXTURE.read_bytes())
        assert info.kind is CheckpointKind.ENSEMBLE
        assert info.shape == (2, 2)
        assert info.extra == {"seed": 7, "step": 0}
        assert info.nbytes == 102

    def test_round_trips(self, tmp_path):
        ensemble = ParticleEnsemble.gaussian(5, 3, seed=2**64 - 1)
        restored = load_checkpoint(save_checkpoint(ensemble, tmp_path / "ens.mfck"))
        np.testing.assert_array_equal(restored.positions, ensemble.positions)
        assert restored.seed == 2**64 - 1

        grid = GridDensity.gaussian(d=2, n=16, half_width=3.0, t=0.25)
        restored = load_checkpoint(save_checkpoint(grid, tmp_path / "grid.mfck"))
        np.testing.assert_array_equal(restored.values, grid.values)
        assert (restored.half_width, restored.t) == (3.0, 0.25)

    def test_corrupt_checkpoints(self):
        data = FIXTURE.read_bytes()
        with pytest.raises(MagicMismatchError):
            decode(b"NOPE!" + data[5:])
        with pytest.raises(MagicMismatchError):
            decode(data[:9] + b"\x09" + data[10:])
        with pytest.raises(VersionMismatchError):
            decode(data[:5] + b"\x02" + data[6:])
        with pytest.raises(TruncatedCheckpointError):
            decode(data[:-1])
        with pytest.raises(TruncatedCheckpointError):
            describe(data[:20])
        with pytest.raises(TypeError):
            encode("not a state")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
