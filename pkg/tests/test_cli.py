#!/usr/bin/env python3
"""Tests for the meanfieldlab command line."""

import json
from pathlib import Path

import pytest

import meanfieldlab.cli as cli
from meanfieldlab.cli import EXIT_PASS, EXIT_RUNTIME, EXIT_USAGE, build_parser, main
from meanfieldlab.io import read_events

FIXTURE = Path(__file__).parent / "data" / "ensemble_fixture.mfck"


class TestCommandLine:
    """Exit codes and outputs of the subcommands."""

    def test_inspect_fixture(self, capsys):
        assert main(["inspect", str(FIXTURE)]) == EXIT_PASS
        output = capsys.readouterr().out
        assert "ensemble" in output and "2 x 2" in output
        print("✅ inspect prints the checkpoint metadata")

    def test_inspect_errors(self, tmp_path):
        assert main(["inspect", str(tmp_path / "missing.mfck")]) == EXIT_RUNTIME
        corrupt = tmp_path / "corrupt.mfck"
        corrupt.write_bytes(b"not a checkpoint at all")
        assert main(["inspect", str(corrupt)]) == EXIT_RUNTIME

    def test_usage_errors(self, tmp_path):
        assert main([]) == EXIT_USAGE
        assert main(["run", "vortex_teleport"]) == EXIT_USAGE
        assert main(["run", "vortex_two_particle", "--seed", "-1"]) == EXIT_USAGE
        assert main(["run", "vortex_two_particle", "--set", "dt=-1"]) == EXIT_USAGE
        config = tmp_path / "bad.toml"
        config.write_text('scenario = "vortex_two_particle"\nparticles = 3\n', encoding="utf-8")
        assert main(["run", "vortex_two_particle", "--config", str(config)]) == EXIT_USAGE
        conflict = tmp_path / "conflict.toml"
        conflict.write_text('scenario = "bakry_emery_gaussian"\n', encoding="utf-8")
        assert main(["run", "vortex_two_particle", "--config", str(conflict)]) == EXIT_USAGE

    def test_grid_size_must_be_power_of_two(self, tmp_path):
        code = main([
            "run", "bakry_emery_gaussian", "--quick", "--out", str(tmp_path),
            "--set", "grid_n=24",
        ])
        assert code == EXIT_USAGE
        assert not (tmp_path / "bakry_emery_gaussian").exists()
        print("✅ grid_n = 24 is rejected as a configuration error")

    def test_cfl_rejection_is_logged_as_an_event(self, tmp_path):
        code = main([
            "run", "bakry_emery_gaussian", "--quick", "--out", str(tmp_path),
            "--set", "dt=0.1",
        ])
        assert code == EXIT_RUNTIME
        events = read_events(tmp_path / "bakry_emery_gaussian" / "events.jsonl")
        assert [e["kind"] for e in events] == ["cfl_rejection"]
        assert events[0]["dt"] == 0.1
        assert events[0]["bound"] < 0.1
        print(f"✅ CFL rejection recorded with bound {events[0]['bound']:.2e}")

    def test_unexpected_failure_is_a_runtime_error(self, monkeypatch):
        def broken(args):
            raise RuntimeError("boom")

        monkeypatch.setitem(cli.COMMANDS, "run", broken)
        assert main(["run", "vortex_two_particle"]) == EXIT_RUNTIME

    def test_verify_list(self, capsys):
        assert main(["verify", "--list"]) == EXIT_PASS
        output = capsys.readouterr().out
        assert "vortex_entropy_decay" in output and "wellposedness_monitors" in output

    def test_seed_accepts_hex(self):
        args = build_parser().parse_args(["run", "vortex_two_particle", "--seed", "0xff"])
        assert args.seed == 255

    def test_quick_run_writes_a_report(self, tmp_path):
        code = main([
            "run", "vortex_two_particle", "--quick", "--seed", "3", "--emit-plots",
            "--out", str(tmp_path), "--set", "dt=5e-4",
        ])
        assert code == EXIT_PASS
        run_dir = tmp_path / "vortex_two_particle"
        for name in ("report.json", "distance.csv", "events.jsonl", "config.toml", "plots.gp"):
            assert (run_dir / name).exists(), name
        report = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))
        assert report["parameters"]["seed"] == 3
        assert report["parameters"]["dt"] == 5e-4
        assert report["passed"] is True
        assert "seed = 3" in (run_dir / "config.toml").read_text(encoding="utf-8")

    def test_verify_only(self, tmp_path):
        code = main(["verify", "--only", "vortex_two_particle", "--quick", "--out", str(tmp_path)])
        assert code == EXIT_PASS
        assert (tmp_path / "vortex_two_particle" / "report.json").exists()


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
