#!/usr/bin/env python3
"""
Simple example of running a scenario preset with meanfieldlab.

This example runs one preset, prints its metrics and verdicts and
optionally saves the report folder.
"""

import sys

import polars as pl

import meanfieldlab
from meanfieldlab.errors import PresetNotFoundError
from meanfieldlab.io import save_report


def main():
    # Check command line arguments for the preset name
    if len(sys.argv) < 2:
        print("Usage: python example.py <preset> [output_dir]")
        print("\nExample:")
        print("  python example.py vortex_two_particle")
        print("  python example.py bakry_emery_gaussian runs")
        return

    name = sys.argv[1]
    out_dir = sys.argv[2] if len(sys.argv) > 2 else None

    print("=== Running preset ===")
    print(f"Preset: {name}")

    try:
        report = meanfieldlab.run_experiment(name, quick=True)
    except PresetNotFoundError as e:
        print(f"Error: {e}")
        return

    print("\n=== Metrics ===")
    metrics = pl.DataFrame(
        {"metric": list(report.metrics), "value": list(report.metrics.values())}
    )
    print(metrics)

    print("\n=== Verdicts ===")
    for verdict in report.verdicts:
        status = "pass" if verdict.passed else "FAIL"
        print(
            f"{verdict.name}: {verdict.value:.4g} {verdict.comparison} "
            f"{verdict.tolerance:g} -> {status}"
        )

    for series_name, frame in report.series.items():
        print(f"\n=== Series {series_name} ({frame.height} rows) ===")
        print(frame.head())

    if out_dir is not None:
        run_dir = save_report(report, out_dir, emit_plots=True)
        print(f"\nReport written to {run_dir}")


if __name__ == "__main__":
    main()
