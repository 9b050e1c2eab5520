#!/usr/bin/env -S uv run --script
# /// script
# requires-python = ">=3.11"
# dependencies = [
#   "polars",
#   "rich",
# ]
# ///
# pyright: reportMissingModuleSource=false
# pyright: reportMissingImports=false
"""Summarize the report folders written by `meanfieldlab verify --out DIR`."""

import json
import sys
from pathlib import Path

import polars as pl
from rich import print
from rich.table import Table


def load_verdicts(root: Path) -> pl.DataFrame:
    rows = []
    for path in sorted(root.glob("*/report.json")):
        report = json.loads(path.read_text(encoding="utf-8"))
        for verdict in report["verdicts"]:
            rows.append(
                {
                    "scenario": report["name"],
                    "verdict": verdict["name"],
                    "value": verdict["value"],
                    "tolerance": verdict["tolerance"],
                    "comparison": verdict["comparison"],
                    "passed": verdict["passed"],
                    "runtime": report["provenance"].get("runtime_seconds"),
                }
            )
    return pl.DataFrame(rows)


def main():
    if len(sys.argv) < 2:
        print("Run via `uv run scripts/acceptance_summary.py <verify output dir>`")
        return
    root = Path(sys.argv[1])
    verdicts = load_verdicts(root)
    if verdicts.is_empty():
        print(f"[yellow]no reports under {root}[/yellow]")
        return

    summary = (
        verdicts.group_by("scenario", maintain_order=True)
        .agg(
            pl.col("passed").sum().alias("passed"),
            pl.len().alias("verdicts"),
            pl.col("runtime").first().alias("runtime"),
        )
        .sort("scenario")
    )
    table = Table(title=f"acceptance summary: {root}")
    for column in ("scenario", "verdicts", "runtime [s]", "status"):
        table.add_column(column)
    for row in summary.iter_rows(named=True):
        ok = row["passed"] == row["verdicts"]
        table.add_row(
            row["scenario"],
            f"{row['passed']}/{row['verdicts']}",
            f"{row['runtime']:.1f}" if row["runtime"] is not None else "-",
            "[green]pass[/green]" if ok else "[red]FAIL[/red]",
        )
    print(table)

    failed = verdicts.filter(~pl.col("passed"))
    if failed.height:
        print("[red]failed verdicts[/red]")
        print(failed.select("scenario", "verdict", "value", "comparison", "tolerance"))


if __name__ == "__main__":
    main()
