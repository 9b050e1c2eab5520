"""
Result persistence: CSV time series, JSONL events and report folders.

Series are written through polars in fixed-size batches so a stream of
records never has to fit in memory. Floats use the shortest representation
that parses back to the same double.
"""

import json
from collections.abc import Iterable, Iterator, Mapping
from contextlib import contextmanager
from itertools import islice
from pathlib import Path
from typing import IO, Any

import polars as pl

from meanfieldlab.experiments.report import ExperimentReport
from meanfieldlab.utils.logger import logger

BATCH_ROWS = 4096


def _batches(rows: Iterator[Mapping[str, float]], size: int) -> Iterator[list[Mapping[str, float]]]:
    while batch := list(islice(rows, size)):
        yield batch


def _frame(batch: list[Mapping[str, float]], columns: list[str]) -> pl.DataFrame:
    return pl.DataFrame(
        {c: [row.get(c) for row in batch] for c in columns},
        schema={c: pl.Float64 for c in columns},
    )


def write_records(
    records: Iterable[Mapping[str, float]],
    path: str | Path,
    columns: list[str] | None = None,
) -> int:
    """Stream probe records to a CSV file and return the number of rows.

    The header is ``t`` followed by the metric names, taken from ``columns``
    or from the first record. An empty stream writes the header only.

    Raises
    ------
    OSError
        The file cannot be written; the message names the path.
    """
    path = Path(path)
    rows = iter(records)
    first = next(rows, None)
    if columns is None:
        columns = ["t"] + [k for k in (first or {}) if k != "t"]
    elif "t" not in columns:
        columns = ["t", *columns]
    count = 0
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            handle.write(",".join(columns) + "\n")
            if first is None:
                return 0
            for batch in _batches(_chain(first, rows), BATCH_ROWS):
                _frame(batch, columns).write_csv(handle, include_header=False)
                count += len(batch)
    except OSError as err:
        raise OSError(f"writing records to {path}: {err}") from err
    logger.debug(f"wrote {count} records to {path}")
    return count


def _chain(first: Mapping[str, float], rest: Iterator[Mapping[str, float]]) -> Iterator[Mapping[str, float]]:
    yield first
    yield from rest


def read_records(path: str | Path) -> pl.DataFrame:
    """Read a CSV written by ``write_records`` with every column as Float64."""
    path = Path(path)
    header = path.read_text(encoding="utf-8").partition("\n")[0].split(",")
    return pl.read_csv(path, schema={c: pl.Float64 for c in header})


class EventLog:
    """Append-only JSONL writer, one sorted-key object per event."""

    def __init__(self, handle: IO[str]) -> None:
        self._handle = handle
        self.count = 0

    def write(self, event: Mapping[str, Any]) -> None:
        self._handle.write(json.dumps(dict(event), sort_keys=True) + "\n")
        self.count += 1

    def extend(self, events: Iterable[Mapping[str, Any]]) -> None:
        for event in events:
            self.write(event)


@contextmanager
def event_log(path: str | Path) -> Iterator[EventLog]:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as handle:
            yield EventLog(handle)
    except OSError as err:
        raise OSError(f"writing events to {path}: {err}") from err


def read_events(path: str | Path) -> list[dict[str, Any]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def save_events(report: ExperimentReport, out_dir: str | Path) -> Path:
    """Replace ``out_dir / report.name / events.jsonl`` with the report's events."""
    path = Path(out_dir) / report.name / "events.jsonl"
    path.unlink(missing_ok=True)
    with event_log(path) as log:
        log.extend(report.events)
    return path


def save_report(
    report: ExperimentReport,
    out_dir: str | Path,
    *,
    config_text: str | None = None,
    emit_plots: bool = False,
) -> Path:
    """Write ``report.json``, one CSV per series, ``events.jsonl`` and the config echo.

    Returns the run directory ``out_dir / report.name``.
    """
    from meanfieldlab.io.plots import emit_plot_script

    run_dir = Path(out_dir) / report.name
    run_dir.mkdir(parents=True, exist_ok=True)
    for name, frame in report.series.items():
        write_records(frame.iter_rows(named=True), run_dir / f"{name}.csv", frame.columns)
    save_events(report, out_dir)
    if config_text is not None:
        (run_dir / "config.toml").write_text(config_text, encoding="utf-8")
    (run_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    if emit_plots:
        (run_dir / "plots.gp").write_text(emit_plot_script(report), encoding="utf-8")
    logger.info(f"saved {report.name} to {run_dir}")
    return run_dir
