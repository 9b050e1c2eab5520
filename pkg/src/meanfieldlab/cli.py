"""
Command-line entry point.

``meanfieldlab run <scenario>`` runs one preset and writes its report folder,
``meanfieldlab verify`` runs the acceptance presets and ``meanfieldlab inspect
<checkpoint>`` prints checkpoint metadata.

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 usage or configuration
error, 3 runtime error.
"""

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from rich.console import Console
from rich.table import Table

from meanfieldlab.errors import ConfigError, MeanFieldLabError, PresetNotFoundError
from meanfieldlab.experiments import ExperimentReport, get_preset, run_experiment
from meanfieldlab.io import (
    RunConfig,
    apply_overrides,
    describe,
    parse_config,
    save_events,
    save_report,
    serialize_config,
)
from meanfieldlab.scenarios import CLAIMS, Scenario
from meanfieldlab.utils.logger import logger, set_verbosity

EXIT_PASS = 0
EXIT_VERDICT = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

console = Console()


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64), got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meanfieldlab",
        description="Numerical laboratory for mean-field flows and propagation of chaos.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log DEBUG messages to the terminal")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario preset")
    run.add_argument("scenario", help="preset name, see `verify --list`")
    run.add_argument("--config", type=Path, help="TOML run configuration")
    run.add_argument(
        "--set", dest="assignments", action="append", default=[], metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )
    run.add_argument("--out", type=Path, help="output directory")
    run.add_argument("--seed", type=_seed, help="root seed (unsigned 64-bit)")
    run.add_argument("--workers", type=_positive_int, help="worker threads")
    run.add_argument("--emit-plots", action="store_true", help="write a gnuplot script")
    run.add_argument("--quick", action="store_true", help="shrunken smoke-test run")

    verify = sub.add_parser("verify", help="run the acceptance presets")
    verify.add_argument("--only", nargs="+", metavar="SCENARIO", help="restrict to these presets")
    verify.add_argument("--quick", action="store_true", help="shrunken smoke-test runs")
    verify.add_argument("--out", type=Path, help="also save every report here")
    verify.add_argument("--list", action="store_true", help="list the presets and exit")

    inspect = sub.add_parser("inspect", help="print checkpoint metadata")
    inspect.add_argument("checkpoint", type=Path)
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        config = parse_config(args.config, scenario=args.scenario)
    else:
        config = RunConfig(scenario=args.scenario)
    config = apply_overrides(config, args.assignments)
    flags = {
        "seed": args.seed,
        "workers": args.workers,
        "output_dir": args.out,
        "emit_plots": True if args.emit_plots else None,
    }
    return replace(config, **{k: v for k, v in flags.items() if v is not None})


def _verdict_table(report: ExperimentReport) -> Table:
    table = Table(title=report.name)
    table.add_column("verdict")
    table.add_column("metric")
    table.add_column("value", justify="right")
    table.add_column("tolerance", justify="right")
    table.add_column("status")
    for v in report.verdicts:
        status = "[green]pass[/green]" if v.passed else "[red]FAIL[/red]"
        table.add_row(v.name, v.metric, f"{v.value:.4g}", f"{v.comparison} {v.tolerance:g}", status)
    return table


def _run(
    scenario: str | Scenario, overrides: RunConfig | None, *, quick: bool, out_dir: str | Path | None
) -> ExperimentReport:
    """Run a preset; on failure keep the events it recorded in ``out_dir``."""
    try:
        return run_experiment(scenario, overrides, quick=quick)
    except MeanFieldLabError as err:
        partial = getattr(err, "report", None)
        if partial is not None and out_dir is not None:
            path = save_events(partial, out_dir)
            logger.error(f"events of the aborted run written to {path}")
        raise


def cmd_run(args: argparse.Namespace) -> int:
    config = _run_config(args)
    report = _run(config.scenario, config, quick=args.quick, out_dir=config.output_dir)
    run_dir = save_report(
        report,
        config.output_dir,
        config_text=serialize_config(config),
        emit_plots=config.emit_plots,
    )
    console.print(_verdict_table(report))
    console.print(f"report written to {run_dir}")
    return EXIT_PASS if report.passed else EXIT_VERDICT


def cmd_verify(args: argparse.Namespace) -> int:
    if args.list:
        for scenario in Scenario:
            console.print(f"[bold]{scenario.value}[/bold]: {CLAIMS[scenario]}")
        return EXIT_PASS
    scenarios = [get_preset(name).scenario for name in args.only] if args.only else list(Scenario)
    summary = Table(title="acceptance")
    summary.add_column("scenario")
    summary.add_column("verdicts", justify="right")
    summary.add_column("runtime [s]", justify="right")
    summary.add_column("status")
    failed = 0
    for scenario in scenarios:
        report = _run(scenario, None, quick=args.quick, out_dir=args.out)
        if args.out is not None:
            save_report(report, args.out)
        passed = sum(v.passed for v in report.verdicts)
        failed += not report.passed
        summary.add_row(
            scenario.value,
            f"{passed}/{len(report.verdicts)}",
            f"{report.provenance['runtime_seconds']:.1f}",
            "[green]pass[/green]" if report.passed else "[red]FAIL[/red]",
        )
    console.print(summary)
    return EXIT_PASS if failed == 0 else EXIT_VERDICT


def cmd_inspect(args: argparse.Namespace) -> int:
    info = describe(args.checkpoint.read_bytes())
    table = Table(title=str(args.checkpoint), show_header=False)
    table.add_row("kind", info.kind.name.lower())
    table.add_row("version", str(info.version))
    table.add_row("shape", " x ".join(str(s) for s in info.shape))
    table.add_row("t", repr(info.t))
    for key, value in info.extra.items():
        table.add_row(key, repr(value))
    table.add_row("bytes", str(info.nbytes))
    console.print(table)
    return EXIT_PASS


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "inspect": cmd_inspect}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return EXIT_USAGE if exit_.code else EXIT_PASS
    if args.verbose:
        set_verbosity(logging.DEBUG)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, PresetNotFoundError) as err:
        logger.error(str(err))
        return EXIT_USAGE
    except (MeanFieldLabError, OSError) as err:
        logger.error(f"{type(err).__name__}: {err}")
        for note in getattr(err, "__notes__", []):
            logger.error(note)
        return EXIT_RUNTIME
    except Exception:  # noqa: BLE001
        # Exit code 1 is reserved for failed verdicts.
        logger.exception("unexpected failure")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
