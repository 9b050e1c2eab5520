"""Gnuplot scripts for the series of a saved report."""

from meanfieldlab.experiments.report import ExperimentReport, PlotHint


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _series_block(name: str, columns: list[str], first: dict[str, float], hint: PlotHint | None) -> list[str]:
    lines = [f"# series {name}", f"set title {_quote(name)}", 'set xlabel "t"']
    metrics = [c for c in columns if c != "t"]
    if hint is not None:
        metrics = [hint.column]
    lines.append("set logscale y" if hint is not None and hint.log_scale else "unset logscale y")
    plots = [
        f"{_quote(name + '.csv')} using {columns.index('t') + 1}:{columns.index(c) + 1} "
        f"with linespoints title {_quote(c)}"
        for c in metrics
    ]
    if hint is not None and hint.rate is not None:
        t0, a0 = first["t"], first[hint.column]
        label = hint.label or f"exp({hint.rate:.6g} t)"
        plots.append(f"{a0!r}*exp({hint.rate!r}*(x-{t0!r})) with lines dashtype 2 title {_quote(label)}")
    lines.append("plot " + ", \\\n     ".join(plots))
    return lines


def emit_plot_script(report: ExperimentReport) -> str:
    """Gnuplot script plotting every series of ``report`` from its CSV file.

    The script expects to run inside the report directory, next to the
    ``<series>.csv`` files written by ``save_report``. Series with a plot hint
    get a logarithmic y axis and, when the hint carries a rate, the reference
    line ``a0 exp(rate (t - t0))`` through the first sample. A report without
    series yields a comment-only script.
    """
    header = [f"# plots for {report.name}", "# run with: gnuplot -p plots.gp"]
    plotted = {
        name: frame
        for name, frame in sorted(report.series.items())
        if "t" in frame.columns and frame.height > 0
    }
    if not plotted:
        return "\n".join([*header, "# no series to plot"]) + "\n"
    lines = [*header, "set datafile separator ','", "set key top right", "set grid", ""]
    for name, frame in plotted.items():
        first = {c: float(v) for c, v in frame.row(0, named=True).items()}
        lines.extend(_series_block(name, frame.columns, first, report.plot_hints.get(name)))
        lines.extend(["pause -1", ""])
    return "\n".join(lines)
