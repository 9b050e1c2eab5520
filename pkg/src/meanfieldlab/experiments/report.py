"""
Structured experiment reports.

A report echoes every parameter it was run with, holds named scalar metrics,
tabular series (polars frames with a leading ``t`` column), verdicts that
compare a metric against a tolerance, provenance and the event stream. The
JSON form uses sorted keys so that two runs with equal content serialize to
equal text.
"""

import json
import math
import operator
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any

import polars as pl

_COMPARISONS: dict[str, Callable[[float, float], bool]] = {
    "<=": operator.le,
    "<": operator.lt,
    ">=": operator.ge,
    ">": operator.gt,
}


@dataclass(frozen=True)
class Verdict:
    """Outcome of ``value <comparison> tolerance`` for one metric."""

    name: str
    metric: str
    comparison: str
    tolerance: float
    value: float
    passed: bool

    @classmethod
    def evaluate(
        cls, name: str, metric: str, value: float, comparison: str, tolerance: float
    ) -> "Verdict":
        if comparison not in _COMPARISONS:
            raise ValueError(f"unknown comparison {comparison!r}")
        value = float(value)
        # NaN never passes.
        passed = not math.isnan(value) and _COMPARISONS[comparison](value, tolerance)
        return cls(name, metric, comparison, float(tolerance), value, bool(passed))

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "metric": self.metric,
            "comparison": self.comparison,
            "tolerance": self.tolerance,
            "value": self.value,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class PlotHint:
    """How a series column is drawn: log axis and an optional ``exp(rate t)`` reference."""

    column: str
    log_scale: bool = True
    rate: float | None = None
    label: str = ""


@dataclass
class ExperimentReport:
    name: str
    parameters: dict[str, Any]
    metrics: dict[str, float] = field(default_factory=dict)
    series: dict[str, pl.DataFrame] = field(default_factory=dict)
    verdicts: list[Verdict] = field(default_factory=list)
    provenance: dict[str, Any] = field(default_factory=dict)
    events: list[dict[str, Any]] = field(default_factory=list)
    plot_hints: dict[str, PlotHint] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def add_metric(self, name: str, value: float) -> float:
        self.metrics[name] = float(value)
        return self.metrics[name]

    def add_series(
        self,
        name: str,
        records: list[Mapping[str, float]] | pl.DataFrame,
        hint: PlotHint | None = None,
    ) -> pl.DataFrame:
        frame = records if isinstance(records, pl.DataFrame) else pl.from_dicts(records)
        if "t" in frame.columns:
            frame = frame.select(["t", *[c for c in frame.columns if c != "t"]])
        self.series[name] = frame
        if hint is not None:
            self.plot_hints[name] = hint
        return frame

    def check(
        self, name: str, metric: str, comparison: str, tolerance: float
    ) -> Verdict:
        """Add a verdict on a metric already present in the report."""
        if metric not in self.metrics:
            raise KeyError(f"verdict {name!r} references unknown metric {metric!r}")
        verdict = Verdict.evaluate(name, metric, self.metrics[metric], comparison, tolerance)
        self.verdicts.append(verdict)
        return verdict

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "parameters": self.parameters,
            "metrics": self.metrics,
            "series": {k: v.to_dict(as_series=False) for k, v in self.series.items()},
            "verdicts": [v.to_dict() for v in self.verdicts],
            "provenance": self.provenance,
            "events": self.events,
            "plot_hints": {
                k: {"column": h.column, "log_scale": h.log_scale, "rate": h.rate, "label": h.label}
                for k, h in self.plot_hints.items()
            },
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=_jsonable)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentReport":
        return cls(
            name=data["name"],
            parameters=dict(data["parameters"]),
            metrics={k: float(v) for k, v in data["metrics"].items()},
            series={k: pl.DataFrame(v) for k, v in data.get("series", {}).items()},
            verdicts=[Verdict(**v) for v in data.get("verdicts", [])],
            provenance=dict(data.get("provenance", {})),
            events=list(data.get("events", [])),
            plot_hints={k: PlotHint(**h) for k, h in data.get("plot_hints", {}).items()},
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls.from_dict(json.loads(text))


def _jsonable(value: Any) -> Any:
    if hasattr(value, "item"):
        return value.item()
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)
