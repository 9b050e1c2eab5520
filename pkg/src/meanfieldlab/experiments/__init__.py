"""Scenario presets and their structured reports."""

from meanfieldlab.experiments.presets import (
    OVERRIDE_KEYS,
    PRESETS,
    Preset,
    get_preset,
    resolve_parameters,
    run_experiment,
)
from meanfieldlab.experiments.report import ExperimentReport, PlotHint, Verdict

__all__ = [
    "OVERRIDE_KEYS",
    "PRESETS",
    "ExperimentReport",
    "PlotHint",
    "Preset",
    "Verdict",
    "get_preset",
    "resolve_parameters",
    "run_experiment",
]
