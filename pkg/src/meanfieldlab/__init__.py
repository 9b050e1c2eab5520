"""
.. include:: ../../README.md

   :start-line: 1
"""

from meanfieldlab.errors import MeanFieldLabError
from meanfieldlab.grid import GridDensity, PdeConfig, evolve, run_meanfield
from meanfieldlab.kernels import (
    ConfinementPotential,
    DriftSpec,
    Mollifier,
    RieszKernel,
)
from meanfieldlab.scenarios import Scenario
from meanfieldlab.sde import (
    CoupledPair,
    ParticleEnsemble,
    SdeConfig,
    run_coupled,
    simulate,
)

__version__ = "0.1.0"


def run_experiment(name, overrides=None, *, quick=False):
    """
    Run a scenario preset and return its report.

    Parameters
    ----------
    name : str or Scenario
        Preset identifier, e.g. ``"vortex_entropy_decay"``.
    overrides : mapping or RunConfig, optional
        Run-configuration keys replacing preset defaults.
    quick : bool, default False
        Shrink the run for a smoke test; verdicts may then fail.

    Returns
    -------
    ExperimentReport
        Parameters echo, metrics, series, verdicts, provenance and events.

    Examples
    --------
    >>> report = meanfieldlab.run_experiment("vortex_two_particle")
    >>> report.passed
    True
    >>> report.metrics["radius_ratio_error"] < 1e-6
    True
    """
    from meanfieldlab.experiments import run_experiment as _run_experiment

    return _run_experiment(name, overrides, quick=quick)


__all__ = [
    "ConfinementPotential",
    "CoupledPair",
    "DriftSpec",
    "GridDensity",
    "MeanFieldLabError",
    "Mollifier",
    "ParticleEnsemble",
    "PdeConfig",
    "RieszKernel",
    "Scenario",
    "SdeConfig",
    "evolve",
    "run_coupled",
    "run_experiment",
    "run_meanfield",
    "simulate",
]


def __getattr__(name: str):
    """Lazy access to the diagnostics, experiment and I/O subpackages."""
    if name in ("diagnostics", "experiments", "io"):
        import importlib

        return importlib.import_module(f"meanfieldlab.{name}")
    if name == "ExperimentReport":
        from meanfieldlab.experiments import ExperimentReport

        return ExperimentReport
    if name == "RunConfig":
        from meanfieldlab.io import RunConfig

        return RunConfig
    raise AttributeError(f"module '{__name__}' has no attribute '{name}'")
