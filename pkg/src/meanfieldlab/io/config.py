"""
Run configuration.

A run is configured by a flat TOML table. Numeric fields left unset mean
"use the preset default"; ``scenario`` is required. ``--set key=value``
overrides are parsed as TOML scalars and validated like file entries.
"""

import math
import tomllib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

import tomli_w

from meanfieldlab.errors import (
    ConfigSyntaxError,
    MissingFieldError,
    OutOfRangeError,
    UnknownKeyError,
)
from meanfieldlab.utils.config import Config


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs beyond the preset defaults.

    Parameters
    ----------
    scenario : str
        Preset identifier.
    N, grid_n, workers : int, optional
        Particle count, cells per axis, worker threads.
    dt, T, half_width, eps, sigma, kappa_u, m_abs : float, optional
        Time step, horizon, box half-width, mollification radius, diffusion
        coefficient, confinement strength and interaction strength ``|M|``.
    seed : int, optional
        Root seed of all random streams.
    output_dir : Path, default ``runs``
        Directory receiving the report, series and events.
    emit_plots : bool, default False
        Whether to write a gnuplot script next to the series.
    """

    scenario: str
    N: int | None = None
    dt: float | None = None
    T: float | None = None
    grid_n: int | None = None
    half_width: float | None = None
    eps: float | None = None
    sigma: float | None = None
    kappa_u: float | None = None
    m_abs: float | None = None
    seed: int | None = None
    workers: int | None = None
    output_dir: Path = Config().foldername_runs
    emit_plots: bool = False

    def __post_init__(self) -> None:
        for key, value in asdict(self).items():
            _validate(key, value)
        object.__setattr__(self, "output_dir", Path(self.output_dir))

    def overrides(self) -> dict[str, Any]:
        """Numeric fields that are set, keyed like experiment overrides."""
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name in _NUMERIC and getattr(self, f.name) is not None
        }


def _positive(value: float) -> bool:
    return value > 0


def _nonnegative(value: float) -> bool:
    return value >= 0


# key -> (type, predicate, requirement text)
_NUMERIC: dict[str, tuple[type, Any, str]] = {
    "N": (int, lambda v: v >= 2, "an integer >= 2"),
    "dt": (float, _positive, "a number > 0"),
    "T": (float, _positive, "a number > 0"),
    "grid_n": (int, lambda v: v >= 8 and v & (v - 1) == 0, "a power of two >= 8"),
    "half_width": (float, _positive, "a number > 0"),
    "eps": (float, _positive, "a number > 0"),
    "sigma": (float, _nonnegative, "a number >= 0"),
    "kappa_u": (float, _nonnegative, "a number >= 0"),
    "m_abs": (float, _nonnegative, "a number >= 0"),
    "seed": (int, lambda v: 0 <= v < 2**64, "an integer in [0, 2^64)"),
    "workers": (int, lambda v: v >= 1, "an integer >= 1"),
}


def _validate(key: str, value: Any) -> None:
    if key == "scenario":
        if not isinstance(value, str) or not value:
            raise OutOfRangeError(key, value, "a non-empty preset name")
        return
    if key == "output_dir":
        if not isinstance(value, str | Path) or not str(value):
            raise OutOfRangeError(key, value, "a path")
        return
    if key == "emit_plots":
        if not isinstance(value, bool):
            raise OutOfRangeError(key, value, "true or false")
        return
    if value is None:
        return
    kind, predicate, requirement = _NUMERIC[key]
    if isinstance(value, bool):
        raise OutOfRangeError(key, value, requirement)
    if kind is int and not isinstance(value, int):
        raise OutOfRangeError(key, value, requirement)
    if kind is float:
        if not isinstance(value, int | float) or not math.isfinite(value):
            raise OutOfRangeError(key, value, requirement)
    if not predicate(value):
        raise OutOfRangeError(key, value, requirement)


_FIELD_NAMES = tuple(f.name for f in fields(RunConfig))


def _from_table(table: dict[str, Any], scenario: str | None = None) -> RunConfig:
    if scenario is not None:
        if table.setdefault("scenario", scenario) != scenario:
            raise OutOfRangeError(
                "scenario", table["scenario"], f"{scenario!r} to match the command line"
            )
    for key in table:
        if key not in _FIELD_NAMES:
            raise UnknownKeyError(key)
    if "scenario" not in table:
        raise MissingFieldError("scenario")
    values = dict(table)
    for key, (kind, _, _) in _NUMERIC.items():
        if kind is float and isinstance(values.get(key), int) and not isinstance(values[key], bool):
            values[key] = float(values[key])
    return RunConfig(**values)


def _loads(text: str) -> dict[str, Any]:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        line = getattr(err, "lineno", None)
        if line is None:
            # Older messages carry the position as "(at line L, column C)".
            marker = str(err).rpartition("at line ")[2]
            digits = marker.split(",")[0].strip()
            line = int(digits) if digits.isdigit() else None
        raise ConfigSyntaxError(getattr(err, "msg", str(err)), line) from err


def parse_config(source: str | Path, *, scenario: str | None = None) -> RunConfig:
    """Parse and validate a run configuration.

    ``source`` is a path (``Path`` or an existing file name) or inline TOML
    text. ``scenario``, when given, fills a missing ``scenario`` key and must
    agree with a present one.

    Raises
    ------
    ConfigSyntaxError
        The text is not valid TOML; carries the line number.
    UnknownKeyError
        A key is not a RunConfig field.
    OutOfRangeError
        A value has the wrong type or range.
    MissingFieldError
        ``scenario`` is absent.
    """
    if isinstance(source, Path) or (
        isinstance(source, str) and "\n" not in source and "=" not in source and Path(source).is_file()
    ):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    return _from_table(_loads(text), scenario)


def serialize_config(config: RunConfig) -> str:
    """TOML text that ``parse_config`` turns back into an equal RunConfig."""
    table = {}
    for key, value in asdict(config).items():
        if value is None:
            continue
        table[key] = str(value) if isinstance(value, Path) else value
    return tomli_w.dumps(table)


def parse_assignment(text: str) -> tuple[str, Any]:
    """Split ``key=value`` and read the value as a TOML scalar (bare words as strings)."""
    key, sep, raw = text.partition("=")
    key, raw = key.strip(), raw.strip()
    if not sep or not key:
        raise ConfigSyntaxError(f"expected key=value, got {text!r}", None)
    try:
        value = tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def apply_overrides(config: RunConfig, assignments: list[str]) -> RunConfig:
    """Apply ``--set key=value`` assignments with full validation."""
    updates: dict[str, Any] = {}
    for assignment in assignments:
        key, value = parse_assignment(assignment)
        if key not in _FIELD_NAMES:
            raise UnknownKeyError(key)
        kind = _NUMERIC.get(key, (None,))[0]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        updates[key] = value
    return replace(config, **updates)
