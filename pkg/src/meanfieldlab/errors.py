"""
Exception hierarchy for meanfieldlab.

Every failure the engine, the grid solver, the diagnostics and the I/O layer
can report has its own class. Parameter problems additionally subclass
``ValueError`` so callers that only know the standard library can still
catch them.
"""


class MeanFieldLabError(Exception):
    """Base class of every error raised by meanfieldlab."""


class SingularityError(MeanFieldLabError, ValueError):
    """A singular kernel was evaluated at the origin."""


class KernelAdmissibilityError(MeanFieldLabError, ValueError):
    """The (d, s, M) triple violates the kernel admissibility conditions."""


class CollisionError(MeanFieldLabError):
    """Two particles came closer than the collision threshold.

    Parameters
    ----------
    i, j : int
        Canonical labels of the colliding particles.
    distance : float
        Their distance at detection time.
    t : float
        Simulation time of the detection.
    """

    def __init__(self, i: int, j: int, distance: float, t: float) -> None:
        self.i = int(i)
        self.j = int(j)
        self.distance = float(distance)
        self.t = float(t)
        super().__init__(
            f"particles {self.i} and {self.j} at distance "
            f"{self.distance:.3e} at t={self.t:.6g}"
        )

    def as_event(self) -> dict[str, float | int | str]:
        return {
            "kind": "collision",
            "i": self.i,
            "j": self.j,
            "distance": self.distance,
            "t": self.t,
        }


class InstabilityError(MeanFieldLabError):
    """Negative density values appeared in the grid solver."""


class CflError(MeanFieldLabError, ValueError):
    """Time step above the explicit stability bound."""

    def __init__(self, dt: float, bound: float) -> None:
        self.dt = float(dt)
        self.bound = float(bound)
        super().__init__(
            f"dt={self.dt:.3e} exceeds the CFL bound {self.bound:.3e}"
        )

    def as_event(self) -> dict[str, float | str]:
        return {"kind": "cfl_rejection", "dt": self.dt, "bound": self.bound}


class UnderResolvedKernelError(MeanFieldLabError, ValueError):
    """Mollification radius smaller than the grid spacing."""


class MassConservationError(MeanFieldLabError):
    """Grid mass drifted outside its tolerance."""


class BoxTooSmallError(MeanFieldLabError, ValueError):
    """Boundary cells carry too much mass for the box to be adequate."""


class MaskError(MeanFieldLabError, ValueError):
    """An evaluation mask is empty or a density vanishes on it."""


class SupportError(MeanFieldLabError, ValueError):
    """Reference density vanishes where the compared density does not."""


class EstimatorError(MeanFieldLabError, ValueError):
    """Inputs are insufficient for a statistical estimator or a fit."""


class IntegrabilityError(MeanFieldLabError, ValueError):
    """Exponent preconditions of a convolution inequality are violated."""


class PresetNotFoundError(MeanFieldLabError, KeyError):
    """No experiment preset is registered under the requested name."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown preset"


class ConfigError(MeanFieldLabError, ValueError):
    """Base class of run-configuration errors."""


class ConfigSyntaxError(ConfigError):
    """The configuration text is not valid TOML."""

    def __init__(self, message: str, line: int | None) -> None:
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class UnknownKeyError(ConfigError):
    """The configuration names a key RunConfig does not define."""

    def __init__(self, key: str) -> None:
        self.key = key
        super().__init__(f"unknown configuration key {key!r}")


class OutOfRangeError(ConfigError):
    """A configuration value has the wrong type or lies outside its range."""

    def __init__(self, key: str, value: object, requirement: str) -> None:
        self.key = key
        self.value = value
        super().__init__(f"{key}={value!r} is invalid: {requirement}")


class MissingFieldError(ConfigError):
    """A required configuration field is absent."""

    def __init__(self, key: str) -> None:
        self.key = key
        super().__init__(f"required field {key!r} is missing")


class CheckpointError(MeanFieldLabError, ValueError):
    """Base class of checkpoint decoding errors."""


class MagicMismatchError(CheckpointError):
    """The byte stream does not start with the checkpoint magic."""


class VersionMismatchError(CheckpointError):
    """The checkpoint was written by an unsupported format version."""


class TruncatedCheckpointError(CheckpointError):
    """The byte stream ends before the declared payload."""
