"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class HemError(Exception):
    """Base class for every error raised by hemrelax."""


class DomainError(HemError, ValueError):
    """An argument lies outside the domain of a closure."""


class StateError(HemError):
    """A conservative state violates positivity (vacuum or over-compression)."""

    def __init__(self, message: str, cell: int | None = None, time: float | None = None):
        self.cell = cell
        self.time = time
        parts = [message]
        if cell is not None:
            parts.append(f"cell={cell}")
        if time is not None:
            parts.append(f"t={time:.17g}")
        super().__init__(", ".join(parts))


class NumericalError(HemError):
    """An iterative method failed to converge."""


class ModelError(HemError):
    """The equation-of-state model is not admissible (e.g. a_e^2 <= 0)."""


class StepSizeError(HemError):
    """The requested time step violates the CFL or viscous restriction."""


class UsageError(HemError, ValueError):
    """A diagnostic was called with incompatible inputs."""


class ConfigError(HemError, ValueError):
    """A configuration file failed to parse or validate."""
