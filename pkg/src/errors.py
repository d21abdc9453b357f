"""
Exception hierarchy shared by the numerics library and the command line.

Every error carries a stable process exit code so that the CLI can map
failures without inspecting messages.
"""

from typing import Optional


class SimulationError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ArgumentError(SimulationError, ValueError):
    """An argument violates an operation's precondition."""

    exit_code = 2


class ConfigError(SimulationError):
    """Malformed or invalid experiment configuration."""

    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FeasibilityError(SimulationError):
    """The exponent constraints admit no solution for the requested (H, kappa)."""

    exit_code = 3

    def __init__(self, message: str, violations: Optional[list] = None):
        self.violations = list(violations or [])
        super().__init__(message)


class NumericalError(SimulationError):
    """Base class for numerical failures."""

    exit_code = 4


class SamplerError(NumericalError):
    """Covariance factorization failed even after jitter."""

    def __init__(self, message: str, min_eigenvalue: Optional[float] = None):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(message)


class ConvergenceError(NumericalError):
    """A dyadic refinement did not settle within the allowed depth."""

    def __init__(self, message: str, last_levels: Optional[tuple] = None):
        self.last_levels = last_levels
        super().__init__(message)


class DivergenceError(NumericalError):
    """A time stepper produced a non-finite state."""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(message)


class RangeAmplificationError(NumericalError):
    """S(-t) would amplify a mode beyond the configured cap."""

    def __init__(self, message: str, mode: Optional[int] = None, amplification: Optional[float] = None):
        self.mode = mode
        self.amplification = amplification
        super().__init__(message)


class ResourceLimitError(NumericalError):
    """A combinatorial construction exceeded its size cap."""


class ReportIOError(SimulationError):
    """Writing or reading result files failed."""

    exit_code = 5

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(message)
