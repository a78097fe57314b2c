"""Exception types shared across the simulator.

The CLI maps these onto exit codes: configuration and file-format problems are
"input" failures (exit 1), solver and check failures are "numerical" failures
(exit 2).
"""

from __future__ import annotations


class TwophaseError(Exception):
    """Base class for all package-specific errors."""


class DomainError(TwophaseError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegeneracyError(TwophaseError, ValueError):
    """Pressure-derivative evaluation too close to the degenerate set.

    The derivatives blow up approaching {m = k0, n = 0}; reaching the floor
    numerically signals solver failure, not physics, so this is an error
    rather than an infinite return value.
    """


class QuadratureError(TwophaseError, RuntimeError):
    """Adaptive quadrature failed to converge.

    Attributes:
        achieved: the error estimate actually reached.
    """

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


class DimensionError(TwophaseError, ValueError):
    """Operation not defined for the grid dimension it was called with."""


class PositivityLoss(TwophaseError, RuntimeError):
    """A mass field dropped to or below the positivity floor.

    Attributes carry the offending field name, flat grid index, value, and the
    simulation time at which the violation was detected.
    """

    def __init__(self, field: str, index: int, value: float, t: float):
        super().__init__(
            f"positivity loss in {field} at flat index {index}: "
            f"value {value:.6e} at t={t:.6e}"
        )
        self.field = field
        self.index = index
        self.value = value
        self.t = t


class NonFiniteError(TwophaseError, RuntimeError):
    """NaN or Inf appeared in a stage or state field."""

    def __init__(self, where: str, t: float):
        super().__init__(f"non-finite values in {where} at t={t:.6e}")
        self.where = where
        self.t = t


class ConfigError(TwophaseError, ValueError):
    """Configuration text failed validation.

    Carries *all* detected problems, not just the first.
    """

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))
        self.problems = list(problems)


class SnapshotFormatError(TwophaseError, ValueError):
    """A snapshot file is corrupt, truncated, or of the wrong format."""


class OutputLockError(TwophaseError, RuntimeError):
    """Another run holds the lock on the requested output directory."""
