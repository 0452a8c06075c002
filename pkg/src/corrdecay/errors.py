"""Exception taxonomy shared across the toolkit.

Two base classes split failures the way the CLI reports them: bad inputs or
inconsistent configuration (exit code 2) versus numerical breakdown at run
time (exit code 3).  InternalCheckError marks a violated internal invariant
(exit code 4) and always indicates a bug.
"""


class CorrdecayError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(CorrdecayError):
    """Invalid input, parameter, or configuration (CLI exit code 2)."""


class NumericalError(CorrdecayError):
    """Numerical failure during a run (CLI exit code 3)."""


class InternalCheckError(CorrdecayError):
    """An internal invariant failed; always a bug (CLI exit code 4)."""


class InvalidParameter(ConfigError):
    """Argument outside its stated range."""


class InvalidSpec(ConfigError):
    """Map specification violates a structural requirement."""


class NotMixing(ConfigError):
    """Return-time support has gcd > 1 but a mixing tower was requested."""


class NotCoprime(ConfigError):
    """Generator set has gcd > 1; representability undefined."""


class InconsistentData(ConfigError):
    """Declared and computed quantities disagree."""


class DegenerateCertificate(ConfigError):
    """Certificate has R = 0 where a positive R is required."""


class NotMeanZero(ConfigError):
    """Observable must integrate to zero."""


class NotInB(ConfigError):
    """Observable fails the recurrence-class membership test."""


class NotYetValid(ConfigError):
    """Bound requested before the first index where it is proved."""


class UseMixingPath(ConfigError):
    """Nonmixing reduction called on a tower with gcd 1."""


class NoFeasibleRate(ConfigError):
    """No stretched-exponential rate satisfies the contraction constraint."""


class NotIntegrable(ConfigError):
    """Return-time law has an infinite mean (or a constant degenerates with it)."""


class NotDominated(ConfigError):
    """Cumulative dominance between sequences fails at some index."""

    def __init__(self, k: int, message: str | None = None):
        self.k = k
        super().__init__(message or f"cumulative dominance violated at index {k}")


class NoConvergence(NumericalError):
    """Iteration failed to reach the requested tolerance."""


class ErrorBudgetExceeded(NumericalError):
    """Accumulated numerical error bound exceeds the configured ceiling."""


class CouplingBroken(NumericalError):
    """Coupling step produced a nonpositive density."""
