"""Exception types shared across the package."""


class WamsTsaError(Exception):
    """Base class for all package errors."""


class ConfigError(WamsTsaError, ValueError):
    """Invalid or inconsistent configuration.

    ``path`` names the offending field (e.g. ``attack.target``) when known.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        self.msg = message
        super().__init__(f"{path}: {message}" if path else message)


class NumericalError(WamsTsaError, ArithmeticError):
    """A numerical routine failed (singular matrix, non-positive variance, ...)."""


class StabilizabilityError(NumericalError):
    """Riccati iteration did not converge within the iteration cap."""


class InsufficientDataError(WamsTsaError, ValueError):
    """Too few observations to compute a statistic."""


class FitError(WamsTsaError, ValueError):
    """Distribution fitting failed or received degenerate samples."""


class CsvParseError(WamsTsaError, ValueError):
    """Malformed CSV input; ``line`` is the 1-based line number."""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")
