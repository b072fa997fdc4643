"""Exception hierarchy shared by every module."""


class DelayRiskError(Exception):
    """Base class for all package errors."""


class ModelError(DelayRiskError, ValueError):
    """Invalid model, scenario or argument."""


class DimensionMismatchError(ModelError):
    def __init__(self, expected: int, got: int, what: str = "vector"):
        super().__init__(f"{what} has dimension {got}, expected {expected}")
        self.expected = expected
        self.got = got


class UnsupportedError(DelayRiskError, NotImplementedError):
    """The requested evaluation is not available for this model/set combination."""


class NumericalError(DelayRiskError, ArithmeticError):
    """A numerical procedure failed to reach its declared accuracy."""

    def __init__(self, message: str, achieved_tol: float | None = None, **info):
        super().__init__(message)
        self.achieved_tol = achieved_tol
        self.info = info


class ConfigError(DelayRiskError, ValueError):
    """Schema violation in a run configuration."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line
