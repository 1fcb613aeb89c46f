"""Exception hierarchy shared by all tools.

Each class carries the process exit code the CLI maps it to.
"""


class MomentOrdersError(Exception):
    """Base class for all library errors."""

    exit_code = 4

    def details(self) -> dict:
        """Machine-readable fields added to the CLI error document."""
        return {}


class DomainError(MomentOrdersError, ValueError):
    """Exception for an argument outside a function's domain."""

    exit_code = 2


class CatalogError(MomentOrdersError, KeyError):
    """Exception for an unknown family or spec selector."""

    exit_code = 2

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ''


class DegenerateParametrizationError(DomainError):
    """Exception for eta'(theta) = 0 in an exponential-family formula."""


class OutOfRangeError(DomainError):
    """Exception for a target value outside the attainable range m(Theta)."""

    def __init__(self, message: str, interval: tuple[float, float]):
        super().__init__(message)
        self.interval = interval

    def details(self) -> dict:
        return {'interval': list(self.interval)}


class EstimationInfeasibleError(OutOfRangeError):
    """Exception for a generalized empirical moment outside m(Theta)."""


class ExperimentInvalidError(MomentOrdersError):
    """Exception for a Monte Carlo run with too many infeasible replicates."""

    exit_code = 2

    def __init__(self, message: str, failures: int, reps: int):
        super().__init__(message)
        self.failures = failures
        self.reps = reps

    def details(self) -> dict:
        return {'failures': self.failures, 'reps': self.reps}


class InvalidInputError(MomentOrdersError, ValueError):
    """Exception for malformed input data."""

    exit_code = 3

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line

    def details(self) -> dict:
        return {} if self.line is None else {'line': self.line}


class InvalidSupportError(InvalidInputError):
    """Exception for a zero density inside a declared support."""


class IntegrationError(MomentOrdersError):
    """Exception for a quadrature that did not converge."""

    def __init__(self, message: str, abserr: float):
        super().__init__(message)
        self.abserr = abserr

    def details(self) -> dict:
        return {'abserr': self.abserr}


class ConsistencyError(MomentOrdersError):
    """Exception for an internally inconsistent result, e.g. a negative variance."""


class NumericError(MomentOrdersError, ArithmeticError):
    """Exception for a numeric failure such as a lost root bracket."""


class DegenerateSampleWarning(UserWarning):
    """Warning for a sample whose spread is zero."""
