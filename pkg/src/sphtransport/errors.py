"""Exception hierarchy shared by every part of the solver."""


class TransportError(Exception):
    """Base class for all errors raised by :mod:`sphtransport`."""


class DomainError(TransportError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class FormatError(TransportError, ValueError):
    """A text file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataError(TransportError, ValueError):
    """Parsed data violates a numerical requirement (e.g. non-unit vectors)."""


class StencilError(TransportError):
    """A neighborhood holds too few nodes for the requested basis."""

    def __init__(self, message, center=None, count=None, required=None):
        super().__init__(message)
        self.center = center
        self.count = count
        self.required = required


class ConditioningError(TransportError):
    """A local matrix is singular or too ill-conditioned to solve."""

    def __init__(self, message, center=None, condition=None):
        super().__init__(message)
        self.center = center
        self.condition = condition


class FactorizationError(TransportError):
    """ILU(0) hit a zero or vanishing pivot."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class StepError(TransportError):
    """A time step failed because its linear solve did not converge."""

    def __init__(self, message, report=None, step=None):
        super().__init__(message)
        self.report = report
        self.step = step


class ConfigError(TransportError, ValueError):
    """Invalid or inconsistent run configuration."""

    def __init__(self, message, key=None):
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key
