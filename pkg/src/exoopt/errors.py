"""Exception types raised across the package."""


class ExoOptError(Exception):
    """Base class for all package errors."""


class DomainError(ExoOptError, ValueError):
    """An input lies outside the range a model supports."""


class ValidationError(ExoOptError, ValueError):
    """A value breaks a type invariant (sign, ordering, finiteness)."""


class UnsupportedConfigError(ExoOptError):
    """The requested model configuration is not implemented."""


class NotFoundError(ExoOptError, LookupError):
    """A search finished without locating what it was asked for."""


class DivergenceError(ExoOptError, RuntimeError):
    """Numerical integration produced a non-finite state."""

    def __init__(self, message, step=None, design=None):
        super().__init__(message)
        self.step = step
        self.design = design


class TraceFormatError(ExoOptError, ValueError):
    """A gait trace file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InfeasibleError(ExoOptError):
    """No design inside the search bounds meets every constraint."""

    def __init__(self, message, binding=None, age=None):
        super().__init__(message)
        self.binding = binding
        self.age = age
