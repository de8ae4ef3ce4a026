"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class CvqkdError(Exception):
    exit_code = 2


class DomainError(CvqkdError, ValueError):
    """Parameter outside the physical domain."""

    exit_code = 1


class ConfigError(CvqkdError, ValueError):
    exit_code = 1


class NumericalError(CvqkdError, ArithmeticError):
    """A numerical routine failed; ``diagnostics`` holds solver output."""

    exit_code = 2

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NoConclusiveEventsError(NumericalError):
    """Post-selection probability is zero, so the BER is 0/0."""


class NoCrossoverError(CvqkdError):
    """No threshold separates the attacked and inherent BER."""

    exit_code = 2


class InsufficientDataError(CvqkdError):
    exit_code = 3
