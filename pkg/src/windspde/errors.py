"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class WindSpdeError(Exception):
    exit_code = 1


class ConfigError(WindSpdeError, ValueError):
    exit_code = 2


class DataError(WindSpdeError, ValueError):
    exit_code = 3


class NumericalError(WindSpdeError, ArithmeticError):
    exit_code = 4


class ConvergenceError(NumericalError):
    """Inner Newton iterations did not converge; ``diagnostics`` says why."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
