"""Exception hierarchy.

Each class carries the process exit code the command-line front end maps it to.
"""


class BasketDppError(Exception):
    exit_code = 1


class InputError(BasketDppError, ValueError):
    """Bad indices, malformed files, impossible sizes."""

    exit_code = 2


class ParseError(InputError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(BasketDppError):
    """Protocol or configuration mismatch."""

    exit_code = 3


class NumericalError(BasketDppError, ArithmeticError):
    exit_code = 4


class SingularKernelError(NumericalError):
    pass


class TrainingError(NumericalError):
    pass


class EvaluationError(NumericalError):
    pass
