"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
2 input error, 3 insufficient data, 4 numerical failure.
"""


class StretchError(Exception):
    exit_code = 1


class InputError(StretchError, ValueError):
    exit_code = 2


class RangeError(InputError):
    """A parameter lies outside its admissible or calibrated range."""


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateMaskError(InputError):
    pass


class NoObjectError(InputError):
    pass


class InsufficientDataError(StretchError):
    exit_code = 3


class NumericalError(StretchError, ArithmeticError):
    exit_code = 4


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


class FitError(NumericalError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class ModelRejectedError(NumericalError):
    pass


class DegenerateFitError(NumericalError):
    """Point set cannot determine the requested primitive (e.g. coplanar)."""
