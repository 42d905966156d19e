"""Exception types shared across the package."""


class ITELabError(Exception):
    pass


class InvalidInput(ITELabError, ValueError):
    pass


class CapacityError(ITELabError):
    """Requested object would exceed a configured size guard."""


class NumericFailure(ITELabError, ArithmeticError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NoEquilibration(ITELabError):
    """A time series shows no rise from which an equilibration time can be read."""


class TableMismatch(ITELabError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(ITELabError, ValueError):
    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path
