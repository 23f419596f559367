"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class SmoothDMLError(Exception):
    exit_code = 1


class ConfigError(SmoothDMLError, ValueError):
    exit_code = 2


class InvalidArgumentError(ConfigError):
    pass


class DataError(SmoothDMLError, ValueError):
    exit_code = 3

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class DegenerateDesignError(DataError):
    pass


class NumericError(SmoothDMLError, ArithmeticError):
    exit_code = 4


class DegenerateMomentsError(NumericError):
    pass


class ReportIOError(SmoothDMLError, OSError):
    exit_code = 5
