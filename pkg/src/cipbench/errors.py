"""Exception hierarchy. Each family maps to one CLI exit code."""


class BenchError(Exception):
    exit_code = 1


class ConfigError(BenchError):
    exit_code = 2


class DataError(BenchError, ValueError):
    exit_code = 3


class NumericalError(BenchError, ArithmeticError):
    exit_code = 4


class RankDeficientError(NumericalError):
    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"design matrix is rank deficient; collinear columns: {self.columns}")
