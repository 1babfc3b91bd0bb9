"""Exception hierarchy. Each class maps to one CLI exit code."""


class CycloselError(Exception):
    exit_code = 1


class ConfigError(CycloselError, ValueError):
    exit_code = 2


class DataError(CycloselError, ValueError):
    exit_code = 3


class NumericalError(CycloselError, ArithmeticError):
    exit_code = 4
