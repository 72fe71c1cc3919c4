"""Exception hierarchy. Every error carries a machine-readable ``category``."""


class CespdcError(Exception):
    category = "error"
    exit_code = 1


class RangeError(CespdcError, ValueError):
    category = "range"
    exit_code = 2


class DomainError(CespdcError, ValueError):
    category = "domain"
    exit_code = 3


class EmptyInputError(CespdcError, ValueError):
    category = "empty_input"
    exit_code = 4


class GridError(CespdcError, ValueError):
    category = "grid"
    exit_code = 5


class PreconditionError(CespdcError, ValueError):
    category = "precondition"
    exit_code = 6


class FitDegenerateError(CespdcError, RuntimeError):
    category = "fit_degenerate"
    exit_code = 7


class ConvergenceError(CespdcError, RuntimeError):
    category = "convergence"
    exit_code = 8

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class CoverageError(CespdcError, ValueError):
    category = "coverage"
    exit_code = 9


class InfeasibleError(CespdcError, ValueError):
    category = "infeasible"
    exit_code = 10


class DivisionDegenerateError(CespdcError, ZeroDivisionError):
    category = "division_degenerate"
    exit_code = 11


class ValidationError(CespdcError, ValueError):
    category = "validation"
    exit_code = 12


class ConfigParseError(CespdcError, ValueError):
    category = "parse"
    exit_code = 13

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class ConfigNotFoundError(CespdcError, FileNotFoundError):
    category = "not_found"
    exit_code = 14


class FormatError(CespdcError, ValueError):
    category = "format"
    exit_code = 15
