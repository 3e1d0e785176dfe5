"""Exception hierarchy. Each class carries the CLI exit code for its error class."""


class PartialMatchError(Exception):
    exit_code = 1


class DomainError(PartialMatchError, ValueError):
    exit_code = 8


class ParseError(PartialMatchError, ValueError):
    exit_code = 3

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientMatchedError(PartialMatchError, ValueError):
    exit_code = 4


class DegenerateDataError(PartialMatchError, ValueError):
    exit_code = 5


class UnequalArmsError(PartialMatchError, ValueError):
    exit_code = 6


class MissingGridEntryError(PartialMatchError, LookupError):
    exit_code = 7


class InsufficientDataError(PartialMatchError, ValueError):
    exit_code = 9


class ConvergenceError(PartialMatchError, RuntimeError):
    exit_code = 10


class EmptyResultError(PartialMatchError, RuntimeError):
    exit_code = 11
