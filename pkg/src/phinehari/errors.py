"""Exception types raised across the package."""


class PhiNehariError(Exception):
    """Base class for all package errors."""


class NumericFailure(PhiNehariError):
    """A numerical routine could not reach its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class HypothesisViolation(PhiNehariError):
    """A structural hypothesis on phi or on the exponents is violated."""

    def __init__(self, message, inequality=None):
        super().__init__(message)
        self.inequality = inequality


class DimensionMismatch(PhiNehariError):
    pass


class FieldFormatError(PhiNehariError):
    pass


class DegenerateDirection(PhiNehariError):
    pass


class DegenerateInput(PhiNehariError):
    pass


class NotOnManifold(PhiNehariError):
    pass


class ProjectionUnavailable(PhiNehariError):
    pass


class NoSolutionFound(PhiNehariError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class ConfigError(PhiNehariError):
    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}, column {column or 1})"
        super().__init__(message + loc)
        self.line = line
        self.column = column
