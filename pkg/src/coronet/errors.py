"""Exception hierarchy shared across the package."""


class CoronetError(Exception):
    """Base class for all package errors."""


class ValidationError(CoronetError, ValueError):
    """Input failed a precondition. CLI maps these to exit code 1."""


class ShapeError(ValidationError):
    pass


class NumericError(ValidationError, ArithmeticError):
    pass


class ContractError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class DegenerateInputError(ValidationError):
    pass


class EmptyQueryError(ContractError):
    """No detections fall inside the requested span."""


class TrainingError(CoronetError):
    pass
