"""Exception hierarchy shared by every stage of the pipeline."""

from sklearn.exceptions import ConvergenceWarning

__all__ = [
    "FcdttError",
    "ValidationError",
    "ParseError",
    "ConfigurationError",
    "NumericalError",
    "UnobservedLinkError",
    "ConvergenceWarning",
]


class FcdttError(Exception):
    pass


class ValidationError(FcdttError, ValueError):
    """Input data violates a documented invariant (bad coordinate, broken chain...)."""


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigurationError(FcdttError, ValueError):
    """Parameters are inconsistent with the data they are applied to."""


class NumericalError(FcdttError, ArithmeticError):
    pass


class UnobservedLinkError(ValidationError):
    def __init__(self, link_id):
        self.link_id = link_id
        super().__init__(f"link {link_id} has no backprojected samples")
