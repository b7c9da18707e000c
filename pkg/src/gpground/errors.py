"""Exception hierarchy shared by every stage of the segmentation pipeline."""


class GroundSegError(Exception):
    """Base class for all package errors."""


class ParseError(GroundSegError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingField(GroundSegError):
    pass


class BinaryUnsupported(GroundSegError):
    pass


class EmptyCloud(GroundSegError):
    pass


class TooFewCandidates(GroundSegError):
    pass


class DomainError(GroundSegError, ValueError):
    pass


class SingularMatrix(GroundSegError):
    pass


class NonFinite(GroundSegError):
    pass


class NonFiniteStart(NonFinite):
    pass


class InvalidSpec(GroundSegError, ValueError):
    pass


class LengthMismatch(GroundSegError, ValueError):
    pass


class ConfigError(GroundSegError, ValueError):
    pass
