__docformat__ = "google"


class PovsimError(Exception):
    """
    Base class of every error raised on purpose by `povsim`.
    """


class ConfigError(PovsimError, ValueError):
    """
    Invalid experiment configuration or invalid arguments to an operation.

    When the error comes from a configuration file, `line` is the 1-based line of the offending field
    and the message is prefixed with it.
    """
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParseError(PovsimError, ValueError):
    pass


class ValidationError(PovsimError, ValueError):
    pass


class ShapeError(PovsimError, ValueError):
    pass


class EmptyPool(PovsimError, ValueError):
    pass


class UndefinedMetric(PovsimError, ValueError):
    """
    The metric has no value for this input (constant vector, single class, zero denominator...).

    Callers record it as missing, never as 0.
    """


class MissingGroupMetric(PovsimError, LookupError):
    pass


class TrainingError(PovsimError, RuntimeError):
    pass


class DegenerateLabels(TrainingError):
    """
    All training labels belong to the same class.
    """


class IoError(PovsimError, OSError):
    pass
