"""Exception types raised across the package."""


class TCDSTError(Exception):
    """Base class for all package errors."""


class DimensionError(TCDSTError, ValueError):
    pass


class NumericError(TCDSTError, ArithmeticError):
    pass


class StateError(TCDSTError, RuntimeError):
    pass


class CorpusError(TCDSTError, ValueError):
    pass


class ValidationError(CorpusError):
    """A corpus file violates the schema; the message names dialogue and turn."""


class SchemaError(TCDSTError, ValueError):
    pass


class VocabError(TCDSTError, ValueError):
    pass


class CapacityError(TCDSTError, ValueError):
    pass


class InvalidSpanError(TCDSTError, ValueError):
    pass


class NoSpanError(TCDSTError, ValueError):
    pass


class ConfigurationError(TCDSTError, ValueError):
    pass


class AlignmentError(TCDSTError, ValueError):
    pass


class UndefinedValueError(TCDSTError, ValueError):
    pass


class CheckpointError(TCDSTError, ValueError):
    pass
