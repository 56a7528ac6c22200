"""Exception types shared across the decode toolkit.

Each class maps onto one CLI exit code (see ``myodecode.cli``).
"""


class MyoDecodeError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 2


class InvalidSpecError(MyoDecodeError, ValueError):
    """A filter specification that cannot be realized."""

    exit_code = 1


class InvalidArgumentError(MyoDecodeError, ValueError):
    exit_code = 1


class SequencingError(MyoDecodeError):
    """Frames or windows presented out of order, or empty windows."""


class DataError(MyoDecodeError, ValueError):
    """Malformed or non-finite input data."""


class CorruptionError(MyoDecodeError):
    """Stored artifacts inconsistent with the data they are applied to."""


class IllPosedError(MyoDecodeError, ValueError):
    """Too few observations for the requested estimate."""


class NumericalError(MyoDecodeError, ArithmeticError):
    exit_code = 3


class RankDeficiencyWarning(UserWarning):
    """Normal equations were singular and a ridge term was added."""
