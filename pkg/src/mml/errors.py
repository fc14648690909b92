"""Exception hierarchy shared by the library and the CLI."""


class MMLError(Exception):
    """Base class for every error raised by :mod:`mml`."""

    exit_code = 1


class InvalidArgumentError(MMLError, ValueError):
    """A caller supplied arguments that violate an operation's preconditions."""

    exit_code = 2


class NumericalDomainError(MMLError, ArithmeticError):
    """A numerical routine left its domain (non-SPD covariance, non-finite loss, ...)."""

    exit_code = 4


class BankFormatError(MMLError):
    """Base class for MMLF feature-bank parse errors."""

    exit_code = 3


class MagicMismatchError(BankFormatError):
    pass


class UnsupportedVersionError(BankFormatError):
    pass


class TruncatedPayloadError(BankFormatError):
    pass


class ShapeInconsistencyError(BankFormatError):
    pass


class DuplicateClassError(BankFormatError):
    pass
