"""The errors module contains the exception hierarchy raised by iwlab."""

import typing as t


class IWLabError(Exception):
    """General iwlab error."""

    def __init__(self, *args: t.Any, orig_exc: t.Optional[Exception] = None):
        super().__init__(*args)
        self.orig_exc = orig_exc


class InvalidArgumentError(IWLabError, ValueError):
    """Raised when an argument violates an operation's precondition."""

    pass


class LimitExceededError(IWLabError):
    """Raised when a configured limit, such as the maximum refinement level, would be
    exceeded."""

    pass


class DomainError(IWLabError):
    """Raised when a test function support escapes the box of a quadrature rule."""

    pass


class NumericError(IWLabError, ArithmeticError):
    """Raised when a field, pairing, or diagnostic produces non-finite values."""

    pass


class CapabilityError(IWLabError):
    """Raised when an object cannot supply what an operation needs, e.g. a derivative order
    above the one a field declares."""

    pass


class TruncationError(IWLabError):
    """Raised in strict mode when the l2 tail beyond the truncated driver count exceeds its
    threshold."""

    pass


class NotFoundError(IWLabError, KeyError):
    """Raised when a named scenario is not registered."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the message readable.
        return str(self.args[0]) if self.args else ""


class ConfigError(IWLabError):
    """Raised when a run configuration is invalid."""

    pass
