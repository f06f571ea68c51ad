"""Exception types shared across the package."""


class SprayctlError(Exception):
    """Base class for all package errors."""


class NotFound(SprayctlError, KeyError):
    """A named frame (or other keyed item) does not exist."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep plain messages.
        return str(self.args[0]) if self.args else ""


class DimensionError(SprayctlError, ValueError):
    """Array shapes do not agree with each other or with the chain."""


class InfeasibleError(SprayctlError):
    """The shared constraint set of a prioritized problem is empty."""


class InvalidState(SprayctlError):
    """Non-finite values appeared during a computation."""


class ValidationError(SprayctlError, ValueError):
    """An input file or object failed validation.

    ``location`` is a human readable ``path:line`` or ``path:/json/pointer``.
    """

    def __init__(self, message: str, location: str | None = None) -> None:
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)
