"""Exception hierarchy shared by every module."""

from __future__ import annotations


class ContactFlexError(Exception):
    """Base class for all library errors."""


class DimensionError(ContactFlexError):
    """Raised when formulas only available for n = 1 are requested for n > 1."""


class DomainError(ContactFlexError):
    """A map was evaluated outside its certified domain box."""


class ParseError(ContactFlexError):
    def __init__(self, message: str, position: int | None = None, source: str | None = None):
        self.position = position
        self.source = source
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{where}")


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, position: int, source: str | None = None):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", position, source)


class ArityError(ParseError):
    pass


class GradientError(ContactFlexError):
    """Gradient evaluation failed (non-finite derivative)."""


class SingularJacobianError(ContactFlexError):
    pass


class InversionFailed(ContactFlexError):
    """Newton inversion did not converge within the iteration cap."""


class NotInNeighborhood(ContactFlexError):
    """The map is too far from the identity to be factorized at this epsilon."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class NoFeasibleEpsilon(ContactFlexError):
    pass


class JunctionMismatch(ContactFlexError):
    def __init__(self, message: str, mismatch: float):
        self.mismatch = mismatch
        super().__init__(f"{message} (sup-norm mismatch {mismatch:.3e})")


class SubdivisionCapExceeded(ContactFlexError):
    pass


class StepTooLarge(ContactFlexError):
    pass


class ContainmentFailure(ContactFlexError):
    pass


class PositivityShortfall(ContactFlexError):
    def __init__(self, message: str, min_alpha: float, location=None):
        self.min_alpha = min_alpha
        self.location = location
        super().__init__(f"{message} (min alpha {min_alpha:.6g} at {location})")


class BoxExit(ContactFlexError):
    """A transported point left the certified box."""


class ConfigError(ContactFlexError):
    pass
