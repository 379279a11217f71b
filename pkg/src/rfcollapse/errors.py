"""Exception types shared across the package."""


class RFCollapseError(Exception):
    """Base class for all package errors."""


class ConstructionError(RFCollapseError, ValueError):
    """A sample or space could not be built from the given data."""


class DomainError(RFCollapseError, ValueError):
    """An argument lies outside the domain of an operation."""


class UsageError(RFCollapseError, ValueError):
    """Objects were combined in an inconsistent way."""


class SizeCapError(RFCollapseError, ValueError):
    """Input exceeds a combinatorial or memory cap."""


class HypothesisError(RFCollapseError):
    """The hypothesis of a checked statement does not hold for the input."""


class IntegrationError(RFCollapseError, ArithmeticError):
    """A flow integration left its admissible region."""


class QuotientError(RFCollapseError):
    """A group action does not define an equivalence relation on the region."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
