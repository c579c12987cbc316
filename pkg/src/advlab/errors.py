"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Shapes or dimensions do not line up."""


class UnsupportedLoss(ValueError):
    """The requested operation is undefined for this loss."""


class AssumptionViolation(ValueError):
    """An input breaks the data-domain precondition (perturbation ball leaves the unit cube)."""


class BudgetExceeded(ValueError):
    """An enumeration would exceed its configured size guard."""


class InvariantViolation(AssertionError):
    """A computed quantity broke an ordering or feasibility invariant."""
