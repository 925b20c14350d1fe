"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Raised when arguments violate a documented precondition."""


class SearchFailure(RuntimeError):
    """A randomized or exhaustive search ran out of budget.

    Carries whatever best candidate the search had found, so callers can
    report partial progress instead of discarding it.
    """

    def __init__(self, message, best=None, achieved=None):
        super().__init__(message)
        self.best = best
        self.achieved = achieved


class BudgetExhausted(SearchFailure):
    """An iterative construction hit its level/piece budget before its target."""
