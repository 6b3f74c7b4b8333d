"""Exception types shared across the package."""


class BilevelError(Exception):
    """Base class for all package errors."""


class ContractError(BilevelError, ValueError):
    """A caller violated a documented precondition (dimensions, ranges)."""


class CapabilityError(BilevelError):
    """The problem does not expose the requested evaluator."""


class ConditioningError(BilevelError, ArithmeticError):
    """A linear system is singular to working precision."""


class RegimeError(BilevelError, ValueError):
    """Parameters fall outside the regime where a construction is valid."""


class DivergenceError(BilevelError, ArithmeticError):
    """An iterate became nonfinite."""


class DataError(BilevelError, ValueError):
    """A dataset is structurally invalid."""


class ParseError(DataError):
    """A dataset or config file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BudgetExhausted(BilevelError):
    """Raised inside a run when the oracle-call budget is used up."""
