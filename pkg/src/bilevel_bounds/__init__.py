"""Bilevel optimization: penalty-based solvers, hard instances and verification tools."""
from .core import (
    BilevelProblem,
    CallableProblem,
    Oracle,
    OracleTally,
    QuadraticLowerLevel,
    QueryTrace,
    SmoothnessProfile,
    StochasticOracle,
    make_sfo,
)
from .errors import (
    BilevelError,
    BudgetExhausted,
    CapabilityError,
    ConditioningError,
    ContractError,
    DataError,
    DivergenceError,
    ParseError,
    RegimeError,
)
from .kernels import BACKEND

__version__ = "0.1.0"
