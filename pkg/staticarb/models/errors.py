"""
Exception hierarchy for staticarb.

Input problems derive from ``InputError`` (also a ``ValueError``) and map to
exit code 1 on the CLI and HTTP 422 on the API. Solver problems derive from
``SolverFailure`` (also a ``RuntimeError``).
"""
from typing import Any, Optional, Sequence


class StaticArbError(Exception):
    """Base class for all staticarb errors."""


class InputError(StaticArbError, ValueError):
    """Invalid input data or arguments."""


class MissingCurve(InputError):
    """A quote expiry has no matching curve point."""

    def __init__(self, expiry: float):
        self.expiry = expiry
        super().__init__(f"No curve point for expiry {expiry!r}")


class DuplicateStrike(InputError):
    """Two quotes share the same (expiry, strike) node."""

    def __init__(self, expiry: float, strike: float, indices: Sequence[int]):
        self.expiry = expiry
        self.strike = strike
        self.indices = list(indices)
        super().__init__(
            f"Duplicate quotes at expiry={expiry!r}, strike={strike!r} (quote indices {self.indices})"
        )


class NonPositiveInput(InputError):
    """Expiry, strike, forward or discount outside its domain."""


class CrossedQuote(InputError):
    """Mid price outside [bid, ask]."""

    def __init__(self, index: int, bid: float, mid: float, ask: float):
        self.index = index
        super().__init__(f"Quote {index}: mid {mid!r} outside [bid {bid!r}, ask {ask!r}]")


class DimensionMismatch(InputError):
    """A vector does not have the expected length."""

    def __init__(self, expected: int, actual: int, what: str = "vector"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what} has {actual} entries, expected {expected}")


class EqualStrikes(InputError):
    """Slope requested between two nodes with the same strike."""


class NonPositivePrice(InputError):
    """A price that must be strictly positive is not."""


class InputNotArbitrageFree(InputError):
    """A baseline surface that must be arbitrage free violates constraints."""

    def __init__(self, violations: int):
        self.violations = violations
        super().__init__(f"Baseline surface is not arbitrage free ({violations} violated constraints)")


class InvalidNoiseSpec(InputError):
    """Noise parameters outside their domain."""


class SnapshotParseError(InputError):
    """A snapshot file could not be parsed."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None,
                 column: Optional[str] = None):
        self.path = path
        self.line = line
        self.column = column
        location = path or "<snapshot>"
        if line is not None:
            location += f":{line}"
        if column is not None:
            location += f" [{column}]"
        super().__init__(f"{location}: {message}")


class SolverFailure(StaticArbError, RuntimeError):
    """The LP solver did not return an optimal solution."""

    def __init__(self, message: str, diagnostics: Optional[Any] = None):
        self.diagnostics = diagnostics
        super().__init__(message)
