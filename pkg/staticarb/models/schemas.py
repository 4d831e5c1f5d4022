"""
Pydantic models for quotes, curves, reports and API requests/responses.
"""
from datetime import datetime
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat


class OptionQuote(BaseModel):
    """One raw market observation of a European call."""
    model_config = ConfigDict(frozen=True)

    expiry: float = Field(..., description="Time to expiry as a year fraction")
    strike: float = Field(..., description="Strike in currency units")
    mid: float = Field(..., description="Reference (mid) premium")
    bid: Optional[float] = None
    ask: Optional[float] = None

    @property
    def has_band(self) -> bool:
        return self.bid is not None and self.ask is not None


class CurvePoint(BaseModel):
    """Discount factor and forward observed for one expiry."""
    model_config = ConfigDict(frozen=True)

    expiry: float
    discount: float = Field(..., description="D(T) in (0, 1]")
    forward: float = Field(..., description="F(T) > 0")


class ConstraintKind(str, Enum):
    """Categories of the reduced static-arbitrage constraint system."""
    OUTRIGHT = "Outright"
    VERTICAL_SPREAD_LOWER = "VerticalSpreadLower"
    VERTICAL_SPREAD_UPPER_AT_ZERO = "VerticalSpreadUpperAtZero"
    VERTICAL_BUTTERFLY = "VerticalButterfly"
    CALENDAR_SPREAD = "CalendarSpread"
    CALENDAR_VERTICAL_SPREAD = "CalendarVerticalSpread"
    CALENDAR_BUTTERFLY_ABSOLUTE = "CalendarButterflyAbsolute"
    CALENDAR_BUTTERFLY_RELATIVE = "CalendarButterflyRelative"

    @property
    def is_calendar(self) -> bool:
        return self in _CALENDAR_KINDS


_CALENDAR_KINDS = frozenset({
    ConstraintKind.CALENDAR_SPREAD,
    ConstraintKind.CALENDAR_VERTICAL_SPREAD,
    ConstraintKind.CALENDAR_BUTTERFLY_ABSOLUTE,
    ConstraintKind.CALENDAR_BUTTERFLY_RELATIVE,
})


class RowViolation(BaseModel):
    """A single violated constraint row."""
    row: int
    kind: ConstraintKind
    residual: float


class ViolationReport(BaseModel):
    """Violation counts and residuals of a price vector against a constraint system."""
    total: int = 0
    per_category: Dict[ConstraintKind, int] = Field(default_factory=dict)
    worst_residual: float = 0.0
    violated_rows: List[RowViolation] = Field(default_factory=list)
    calendar_fraction: float = 0.0
    row_count: int = 0
    violated_fraction: float = 0.0
    tolerance: float = 0.0

    @property
    def clean(self) -> bool:
        return self.total == 0


class ObjectiveKind(str, Enum):
    """Repair objective."""
    L1 = "l1"
    L1BA = "l1ba"


class RepairConfig(BaseModel):
    """Options of a single repair."""
    model_config = ConfigDict(frozen=True)

    objective: ObjectiveKind = ObjectiveKind.L1
    delta0_override: Optional[PositiveFloat] = None
    feas_tol: PositiveFloat = 1e-9


class RepairResult(BaseModel):
    """Outcome of a repair LP."""
    objective: ObjectiveKind
    epsilon: List[float]
    repaired: List[float]
    objective_value: float
    n_perturbed: int
    n_effective: int
    delta0_used: Optional[float] = None
    min_residual: float
    row_count: int
    solver_status: str
    iterations: int
    build_seconds: float = 0.0
    solve_seconds: float = 0.0


class PortfolioLeg(BaseModel):
    """One option position of an executable-arbitrage portfolio."""
    quote_index: int
    position: Literal[1, -1]
    execution_price: float = Field(..., description="Normalized ask (long) or bid (short)")
    execution_premium: float = Field(..., description="Execution price in currency units")
    weight: float = Field(..., description="Absolute row coefficient")


class ArbitragePortfolio(BaseModel):
    """A constraint row violated even at bid/ask-extremal prices."""
    legs: List[PortfolioLeg]
    immediate_profit: float
    row_index: int
    kind: ConstraintKind
    bound: float
    extremal_value: float


class NoiseSpec(BaseModel):
    """Synthetic pollution parameters for the stress protocol."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(..., alias="lambda", gt=0, le=1, description="Fraction of polluted prices")
    sigma: float = Field(..., gt=0, description="Log-noise standard deviation")
    seed: int = 0
    trials: int = Field(default=1, ge=1)


class StressReport(BaseModel):
    """Recovery statistics of a stress run."""
    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(..., alias="lambda")
    sigma: float
    seed: int
    trials: int
    objective: ObjectiveKind
    n_prices: int
    polluted_per_trial: int
    lambda_hats: List[float] = Field(..., description="Fraction of repaired prices differing from the clean baseline")
    mean_lambda_hat: float
    repair_fractions: List[float] = Field(
        default_factory=list, description="Fraction of prices the repair moved away from the noisy input"
    )
    log_ratios: List[float] = Field(default_factory=list)
    dropped_log_ratios: int = 0


class TimeseriesRow(BaseModel):
    """One line of the snapshot time-series report."""
    snapshot: str
    n_perturbed: Optional[int] = None
    n_effective: Optional[int] = None
    portfolios: Optional[int] = None
    error: Optional[str] = None


# ---------------------------------------------------------------------------
# API payloads
# ---------------------------------------------------------------------------

class SurfaceRequest(BaseModel):
    """Quotes plus curves for one snapshot."""
    quotes: List[OptionQuote] = Field(..., min_length=1)
    curves: List[CurvePoint] = Field(..., min_length=1)
    tolerance: Optional[float] = Field(None, ge=0)


class RepairRequest(SurfaceRequest):
    """Request model for a repair."""
    objective: ObjectiveKind = ObjectiveKind.L1
    delta0_override: Optional[PositiveFloat] = None


class RepairResponse(BaseModel):
    """Repair result plus premiums mapped back to quote order."""
    result: RepairResult
    repaired_premiums: List[Tuple[int, float]]


class StressRequest(SurfaceRequest):
    """Request model for a stress run."""
    noise: NoiseSpec
    objective: ObjectiveKind = ObjectiveKind.L1
    rescale_bands: bool = False


class HealthCheckResponse(BaseModel):
    """Response model for health check."""
    status: str = "healthy"
    app_name: str
    app_version: str
    timestamp: datetime

