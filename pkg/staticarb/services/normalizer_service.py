"""
Market normalization service: quotes and curves to normalized surface, and back.
"""
import math
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from staticarb.config.settings import Settings, settings as default_settings
from staticarb.models.errors import (
    CrossedQuote,
    DimensionMismatch,
    DuplicateStrike,
    InputError,
    MissingCurve,
    NonPositiveInput,
)
from staticarb.models.schemas import CurvePoint, OptionQuote
from staticarb.models.surface import NormalizedSurface


class NormalizerService:
    """Converts raw quotes into forward-moneyness coordinates and back."""

    def __init__(self, settings: Optional[Settings] = None):
        """Initialize the normalizer with tolerance settings."""
        self.settings = settings or default_settings

    def normalize_surface(
        self,
        quotes: Sequence[OptionQuote],
        curves: Sequence[CurvePoint],
    ) -> NormalizedSurface:
        """
        Build the sorted, augmented normalized surface.

        Args:
            quotes: Raw call quotes; their list position is the source index
            curves: One discount/forward point per distinct quote expiry

        Returns:
            NormalizedSurface with k = K/F, c = C/(D F) and one augmented
            (k=0, c=1) node per expiry

        Raises:
            MissingCurve, DuplicateStrike, NonPositiveInput, CrossedQuote
        """
        if not quotes:
            raise InputError("At least one quote is required")

        curve_expiries, curve_table = self._validate_curves(curves)
        for index, quote in enumerate(quotes):
            self._validate_quote(index, quote)

        groups: Dict[int, List[int]] = defaultdict(list)
        for index, quote in enumerate(quotes):
            groups[self._match_curve(quote.expiry, curve_expiries)].append(index)

        floor = self.settings.spread_floor
        expiries, discounts, forwards = [], [], []
        strikes, prices = [], []
        ask_spread, bid_spread, quoted_band, source_index = [], [], [], []

        for curve_pos in sorted(groups):
            curve = curve_table[curve_pos]
            scale = curve.discount * curve.forward
            members = sorted(groups[curve_pos], key=lambda q: (quotes[q].strike, q))
            k = np.array([quotes[q].strike / curve.forward for q in members])
            self._check_duplicates(curve.expiry, k, members, quotes)

            mids = np.array([quotes[q].mid for q in members])
            ask = np.array([_side(quotes[q].ask, quotes[q].mid, +1) for q in members]) / scale
            bid = np.array([_side(quotes[q].bid, quotes[q].mid, -1) for q in members]) / scale
            band = np.array([quotes[q].has_band for q in members]) & (ask > 0) & (bid > 0)

            expiries.append(curve.expiry)
            discounts.append(curve.discount)
            forwards.append(curve.forward)
            strikes.append(np.concatenate(([0.0], k)))
            prices.append(np.concatenate(([1.0], mids / scale)))
            ask_spread.append(np.maximum(ask, floor))
            bid_spread.append(np.maximum(bid, floor))
            quoted_band.append(band)
            source_index.extend(members)

        surface = NormalizedSurface(
            expiries=np.array(expiries),
            discounts=np.array(discounts),
            forwards=np.array(forwards),
            strikes=tuple(strikes),
            prices=tuple(prices),
            ask_spread=np.concatenate(ask_spread),
            bid_spread=np.concatenate(bid_spread),
            quoted_band=np.concatenate(quoted_band),
            source_index=np.array(source_index),
        )

        floored = int((~surface.quoted_band).sum())
        if floored:
            logger.warning(f"Spread floor {floor:g} applied to {floored} of {surface.n_nodes} nodes")
        logger.info(f"Normalized surface: m={surface.m} expiries, N={surface.n_nodes} nodes")
        return surface

    def denormalize_prices(
        self,
        surface: NormalizedSurface,
        c_hat: Sequence[float],
    ) -> List[Tuple[int, float]]:
        """
        Map normalized prices back to currency premiums.

        Args:
            surface: Surface the price vector refers to
            c_hat: One normalized price per non-augmented node

        Returns:
            (source quote index, premium) pairs ordered by source index
        """
        c_hat = np.asarray(c_hat, dtype=float)
        if c_hat.shape != (surface.n_nodes,):
            raise DimensionMismatch(surface.n_nodes, c_hat.size, "price vector")
        premiums = c_hat * surface.flat_scale
        order = np.argsort(surface.source_index, kind="stable")
        return [(int(surface.source_index[p]), float(premiums[p])) for p in order]

    # -- validation ----------------------------------------------------------

    def _validate_curves(self, curves: Sequence[CurvePoint]) -> Tuple[np.ndarray, List[CurvePoint]]:
        table: List[CurvePoint] = []
        for curve in sorted(curves, key=lambda c: c.expiry):
            if not (_finite(curve.expiry) and curve.expiry > 0):
                raise NonPositiveInput(f"Curve expiry must be positive, got {curve.expiry!r}")
            if not (_finite(curve.discount) and 0 < curve.discount <= 1):
                raise NonPositiveInput(f"Discount factor must lie in (0, 1], got {curve.discount!r}")
            if not (_finite(curve.forward) and curve.forward > 0):
                raise NonPositiveInput(f"Forward must be positive, got {curve.forward!r}")
            if table and self._same_expiry(table[-1].expiry, curve.expiry):
                if (table[-1].discount, table[-1].forward) != (curve.discount, curve.forward):
                    raise InputError(f"Conflicting curve points for expiry {curve.expiry!r}")
                continue
            table.append(curve)
        return np.array([c.expiry for c in table]), table

    @staticmethod
    def _validate_quote(index: int, quote: OptionQuote) -> None:
        if not (_finite(quote.expiry) and quote.expiry > 0):
            raise NonPositiveInput(f"Quote {index}: expiry must be positive, got {quote.expiry!r}")
        if not (_finite(quote.strike) and quote.strike > 0):
            raise NonPositiveInput(f"Quote {index}: strike must be positive, got {quote.strike!r}")
        if not (_finite(quote.mid) and quote.mid >= 0):
            raise NonPositiveInput(f"Quote {index}: mid must be non-negative, got {quote.mid!r}")
        for side in (quote.bid, quote.ask):
            if side is not None and not (_finite(side) and side >= 0):
                raise NonPositiveInput(f"Quote {index}: bid/ask must be non-negative, got {side!r}")
        bid = quote.bid if quote.bid is not None else quote.mid
        ask = quote.ask if quote.ask is not None else quote.mid
        if not bid <= quote.mid <= ask:
            raise CrossedQuote(index, bid, quote.mid, ask)

    def _same_expiry(self, a: float, b: float) -> bool:
        return abs(a - b) <= self.settings.expiry_match_tolerance * max(1.0, abs(a), abs(b))

    def _match_curve(self, expiry: float, curve_expiries: np.ndarray) -> int:
        pos = int(np.searchsorted(curve_expiries, expiry))
        for candidate in (pos - 1, pos):
            if 0 <= candidate < len(curve_expiries) and self._same_expiry(curve_expiries[candidate], expiry):
                return candidate
        raise MissingCurve(expiry)

    def _check_duplicates(
        self,
        expiry: float,
        k: np.ndarray,
        members: List[int],
        quotes: Sequence[OptionQuote],
    ) -> None:
        gaps = np.diff(k)
        tol = self.settings.strike_dedup_tolerance * np.maximum(1.0, k[1:])
        clash = np.flatnonzero(gaps <= tol)
        if clash.size:
            pos = int(clash[0])
            first, second = members[pos], members[pos + 1]
            raise DuplicateStrike(expiry, quotes[first].strike, [first, second])


def _finite(value: float) -> bool:
    return value is not None and math.isfinite(value)


def _side(quoted: Optional[float], mid: float, sign: int) -> float:
    """Raw half-spread of one side, 0 when the side is not quoted."""
    if quoted is None:
        return 0.0
    return (quoted - mid) * sign


# Global normalizer instance
normalizer_service = NormalizerService()
