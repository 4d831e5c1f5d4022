"""
Shared fixtures: Black-Scholes surfaces, hand-checked instances and snapshot files.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pytest

from staticarb.config.settings import Settings
from staticarb.models.schemas import CurvePoint, OptionQuote
from staticarb.models.surface import NormalizedSurface
from staticarb.services.constraint_service import ConstraintService
from staticarb.services.normalizer_service import NormalizerService
from staticarb.services.repair_service import RepairService
from staticarb.utils import snapshot_io
from staticarb.utils.pricing import synthetic_quotes


def unit_curve_quotes(
    expiries: Sequence[float],
    strikes: Sequence[Sequence[float]],
    mids: Sequence[Sequence[float]],
    half_spreads: Optional[Sequence[Sequence[Tuple[float, float]]]] = None,
) -> Tuple[List[OptionQuote], List[CurvePoint]]:
    """Quotes with F = D = 1 so that normalized strikes and prices equal the raw ones.

    ``half_spreads[i][j]`` is ``(bid_side, ask_side)``.
    """
    quotes = []
    for i, expiry in enumerate(expiries):
        for j, (strike, mid) in enumerate(zip(strikes[i], mids[i])):
            bid = ask = None
            if half_spreads is not None:
                down, up = half_spreads[i][j]
                bid, ask = mid - down, mid + up
            quotes.append(OptionQuote(expiry=expiry, strike=strike, mid=mid, bid=bid, ask=ask))
    curves = [CurvePoint(expiry=e, discount=1.0, forward=1.0) for e in expiries]
    return quotes, curves


def unit_surface(expiries, strikes, mids, half_spreads=None) -> NormalizedSurface:
    quotes, curves = unit_curve_quotes(expiries, strikes, mids, half_spreads)
    return NormalizerService().normalize_surface(quotes, curves)


def random_grid(rng: np.random.Generator, max_expiries: int = 4, max_strikes: int = 8, min_gap: float = 0.03):
    """Random expiries and strictly separated strikes in (0.2, 3)."""
    m = int(rng.integers(1, max_expiries + 1))
    expiries = np.sort(rng.uniform(0.05, 3.0, size=m)) + np.arange(m) * 0.01
    strikes = []
    for _ in range(m):
        n = int(rng.integers(2, max_strikes + 1))
        while True:
            ks = np.sort(rng.uniform(0.2, 3.0, size=n))
            if np.all(np.diff(ks) >= min_gap):
                break
        strikes.append(ks.tolist())
    return expiries.tolist(), strikes


@pytest.fixture
def settings():
    return Settings()


@pytest.fixture
def normalizer():
    return NormalizerService()


@pytest.fixture
def constraints():
    return ConstraintService()


@pytest.fixture
def repairs():
    return RepairService()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def bs_quotes():
    """20% flat-vol surface on the 13 x 9 grid with heterogeneous bid/ask bands."""
    return synthetic_quotes(vol=0.2, rate=0.02, half_spread_fraction=0.02)


@pytest.fixture
def bs_surface(bs_quotes):
    quotes, curves = bs_quotes
    return NormalizerService().normalize_surface(quotes, curves)


@pytest.fixture
def hand_quotes():
    """Single expiry, strikes 1 and 2, mids 0.3 and 0.4: one vertical-spread violation."""
    return unit_curve_quotes([1.0], [[1.0, 2.0]], [[0.3, 0.4]], [[(0.01, 0.01), (0.01, 0.01)]])


@pytest.fixture
def hand_surface(hand_quotes):
    quotes, curves = hand_quotes
    return NormalizerService().normalize_surface(quotes, curves)


@pytest.fixture
def bs_snapshot(tmp_path, bs_quotes):
    quotes, curves = bs_quotes
    path = tmp_path / "bs.csv"
    snapshot_io.write_snapshot(path, quotes, curves)
    return path


@pytest.fixture
def hand_snapshot(tmp_path, hand_quotes):
    quotes, curves = hand_quotes
    path = tmp_path / "hand.csv"
    snapshot_io.write_snapshot(path, quotes, curves)
    return path
