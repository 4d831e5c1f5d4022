"""
Black-Scholes call prices and synthetic quote surfaces.

Synthetic surfaces serve as arbitrage-free baselines for tests, the stress
protocol and the ``synth`` command.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from staticarb.models.schemas import CurvePoint, OptionQuote

# 1W, 2W, 3W, 1M, 2M, 3M, 4M, 6M, 9M, 1Y, 18M, 2Y, 3Y
FX_TENORS: Tuple[float, ...] = (
    1 / 52, 2 / 52, 3 / 52, 1 / 12, 2 / 12, 3 / 12, 4 / 12, 6 / 12, 9 / 12, 1.0, 1.5, 2.0, 3.0,
)

# standard normal quantiles of the 10/15/25/35/50/65/75/85/90 delta points
FX_QUANTILES: Tuple[float, ...] = tuple(
    float(q) for q in norm.ppf([0.10, 0.15, 0.25, 0.35, 0.50, 0.65, 0.75, 0.85, 0.90])
)


def black_scholes_call(forward, strike, expiry, vol, discount=1.0) -> np.ndarray:
    """
    Undiscounted-forward Black-Scholes call premium ``D (F N(d1) - K N(d2))``.

    Vectorized over numpy-broadcastable inputs. Zero total volatility returns
    the discounted intrinsic value.
    """
    forward, strike, expiry, vol, discount = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (forward, strike, expiry, vol, discount))
    )
    total_vol = vol * np.sqrt(expiry)
    intrinsic = discount * np.maximum(forward - strike, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(forward / strike) + 0.5 * total_vol ** 2) / total_vol
        d2 = d1 - total_vol
        price = discount * (forward * norm.cdf(d1) - strike * norm.cdf(d2))
    return np.where(total_vol > 0, price, intrinsic)


def synthetic_quotes(
    expiries: Sequence[float] = FX_TENORS,
    vol: float = 0.2,
    spot: float = 1.0,
    rate: float = 0.0,
    dividend: float = 0.0,
    moneyness_quantiles: Sequence[float] = FX_QUANTILES,
    half_spread_fraction: Optional[float] = None,
) -> Tuple[List[OptionQuote], List[CurvePoint]]:
    """
    Flat-volatility Black-Scholes quotes on a tenor x moneyness grid.

    Strikes are ``F exp(vol sqrt(T) q + vol^2 T / 2)`` for each quantile ``q``.
    With ``half_spread_fraction`` set, bid/ask bands are added whose
    half-width is that fraction of the premium, widened in the wings by
    ``1 + |q|`` and capped at half the premium.

    Returns:
        (quotes, curves) ordered by expiry then strike
    """
    if vol <= 0:
        raise ValueError("vol must be positive")
    quotes: List[OptionQuote] = []
    curves: List[CurvePoint] = []
    q = np.asarray(moneyness_quantiles, dtype=float)

    for expiry in expiries:
        discount = float(np.exp(-rate * expiry))
        forward = float(spot * np.exp((rate - dividend) * expiry))
        curves.append(CurvePoint(expiry=float(expiry), discount=discount, forward=forward))

        total_vol = vol * np.sqrt(expiry)
        strikes = forward * np.exp(total_vol * q + 0.5 * total_vol ** 2)
        mids = black_scholes_call(forward, strikes, expiry, vol, discount)

        for quantile, strike, mid in zip(q, strikes, mids):
            bid = ask = None
            if half_spread_fraction is not None:
                half = min(half_spread_fraction * (1.0 + abs(quantile)), 0.5) * mid
                bid, ask = float(mid - half), float(mid + half)
            quotes.append(OptionQuote(expiry=float(expiry), strike=float(strike), mid=float(mid), bid=bid, ask=ask))

    return quotes, curves
