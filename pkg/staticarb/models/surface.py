"""
Normalized call price surface.

Nodes are addressed as ``(i, j)``: ``i`` indexes the expiry (ascending) and
``j`` the strike within that expiry, with ``j = 0`` the augmented zero-strike
node (k = 0, c = 1). Non-augmented nodes are also numbered by a flat variable
index in expiry-major order, which is the ordering of the price vector ``c``.
"""
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from staticarb.models.errors import DimensionMismatch

Node = Tuple[int, int]


def _frozen(array: np.ndarray, dtype=float) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class NormalizedSurface:
    """Sorted, augmented grid of forward-moneyness strikes and normalized prices."""

    expiries: np.ndarray
    discounts: np.ndarray
    forwards: np.ndarray
    strikes: Tuple[np.ndarray, ...]
    prices: Tuple[np.ndarray, ...]
    ask_spread: np.ndarray
    bid_spread: np.ndarray
    quoted_band: np.ndarray
    source_index: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "expiries", _frozen(self.expiries))
        object.__setattr__(self, "discounts", _frozen(self.discounts))
        object.__setattr__(self, "forwards", _frozen(self.forwards))
        object.__setattr__(self, "strikes", tuple(_frozen(k) for k in self.strikes))
        object.__setattr__(self, "prices", tuple(_frozen(c) for c in self.prices))
        object.__setattr__(self, "ask_spread", _frozen(self.ask_spread))
        object.__setattr__(self, "bid_spread", _frozen(self.bid_spread))
        object.__setattr__(self, "quoted_band", _frozen(self.quoted_band, dtype=bool))
        object.__setattr__(self, "source_index", _frozen(self.source_index, dtype=np.int64))

    # -- shape -------------------------------------------------------------

    @property
    def m(self) -> int:
        """Number of expiries."""
        return len(self.expiries)

    @cached_property
    def counts(self) -> np.ndarray:
        """Non-augmented node count n_i per expiry."""
        return np.array([len(k) - 1 for k in self.strikes], dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        """N, the number of non-augmented nodes."""
        return int(self.counts.sum())

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.counts)[:-1])).astype(np.int64)

    # -- node addressing ---------------------------------------------------

    def is_augmented(self, node: Node) -> bool:
        return node[1] == 0

    def var_index(self, node: Node) -> Optional[int]:
        """Flat variable index of a node, ``None`` for augmented nodes."""
        i, j = node
        if j == 0:
            return None
        return int(self.offsets[i]) + j - 1

    def strike(self, node: Node) -> float:
        return float(self.strikes[node[0]][node[1]])

    def price(self, node: Node) -> float:
        return float(self.prices[node[0]][node[1]])

    # -- flat views --------------------------------------------------------

    @cached_property
    def flat_prices(self) -> np.ndarray:
        """The price vector c (non-augmented nodes, expiry-major)."""
        return _frozen(np.concatenate([c[1:] for c in self.prices]))

    @cached_property
    def flat_strikes(self) -> np.ndarray:
        return _frozen(np.concatenate([k[1:] for k in self.strikes]))

    @cached_property
    def flat_expiry_index(self) -> np.ndarray:
        return _frozen(np.repeat(np.arange(self.m), self.counts), dtype=np.int64)

    @cached_property
    def flat_scale(self) -> np.ndarray:
        """D_i * F_i per non-augmented node, the normalized-to-currency factor."""
        return _frozen((self.discounts * self.forwards)[self.flat_expiry_index])

    # -- derived surfaces ----------------------------------------------------

    def with_prices(self, c: np.ndarray) -> "NormalizedSurface":
        """Copy of the surface with the non-augmented prices replaced by ``c``."""
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n_nodes,):
            raise DimensionMismatch(self.n_nodes, c.size, "price vector")
        prices = tuple(
            np.concatenate(([1.0], c[start:start + n]))
            for start, n in zip(self.offsets, self.counts)
        )
        return replace(self, prices=prices)

    def with_spreads(self, ask: np.ndarray, bid: np.ndarray) -> "NormalizedSurface":
        ask = np.asarray(ask, dtype=float)
        bid = np.asarray(bid, dtype=float)
        if ask.shape != (self.n_nodes,) or bid.shape != (self.n_nodes,):
            raise DimensionMismatch(self.n_nodes, min(ask.size, bid.size), "spread vector")
        return replace(self, ask_spread=ask, bid_spread=bid)
