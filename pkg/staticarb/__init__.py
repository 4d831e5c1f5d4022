"""
staticarb

Detection and repair of static arbitrage in European call option surfaces.
Quotes are normalized to forward moneyness, checked against a reduced set of
linear no-arbitrage constraints and, when needed, repaired by a linear
program that perturbs as few prices as possible.
"""

__version__ = "0.3.0"
