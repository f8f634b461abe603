"""Vine-copula portfolio engine: AR-GARCH marginals, C/D/R-vines, allocation and risk backtests."""

__version__ = "0.3.0"
