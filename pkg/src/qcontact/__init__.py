"""Exact computational engine for higher-order tangency quantum products."""

__version__ = "0.1.0"
