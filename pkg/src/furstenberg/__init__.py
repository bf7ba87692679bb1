"""Stationary measures of random walks on PSL(2,R)."""

__version__ = "0.1.0"
