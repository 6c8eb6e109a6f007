"""Blocked randomized experiments designed with machine learning on
pre-period panel data."""

__version__ = "0.1.0"
