"""Numerical laboratory for hitting probabilities of fractional Brownian motion with drift."""

__version__ = "0.1.0"
