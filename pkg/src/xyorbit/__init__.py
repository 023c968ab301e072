"""Discretised rotation dynamics for the long-range XY model."""

__version__ = "0.1.0"
