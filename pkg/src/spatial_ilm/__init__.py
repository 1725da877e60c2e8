"""Spatial individual-level epidemic models with piecewise infection kernels."""

__version__ = "0.1.0"
