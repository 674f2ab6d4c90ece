"""Sampling-based model-predictive control over spline knot points."""

__version__ = "0.1.0"
