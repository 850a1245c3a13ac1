"""Numerical experiments for horospherical orbit counting in SO(n,1)."""

__version__ = "0.1.0"
