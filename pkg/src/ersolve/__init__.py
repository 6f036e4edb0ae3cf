"""Finite-element solver for stationary electrorheological Stokes flow with slip."""

__version__ = "0.1.0"
