"""Reservoir-computing forecasters trained with dynamical-invariant constraints."""

__version__ = "0.1.0"
