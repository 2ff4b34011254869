"""Dyson Brownian drivers, multi-slit Loewner flows and their hydrodynamic limit."""

__version__ = "0.1.0"
