"""Numerical laboratory for scattering metrics, radiation fields and cap resonances."""

__version__ = "0.1.0"
