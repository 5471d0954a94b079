"""Coupled quantum fluctuations of light polarization and collective atomic spin."""

__version__ = "0.1.0"
