"""Finite-volume simulation and diagnostics for the isotropic Landau equation."""

__version__ = "0.1.0"
