"""Bose-gas fluctuation numerics: scattering, effective equations, truncated Fock dynamics."""

__version__ = "0.1.0"
