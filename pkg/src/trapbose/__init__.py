"""Finite-temperature profiles of elongated trapped Bose gases."""

__version__ = "0.1.0"
