"""Desk-scale simulator for a waveguide-array photonic interface to a neutral-atom array."""

__version__ = "0.1.0"
