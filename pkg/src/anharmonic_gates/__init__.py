"""Robust entangling gates for trapped ions on an anharmonic bus mode."""

__version__ = "0.1.0"
