"""Lyapunov exponents of compact linear cocycles measured in Sobolev-type norms."""
__version__ = "0.1.0"
