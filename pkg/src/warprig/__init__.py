"""Numerical rigidity checks for closed surfaces in warped-product ambients."""

__version__ = "0.1.0"
