"""Polarity transform calculus on geometric convex functions."""
__version__ = "0.1.0"
