"""Optimized set reduction toolkit for data-driven cost estimation."""
__version__ = "0.1.0"
