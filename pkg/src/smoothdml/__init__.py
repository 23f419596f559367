"""Sigmoid-smoothed debiased machine learning for the maximized welfare gain."""

__version__ = "0.1.0"
