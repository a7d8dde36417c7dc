"""Sparse Gaussian graphical models for one or several datasets."""
__version__ = "0.1.0"
