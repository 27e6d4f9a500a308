"""Gaussian Sobolev and BV extension experiments on planar sections."""

__version__ = "0.1.0"
