"""Residual prior diffusion for low-dimensional point clouds."""

__version__ = "0.1.0"
