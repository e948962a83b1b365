"""Numerical lab for Hermitian curvature flow and curvature cones."""

__version__ = "0.1.0"
