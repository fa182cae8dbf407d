"""Pseudospectral simulation and Monte-Carlo verification for the cubic
defocusing wave equation on the 3-torus with randomized Fourier data."""

__version__ = "0.1.0"
