"""Numerical laboratory for advection with p-Laplacian diffusion on the torus."""
__version__ = "0.1.0"
