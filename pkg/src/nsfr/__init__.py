"""Entropy-stable nonlinearly stable flux reconstruction (NSFR) for the 3D
compressible Euler equations on periodic curvilinear hexahedral grids."""

__version__ = "0.1.0"
