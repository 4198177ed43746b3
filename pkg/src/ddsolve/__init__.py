"""Neumann-Neumann type domain decomposition for semi- and quasilinear elliptic equations."""

__version__ = "0.1.0"
