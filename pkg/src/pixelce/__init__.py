"""Sparse uplink channel estimation for pixel-antenna systems."""

__version__ = "0.1.0"
