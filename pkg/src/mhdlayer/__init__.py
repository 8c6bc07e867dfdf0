"""Boundary-layer correctors and a channel MHD solver for vanishing-dissipation studies."""

__version__ = "0.1.0"
