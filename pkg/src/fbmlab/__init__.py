"""fbm-lab — a numerical laboratory for SDEs driven by fractional Brownian motion."""

__version__ = "0.1.0"
