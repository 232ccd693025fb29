"""Two-emitter photon interference: Monte-Carlo simulation and analysis."""

__version__ = "0.1.0"
