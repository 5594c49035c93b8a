"""Capped frog model (stochastic combustion) simulator and verification harness."""

__version__ = "0.1.0"
