"""Stochastic sensor-to-edge transmission scheduling for industrial CPS."""

__version__ = "0.1.0"
