"""Closed-loop simulation and comparison of MPPT strategies for a vertical-axis tidal turbine."""

__version__ = "0.1.0"
