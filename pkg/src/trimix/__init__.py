"""Simulation and verification tools for the row-addition walk on unitriangular matrices mod m."""

__version__ = "0.1.0"
