"""Simulation stack for an RTK-guided crop-spraying robot."""

__version__ = "0.1.0"
