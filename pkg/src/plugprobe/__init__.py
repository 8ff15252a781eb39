"""Dimmer-probed smart plug simulation and multi-load classification."""

__version__ = "0.1.0"
