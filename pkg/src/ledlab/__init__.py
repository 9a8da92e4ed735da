"""Localization from embodied dialog on synthetic multi-floor maps."""

__version__ = "0.1.0"
