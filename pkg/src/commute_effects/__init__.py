"""Commuting-time accessibility maps and balanced dose-response estimation."""
__version__ = "0.1.0"
