"""Keyword fingerprinting of HTTPS search sessions."""

__version__ = "0.1.0"
