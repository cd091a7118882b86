"""Minimal planning-domain inference from demonstrations."""

__version__ = "0.1.0"
