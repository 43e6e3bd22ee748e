"""Agentic specification generation for a Move subset."""

__version__ = "0.1.0"
