"""Executability analysis of code snippets mined from Q&A dumps."""

__version__ = "0.1.0"
