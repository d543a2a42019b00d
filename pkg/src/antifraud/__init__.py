"""Dialogue-based identity fraud detection over personal knowledge graphs."""

__version__ = "0.1.0"
