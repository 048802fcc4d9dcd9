"""Detecting contexts that license adverbial presupposition triggers."""

__version__ = "0.1.0"
