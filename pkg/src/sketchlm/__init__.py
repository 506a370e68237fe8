"""Sketches as primitive-token sequences: abstraction, a small decoder-only
transformer trained from scratch, and generation/completion/classification
on top of it."""

__version__ = "0.1.0"
