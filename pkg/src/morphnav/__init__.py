"""Embodiment-randomized indoor navigation simulator and benchmark."""

__version__ = "0.1.0"
