"""Transmission-constraint screening for single-step DC unit commitment."""

__version__ = "0.1.0"
