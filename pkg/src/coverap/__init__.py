"""Cooperative radar perception: DSP, synchronization, datasets, detector and evaluation."""

__version__ = "0.1.0"
