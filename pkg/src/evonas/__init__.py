"""Evolutionary architecture search guided by a from-scratch layer-sequence model."""

__version__ = "0.1.0"
