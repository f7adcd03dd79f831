"""Offline data preparation for the hsvlm training pipeline."""

__version__ = "0.1.0"
