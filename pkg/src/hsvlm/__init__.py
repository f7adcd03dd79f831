"""Hyperspectral patch classification via contrastive vision-text alignment."""

__version__ = "0.1.0"

from .backend import ACTIVE_BACKEND  # noqa: F401
