"""Deformable multiple-kernel tracking for moving cameras."""

__version__ = "0.1.0"
