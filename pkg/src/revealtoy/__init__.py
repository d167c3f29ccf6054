"""Desk-scale layered image decomposition with a rectified-flow transformer."""

__version__ = "0.1.0"
