"""Nonclassicality from the joint statistics of simultaneous measurements."""

__version__ = "0.1.0"
