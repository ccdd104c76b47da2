"""Characteristic evolution and r^p-hierarchy diagnostics for waves on black-hole backgrounds."""
__version__ = "0.1.0"
