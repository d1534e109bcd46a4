"""Desk-scale adversarial mutation lab for synthetic PE binaries."""

__version__ = "0.1.0"
