"""Decentralised cross-entropy planning for the coordinated escort problem."""

__version__ = "0.1.0"
