"""Landfast sea-ice dynamics on a structured grid."""

__version__ = "0.1.0"
