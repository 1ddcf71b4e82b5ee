"""Cube search for stable MC-dropout hyperparameter regions on spatial data."""

__version__ = "0.1.0"
