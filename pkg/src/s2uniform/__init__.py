"""Effective uniformization of nearly round 2-spheres."""

__version__ = "0.1.0"
