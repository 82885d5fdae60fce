"""Numerical lab for Ricci-DeTurck flow of rough metrics on the flat 4-torus."""

__version__ = "0.1.0"
