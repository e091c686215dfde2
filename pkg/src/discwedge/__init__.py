"""Analytic discs attached to totally real edges, Kobayashi metric bounds and boundary regularity experiments."""

__version__ = "0.1.0"
