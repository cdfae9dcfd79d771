"""Conditional-affordance driving stack on a deterministic 2D town simulator."""

__version__ = "0.1.0"
