"""Exact chain-level computations for free dg-Lie algebroids at desk scale."""

__version__ = "0.1.0"
