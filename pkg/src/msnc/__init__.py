"""Multifunctional self-powered node circuit: coupler, rectifier and matching-network design."""

__version__ = "0.1.0"
