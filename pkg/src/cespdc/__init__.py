"""Simulation and analysis of nondegenerate cavity-enhanced SPDC photon-pair sources."""

__version__ = "0.1.0"
