"""Quantum Fisher information and curvature of entanglement for two-qubit probes."""

__version__ = "0.1.0"
