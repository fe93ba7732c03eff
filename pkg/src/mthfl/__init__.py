"""Deterministic simulator of multi-tier hierarchical federated learning over vertical heterogeneous networks."""

__version__ = "0.1.0"
