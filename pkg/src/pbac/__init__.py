"""Ledger-backed access control for device domains, with a deterministic simulator."""

__version__ = "0.1.0"
