"""Blockchain storage auditing: protocol library and deterministic network simulator."""

__version__ = "1.0.0"
