"""Steady-state simulator for a single-NV0 microwave-to-optical transducer."""

__version__ = "0.1.0"
