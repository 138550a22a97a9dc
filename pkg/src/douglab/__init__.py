"""Simulation and bound evaluation for SA and DOUG.

Submodules are imported explicitly, e.g. ``from douglab import sim``.
"""

__version__ = "0.1.0"

__all__ = ["linalg", "schedule", "model", "sim", "bounds", "transport", "analysis", "config", "cli", "verify",
           "errors"]
