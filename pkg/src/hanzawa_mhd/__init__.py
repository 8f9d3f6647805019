"""Hanzawa-transform machinery for two-phase MHD free interfaces."""
from __future__ import annotations

__version__ = "0.1.0"
