"""Desk-scale LEO satellite network emulation orchestrator.

Control plane (constellation dynamics, revisioned state store, weighted
round-robin placement, dependency-aware construction) plus an executable
model of the redirect-map data plane.
"""
from satnet.errors import (
    ConflictError,
    ContractViolation,
    DeliveryError,
    SatnetError,
    StaleWatchError,
    ValidationError,
    WatchOverflowError,
)

__version__ = "0.1.0"

__all__ = [
    "ConflictError",
    "ContractViolation",
    "DeliveryError",
    "SatnetError",
    "StaleWatchError",
    "ValidationError",
    "WatchOverflowError",
    "__version__",
]
