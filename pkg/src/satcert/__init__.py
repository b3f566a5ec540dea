"""Nonquadratic Lyapunov certificates for saturated linear feedback loops."""
from .satmodel import SatLimits, SaturatedSystem, sat, dz

__version__ = "0.1.0"

__all__ = ["SatLimits", "SaturatedSystem", "sat", "dz", "__version__"]
