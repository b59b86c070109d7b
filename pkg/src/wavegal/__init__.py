"""Adaptive wavelet-Galerkin solver for transient heat conduction on the unit square."""

from .errors import WavegalError

__all__ = ["WavegalError"]
__version__ = "0.1.0"
