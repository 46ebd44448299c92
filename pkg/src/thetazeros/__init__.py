"""Zeros of random holomorphic sections on complex tori."""
from .torus import Torus

__all__ = ["Torus"]
__version__ = "0.1.0"
