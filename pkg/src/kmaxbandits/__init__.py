"""Continuous K-Max bandits (DCK-UCB) and exponential K-Min bandits (MLE-Exp)."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
