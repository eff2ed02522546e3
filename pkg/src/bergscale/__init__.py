"""Bergman kernel, metric and curvature asymptotics along tangential approach sequences."""
from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
