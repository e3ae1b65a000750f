"""Numerical laboratory for CGF bound chains, splittable Gaussian fields and GAF zeros."""

__version__ = "0.1.0"

from ._accel import BACKEND  # noqa: E402
from .rng import SeededStream  # noqa: E402

__all__ = ["BACKEND", "SeededStream", "__version__"]
