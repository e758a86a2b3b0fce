"""Periodic cubic box geometry and minimum-image arithmetic.

The wrap and minimum-image helpers below are the single source of truth for
periodic geometry.  ``minimum_image`` is exactly antisymmetric in floating
point (``minimum_image(a-b) == -minimum_image(b-a)`` bitwise) away from the
``-L/2`` boundary, which the pair engine relies on for exact pairwise
cancellation of antisymmetric kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import GeometryError


@dataclass(frozen=True)
class BoxGeometry:
    """Cubic periodic simulation volume of side ``side_length``."""

    side_length: float
    periodic: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.side_length) and self.side_length > 0):
            raise GeometryError(f"side_length must be positive, got {self.side_length}")
        if not self.periodic:
            raise GeometryError("only periodic boxes are supported")

    @property
    def volume(self) -> float:
        return self.side_length**3


def wrap_position(p, box: BoxGeometry) -> np.ndarray:
    """Map positions into [0, L) componentwise, preserving value modulo L.

    Accepts a single 3-vector or an (n, 3) array.
    """
    p = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise GeometryError("non-finite position component")
    L = box.side_length
    out = p - L * np.floor(p / L)
    # floor rounding can land exactly on L for tiny negative inputs
    out[out >= L] -= L
    out[out < 0.0] = 0.0
    return out


def minimum_image(dr, box: BoxGeometry) -> np.ndarray:
    """Fold separation vectors into [-L/2, L/2) componentwise.

    Equals ``dr`` modulo L.  The half-open convention maps exactly +L/2
    to -L/2 so ties break deterministically.
    """
    dr = np.asarray(dr, dtype=np.float64)
    if not np.all(np.isfinite(dr)):
        raise GeometryError("non-finite separation component")
    L = box.side_length
    return dr - L * np.floor(dr / L + 0.5)


@njit(cache=True, inline="always")
def min_image_scalar(d: float, L: float) -> float:
    """Scalar minimum image used inside compiled pair kernels."""
    return d - L * np.floor(d / L + 0.5)
