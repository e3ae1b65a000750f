"""Compactly supported radial test functions h on the plane.

The built-in family is the bump h(z) = (1 - |z - c|^2 / a^2)^p on the disk of
radius a about c, zero outside.  For p >= 3 it is C^2 with h, grad h and the
Hessian vanishing on the boundary circle.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class Bump:
    p: int = 3
    center: complex = 0j
    scale: float = 1.0

    def __post_init__(self):
        if self.p < 3:
            raise ValueError("p >= 3 is needed for a C^2 bump")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def support_radius(self) -> float:
        """Radius of a disk about the origin containing the support."""
        return abs(self.center) + self.scale

    def _u(self, z):
        z = np.asarray(z, dtype=complex)
        return 1.0 - np.abs(z - self.center) ** 2 / self.scale**2

    def __call__(self, z):
        u = self._u(z)
        return np.where(u > 0, np.maximum(u, 0.0) ** self.p, 0.0)

    def laplacian(self, z):
        u = self._u(z)
        p = self.p
        up = np.maximum(u, 0.0)
        val = 4.0 * p * up ** (p - 2) * ((p - 1) - p * up) / self.scale**2
        return np.where(u > 0, val, 0.0)

    @property
    def integral(self) -> float:
        """Integral of h over the plane, pi a^2 / (p + 1)."""
        return math.pi * self.scale**2 / (self.p + 1)

    @property
    def l2_laplacian(self) -> float:
        """Integral of |Delta h|^2 from the polynomial antiderivative in u = 1 - rho^2."""
        p = self.p
        core = (p - 1) ** 2 / (2 * p - 3) - 2 * p * (p - 1) / (2 * p - 2) + p * p / (2 * p - 1)
        return 16.0 * p * p * math.pi * core / self.scale**2

    def radial_quadrature(self) -> dict:
        """The same three integrals by adaptive radial quadrature (independent path)."""
        a, p = self.scale, self.p

        def h(rho):
            return (1 - (rho / a) ** 2) ** p

        def lap(rho):
            u = 1 - (rho / a) ** 2
            return 4 * p * u ** (p - 2) * ((p - 1) - p * u) / a**2

        opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
        i_h = integrate.quad(lambda r: 2 * math.pi * r * h(r), 0, a, **opts)[0]
        # this integral is zero, so only an absolute tolerance is meaningful
        i_lap = integrate.quad(lambda r: 2 * math.pi * r * lap(r), 0, a, epsabs=1e-12, epsrel=0.0, limit=200)[0]
        i_l2 = integrate.quad(lambda r: 2 * math.pi * r * lap(r) ** 2, 0, a, **opts)[0]
        return {"integral": i_h, "integral_laplacian": i_lap, "l2_laplacian": i_l2}

    def dilate(self, r: float) -> "Bump":
        """h(z / r), itself a bump with scaled center and radius."""
        return Bump(self.p, self.center * r, self.scale * r)


def default_pair() -> tuple[Bump, Bump]:
    """Two test functions with norm ratio |Delta h1|^2 / |Delta h2|^2 = 9/16.

    Both supports lie in the unit disk.  The O(1/r^2) correction to the
    variance grows like 1/scale^2, so the second scale is kept at 3/4.
    """
    return Bump(3), Bump(3, center=0.25, scale=0.75)
