"""Cubic spline smoothing kernel with compact support.

All SPH summations in this package are built on the classic cubic B-spline,
parameterized directly by the support radius h: the kernel is exactly zero
for |r| >= h. The simulation convention is h = 2 * particle spacing
(= 4 * particle radius).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

# support radius in units of particle spacing
SUPPORT_OVER_SPACING = 2.0


@dataclass(frozen=True)
class KernelSpec:
    """Support radius and space dimension of the smoothing kernel."""

    h: float
    dim: int = 3

    def __post_init__(self):
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError(f"kernel support radius must be positive, got {self.h}")
        if self.dim not in (2, 3):
            raise ValueError(f"kernel dimension must be 2 or 3, got {self.dim}")

    @property
    def sigma(self) -> float:
        """Normalization constant so that the kernel integrates to one."""
        if self.dim == 3:
            return 8.0 / (math.pi * self.h**3)
        return 40.0 / (7.0 * math.pi * self.h**2)


@njit(cache=True, inline="always")
def w_cubic(r, h, sigma):
    """Kernel value at distance r; zero for r >= h."""
    q = r / h
    if q >= 1.0:
        return 0.0
    if q < 0.5:
        return sigma * (6.0 * q * q * (q - 1.0) + 1.0)
    u = 1.0 - q
    return sigma * 2.0 * u * u * u


@njit(cache=True, inline="always")
def dw_cubic(r, h, sigma):
    """Radial derivative dW/dr at distance r; zero for r >= h."""
    q = r / h
    if q >= 1.0:
        return 0.0
    if q < 0.5:
        return sigma / h * (18.0 * q * q - 12.0 * q)
    u = 1.0 - q
    return -sigma / h * 6.0 * u * u


def kernel_value(r_vec, spec: KernelSpec) -> float:
    """W(r, h) for a displacement vector r. Radially symmetric."""
    r = float(np.linalg.norm(np.asarray(r_vec, dtype=np.float64)))
    return w_cubic(r, spec.h, spec.sigma)


def kernel_gradient(r_vec, spec: KernelSpec) -> np.ndarray:
    """Gradient of W with respect to the first particle's position.

    Antisymmetric in r; defined as the zero vector at r = 0.
    """
    rv = np.asarray(r_vec, dtype=np.float64)
    r = float(np.linalg.norm(rv))
    if r == 0.0 or r >= spec.h:
        return np.zeros_like(rv)
    return (dw_cubic(r, spec.h, spec.sigma) / r) * rv
