"""Base-parabola phreatic surface for seepage through a homogeneous dam.

Classical construction (see docs/casagrande.md for the derivation and
references): the free surface inside a trapezoidal dam on an impervious
base is approximated by a parabola with focus at the downstream toe. The
parabola passes through the corrected entry point located 0.3 * Delta
upstream-horizontal of where the reservoir surface meets the upstream
face, Delta being the horizontal projection of the wetted upstream slope.
With the focus at the origin the parabola is y^2 = 2 a x + a^2 where the
focal parameter a = sqrt(d^2 + H^2) - d follows from the entry point at
horizontal distance d and height H.

This module is a validation oracle, not part of the solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DamGeometry:
    """Trapezoidal dam cross-section on an impervious horizontal base.

    upstream_slope is the horizontal run per unit rise of the upstream
    face; the face recedes from the upstream toe toward the crest.
    """

    upstream_toe_x: float
    downstream_toe_x: float
    upstream_slope: float
    height: float
    base_y: float = 0.0

    def __post_init__(self):
        if self.downstream_toe_x <= self.upstream_toe_x:
            raise ValueError("downstream toe must lie downstream of the upstream toe")
        if self.height <= 0:
            raise ValueError(f"dam height must be positive, got {self.height}")
        if self.upstream_slope < 0:
            raise ValueError(f"upstream slope must be non-negative, got {self.upstream_slope}")


@dataclass(frozen=True)
class CasagrandeSolution:
    dam: DamGeometry
    head: float
    focal: float  # focal parameter a of the base parabola, m
    entry_x: float  # corrected entry point A'

    def height(self, x) -> np.ndarray:
        """Phreatic surface elevation above the base at horizontal position x.

        Level with the reservoir upstream of the entry point; parabolic
        between entry point and focus; zero downstream of the focus.
        """
        x = np.asarray(x, dtype=np.float64)
        xf = self.dam.downstream_toe_x - x  # distance upstream of the focus
        y = np.sqrt(np.maximum(self.focal**2 + 2.0 * self.focal * xf, 0.0))
        y = np.minimum(y, self.head)
        y = np.where(x < self.entry_x, self.head, y)
        y = np.where(x > self.dam.downstream_toe_x, 0.0, y)
        return y + self.dam.base_y

    def sample(self, n=200):
        xs = np.linspace(self.entry_x, self.dam.downstream_toe_x, n)
        return xs, self.height(xs)


def casagrande_surface(dam: DamGeometry, head: float) -> CasagrandeSolution:
    """Base-parabola solution for upstream head H above the dam base."""
    if head > dam.height:
        raise ValueError(
            f"head {head} exceeds dam height {dam.height}"
        )
    if head < 0:
        raise ValueError(f"head must be non-negative, got {head}")
    delta = dam.upstream_slope * head
    entry_x = dam.upstream_toe_x + 0.7 * delta  # 0.3 * Delta upstream of A
    d = dam.downstream_toe_x - entry_x
    if d <= 0:
        raise ValueError("corrected entry point lies downstream of the focus; "
                         "dam too short for this head")
    focal = float(np.sqrt(d * d + head * head) - d)
    return CasagrandeSolution(dam=dam, head=float(head), focal=focal, entry_x=entry_x)
