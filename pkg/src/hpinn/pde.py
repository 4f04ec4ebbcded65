"""Problem statement for 1-D conservation-diffusion equations

    u_t + f(u)_x = nu * u_xx + h(x, t)

on an interval with Dirichlet boundaries.  ``flux``/``dflux`` are written as
plain arithmetic so they apply equally to ndarrays and autodiff graph nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = ["PdeSpec", "burgers"]


@dataclass(frozen=True)
class PdeSpec:
    flux: Callable  # f(u)
    dflux: Callable  # f'(u), the characteristic speed
    viscosity: float = 0.0
    source: Optional[Callable] = None  # h(x, t) -> ndarray, None means zero
    domain: tuple = (-1.0, 1.0)
    boundary_value: float = 0.0  # Dirichlet value at both ends
    initial: Optional[Callable] = None  # u(0, x)

    def __post_init__(self):
        if self.viscosity < 0:
            raise ValueError("viscosity must be nonnegative")
        if self.domain[1] <= self.domain[0]:
            raise ValueError("domain must be a nonempty interval")

    def max_speed(self, u: np.ndarray) -> float:
        return float(np.max(np.abs(self.dflux(u))))


def burgers(viscosity: float = 0.0) -> PdeSpec:
    """Burgers equation on [-1,1] with u(0,x) = -sin(pi x) and u(t,+-1) = 0."""
    return PdeSpec(
        flux=lambda u: u * u * 0.5,
        dflux=lambda u: u,
        viscosity=viscosity,
        source=None,
        domain=(-1.0, 1.0),
        boundary_value=0.0,
        initial=lambda x: -np.sin(np.pi * x),
    )
