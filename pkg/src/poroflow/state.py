"""Particle state arrays for the three phases.

All per-particle quantities are flat numpy arrays (structure-of-arrays) so
the numba kernels can operate on them directly. Solid material parameters
are expanded to per-particle arrays at scene build time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .materials import FluidMaterial, PorousSolidMaterial


def _vec(n: int) -> np.ndarray:
    return np.zeros((n, 3), dtype=np.float64)


def _sca(n: int) -> np.ndarray:
    return np.zeros(n, dtype=np.float64)


@dataclass
class FluidState:
    x: np.ndarray  # positions (n,3), m
    v: np.ndarray  # velocities (n,3), m/s
    m: np.ndarray  # masses (n,), kg
    V0: np.ndarray  # rest volumes (n,), m^3
    rho: np.ndarray  # phase density (fluid neighbors only), kg/m^3
    rho_hat: np.ndarray  # porous density (solid-aware), kg/m^3
    p: np.ndarray  # pressure, Pa
    a_press: np.ndarray  # pressure acceleration (n,3), m/s^2
    body: np.ndarray  # body id (n,), int64
    rho0: float  # material rest density
    mu_vis: float  # material dynamic viscosity

    @property
    def n(self) -> int:
        return len(self.m)

    @classmethod
    def empty(cls, rho0: float = 1000.0, mu_vis: float = 0.0) -> "FluidState":
        return cls.allocate(0, rho0, mu_vis)

    @classmethod
    def allocate(cls, n: int, rho0: float, mu_vis: float) -> "FluidState":
        return cls(
            x=_vec(n), v=_vec(n), m=_sca(n), V0=_sca(n),
            rho=_sca(n), rho_hat=_sca(n), p=_sca(n), a_press=_vec(n),
            body=np.zeros(n, dtype=np.int64), rho0=rho0, mu_vis=mu_vis,
        )


@dataclass
class SolidState:
    x: np.ndarray
    x0: np.ndarray  # rest positions
    v: np.ndarray
    m: np.ndarray
    V0: np.ndarray
    rho: np.ndarray  # porous object density, kg/m^3
    S: np.ndarray  # saturation in [0,1]
    p: np.ndarray
    a_press: np.ndarray
    R: np.ndarray  # per-particle rotation (n,3,3)
    b_buo: np.ndarray  # buoyancy right-hand side (n,3), N
    fixed: np.ndarray  # (n,) bool, velocity pinned to zero
    body: np.ndarray  # (n,) int64
    # material parameters expanded per particle
    phi: np.ndarray
    rho0: np.ndarray  # solid phase rest density
    mu0: np.ndarray
    lam0: np.ndarray
    mu_por: np.ndarray
    c_cap0: np.ndarray
    eta_cap: np.ndarray
    eta_bloat: np.ndarray
    eta_m: np.ndarray
    eta_l: np.ndarray
    mu_floor: np.ndarray
    hg_k: np.ndarray  # zero-energy-mode penalty coefficient
    compressible: np.ndarray  # (n,) bool

    @property
    def n(self) -> int:
        return len(self.m)

    @classmethod
    def allocate(cls, n: int) -> "SolidState":
        R = np.zeros((n, 3, 3))
        R[:] = np.eye(3)
        return cls(
            x=_vec(n), x0=_vec(n), v=_vec(n), m=_sca(n), V0=_sca(n),
            rho=_sca(n), S=_sca(n), p=_sca(n), a_press=_vec(n), R=R,
            b_buo=_vec(n), fixed=np.zeros(n, dtype=bool),
            body=np.zeros(n, dtype=np.int64),
            phi=_sca(n), rho0=_sca(n), mu0=_sca(n), lam0=_sca(n),
            mu_por=_sca(n), c_cap0=_sca(n), eta_cap=_sca(n), eta_bloat=_sca(n),
            eta_m=_sca(n), eta_l=_sca(n), mu_floor=_sca(n), hg_k=_sca(n),
            compressible=np.zeros(n, dtype=bool),
        )

    def set_material(self, sel: np.ndarray, mat: PorousSolidMaterial):
        self.phi[sel] = mat.porosity
        self.rho0[sel] = mat.solid_phase_rest_density
        self.mu0[sel] = mat.lame_mu
        self.lam0[sel] = mat.lame_lambda
        self.mu_por[sel] = mat.porous_viscosity
        self.c_cap0[sel] = mat.capillary_c0
        self.eta_cap[sel] = mat.capillary_falloff
        self.eta_bloat[sel] = mat.bloating
        self.eta_m[sel] = mat.mu_change
        self.eta_l[sel] = mat.lambda_change
        self.mu_floor[sel] = mat.mu_floor_fraction
        self.hg_k[sel] = mat.zero_energy_penalty
        self.compressible[sel] = mat.compressible_pores


@dataclass
class BoundaryState:
    x: np.ndarray
    psi: np.ndarray  # pseudo-volumes (n,), m^3
    v: np.ndarray  # prescribed velocities, used only to move positions
    body: np.ndarray

    @property
    def n(self) -> int:
        return len(self.psi)

    @classmethod
    def allocate(cls, n: int) -> "BoundaryState":
        return cls(x=_vec(n), psi=_sca(n), v=_vec(n),
                   body=np.zeros(n, dtype=np.int64))


@dataclass
class SimulationState:
    fluid: FluidState
    solid: SolidState
    boundary: BoundaryState
    time: float = 0.0
    step: int = 0
    # velocities at the start of the previous step, for the warm start
    v_prev_fluid: np.ndarray = field(default_factory=lambda: _vec(0))
    v_prev_solid: np.ndarray = field(default_factory=lambda: _vec(0))
    # step index at which densities/saturation were last computed
    densities_stamp: int = -1

    def copy(self) -> "SimulationState":
        import copy as _copy

        return _copy.deepcopy(self)
