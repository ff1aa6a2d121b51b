"""Porosity-aware density estimation, saturation, and density rates.

All estimators run over a per-step pair cache (kernel values/gradients for
every CSR neighbor pair) so that densities, saturation, pressure iterations
and force assembly all see identical frozen kernel data within a step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .kernels import KernelSpec, dw_cubic, w_cubic
from .neighbors import NeighborLists
from .state import SimulationState


@dataclass
class PairData:
    """Per-pair geometry aligned with the CSR `indices` array."""

    dx: np.ndarray  # x_i - x_j for pair k = (i -> indices[k]), (E,3)
    r: np.ndarray  # |dx| (E,)
    W: np.ndarray  # kernel values (E,)
    gradW: np.ndarray  # kernel gradients wrt x_i (E,3)
    x_all: np.ndarray  # concatenated positions [fluid; solid; boundary]
    h: float
    w0: float  # kernel value at zero distance


@njit(cache=True, parallel=True)
def _pair_geometry(x, start, indices, h, sigma, dx, r, W, gradW):
    n = start.shape[0] - 1
    for i in prange(n):
        for k in range(start[i], start[i + 1]):
            j = indices[k]
            d0 = x[i, 0] - x[j, 0]
            d1 = x[i, 1] - x[j, 1]
            d2 = x[i, 2] - x[j, 2]
            rr = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            dx[k, 0] = d0
            dx[k, 1] = d1
            dx[k, 2] = d2
            r[k] = rr
            W[k] = w_cubic(rr, h, sigma)
            if rr > 0.0:
                c = dw_cubic(rr, h, sigma) / rr
            else:
                c = 0.0
            gradW[k, 0] = c * d0
            gradW[k, 1] = c * d1
            gradW[k, 2] = c * d2


def build_pair_data(state: SimulationState, nl: NeighborLists) -> PairData:
    spec = KernelSpec(h=nl.h)
    x_all = np.ascontiguousarray(
        np.concatenate([state.fluid.x, state.solid.x, state.boundary.x], axis=0)
    )
    e = len(nl.indices)
    dx = np.empty((e, 3))
    r = np.empty(e)
    W = np.empty(e)
    gradW = np.empty((e, 3))
    _pair_geometry(x_all, nl.start, nl.indices, nl.h, spec.sigma, dx, r, W, gradW)
    return PairData(dx=dx, r=r, W=W, gradW=gradW, x_all=x_all, h=nl.h, w0=spec.sigma)


@njit(cache=True, parallel=True)
def _fluid_density_kernel(
    start, indices, fluid_end, solid_end, W,
    m_f, V0_s, phi_s, psi_b, n_fluid, n_fs, w0, rho0_f,
    rho_out, rho_hat_out,
):
    for i in prange(n_fluid):
        rho = m_f[i] * w0  # self contribution
        vol_sb = 0.0
        for k in range(start[i], fluid_end[i]):
            rho += m_f[indices[k]] * W[k]
        for k in range(fluid_end[i], solid_end[i]):
            t = indices[k] - n_fluid
            vol_sb += (1.0 - phi_s[t]) * V0_s[t] * W[k]
        for k in range(solid_end[i], start[i + 1]):
            vol_sb += psi_b[indices[k] - n_fs] * W[k]
        rho_out[i] = rho
        # fluid term shared with rho bit-for-bit: m_j = rho0 * V0_j uniformly,
        # so rho already equals rho0 * sum V0_j W
        rho_hat_out[i] = rho + rho0_f * vol_sb


@njit(cache=True, parallel=True)
def _solid_density_kernel(
    start, indices, fluid_end, solid_end, W,
    V0_s, phi_s, rho0_s, psi_b, n_fluid, n_solid, n_fs, w0,
    rho_out,
):
    for s in prange(n_solid):
        g = n_fluid + s
        vol = V0_s[s] * w0  # self
        for k in range(fluid_end[g], solid_end[g]):
            t = indices[k] - n_fluid
            vol += V0_s[t] * W[k]
        for k in range(solid_end[g], start[g + 1]):
            vol += psi_b[indices[k] - n_fs] * W[k]
        rho_out[s] = (1.0 - phi_s[s]) * rho0_s[s] * vol


@njit(cache=True, parallel=True)
def _saturation_kernel(
    start, indices, fluid_end, solid_end, W,
    V0_f, m_s, rho_s, phi_s, n_fluid, n_solid, w0,
    S_out,
):
    for s in prange(n_solid):
        g = n_fluid + s
        num = 0.0
        den = m_s[s] / rho_s[s] * w0  # self, current pore-aware volume
        for k in range(start[g], fluid_end[g]):
            num += V0_f[indices[k]] * W[k]
        for k in range(fluid_end[g], solid_end[g]):
            t = indices[k] - n_fluid
            den += m_s[t] / rho_s[t] * W[k]
        phi = phi_s[s]
        if phi <= 0.0:
            S_out[s] = 0.0
        else:
            val = num / (phi * den)
            if val < 0.0:
                val = 0.0
            elif val > 1.0:
                val = 1.0
            S_out[s] = val


@njit(cache=True, parallel=True)
def _density_rate_kernel(
    start, indices, fluid_end, solid_end, gradW,
    V0_f, V0_s, phi_s, psi_b, n_fluid, n_solid, n_fs, rho0_f, rho0_s,
    vf, vs, rate_f, rate_s,
):
    for i in prange(n_fluid):
        acc = 0.0
        vi0 = vf[i, 0]
        vi1 = vf[i, 1]
        vi2 = vf[i, 2]
        for k in range(start[i], fluid_end[i]):
            j = indices[k]
            acc += V0_f[j] * (
                (vf[j, 0] - vi0) * gradW[k, 0]
                + (vf[j, 1] - vi1) * gradW[k, 1]
                + (vf[j, 2] - vi2) * gradW[k, 2]
            )
        for k in range(fluid_end[i], solid_end[i]):
            t = indices[k] - n_fluid
            acc += (1.0 - phi_s[t]) * V0_s[t] * (
                (vs[t, 0] - vi0) * gradW[k, 0]
                + (vs[t, 1] - vi1) * gradW[k, 1]
                + (vs[t, 2] - vi2) * gradW[k, 2]
            )
        for k in range(solid_end[i], start[i + 1]):
            b = indices[k] - n_fs
            acc += psi_b[b] * (
                (0.0 - vi0) * gradW[k, 0]
                + (0.0 - vi1) * gradW[k, 1]
                + (0.0 - vi2) * gradW[k, 2]
            )
        rate_f[i] = -rho0_f * acc

    for s in prange(n_solid):
        g = n_fluid + s
        acc = 0.0
        vi0 = vs[s, 0]
        vi1 = vs[s, 1]
        vi2 = vs[s, 2]
        for k in range(fluid_end[g], solid_end[g]):
            t = indices[k] - n_fluid
            acc += V0_s[t] * (
                (vs[t, 0] - vi0) * gradW[k, 0]
                + (vs[t, 1] - vi1) * gradW[k, 1]
                + (vs[t, 2] - vi2) * gradW[k, 2]
            )
        for k in range(solid_end[g], start[g + 1]):
            b = indices[k] - n_fs
            acc += psi_b[b] * (
                (0.0 - vi0) * gradW[k, 0]
                + (0.0 - vi1) * gradW[k, 1]
                + (0.0 - vi2) * gradW[k, 2]
            )
        rate_s[s] = -(1.0 - phi_s[s]) * rho0_s[s] * acc


def compute_densities(state: SimulationState, nl: NeighborLists, pd: PairData):
    """Fill rho, rho_hat (fluid) and rho (solid) from current positions."""
    f, s, b = state.fluid, state.solid, state.boundary
    _fluid_density_kernel(
        nl.start, nl.indices, nl.fluid_end, nl.solid_end, pd.W,
        f.m, s.V0, s.phi, b.psi, f.n, f.n + s.n, pd.w0, f.rho0,
        f.rho, f.rho_hat,
    )
    _solid_density_kernel(
        nl.start, nl.indices, nl.fluid_end, nl.solid_end, pd.W,
        s.V0, s.phi, s.rho0, b.psi, f.n, s.n, f.n + s.n, pd.w0,
        s.rho,
    )


def compute_saturation(state: SimulationState, nl: NeighborLists, pd: PairData):
    """Fill solid saturation S from current densities. Requires rho current."""
    f, s = state.fluid, state.solid
    _saturation_kernel(
        nl.start, nl.indices, nl.fluid_end, nl.solid_end, pd.W,
        f.V0, s.m, s.rho, s.phi, f.n, s.n, pd.w0,
        s.S,
    )


def density_rates(
    state: SimulationState,
    nl: NeighborLists,
    pd: PairData,
    vf: np.ndarray,
    vs: np.ndarray,
):
    """D(rho_hat)/Dt per fluid particle and D(rho)/Dt per solid particle.

    Evaluates the exact time derivative of the density sums under frozen
    neighbor topology for the given velocity fields (boundary velocity is
    zero by contract). Also reused with accelerations as the matrix-free
    pressure operator.
    """
    f, s, b = state.fluid, state.solid, state.boundary
    rate_f = np.empty(f.n)
    rate_s = np.empty(s.n)
    _density_rate_kernel(
        nl.start, nl.indices, nl.fluid_end, nl.solid_end, pd.gradW,
        f.V0, s.V0, s.phi, b.psi, f.n, s.n, f.n + s.n, f.rho0, s.rho0,
        np.ascontiguousarray(vf), np.ascontiguousarray(vs), rate_f, rate_s,
    )
    return rate_f, rate_s
