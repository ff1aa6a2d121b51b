"""Implicit pressure projection over overlapping fluid and porous solid.

A single relaxed-Jacobi solve over all fluid and solid particles drives the
predicted densities back to their per-particle targets:

  fluid                -> fluid rest density (constraining rho_hat)
  incompressible solid -> (1 - phi) * solid phase rest density
  compressible solid   -> solid phase rest density (pores may collapse)

Pressures are clamped non-negative every iteration, so only compression is
corrected. The pressure-to-density-change operator is applied matrix-free:
accelerations from the current pressures, then the density rate those
accelerations would induce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .density import PairData, _density_rate_kernel
from .neighbors import NeighborLists
from .state import SimulationState


class PressureSolveDiverged(RuntimeError):
    """Average density error grew over 10 consecutive Jacobi iterations."""


@dataclass
class PressureStats:
    iterations: int
    avg_error: float  # average positive relative density error at exit
    max_error: float
    converged: bool


def density_targets(state: SimulationState):
    """Per-particle density targets; fluid target is the scalar rest density."""
    s = state.solid
    target_s = np.where(s.compressible, s.rho0, (1.0 - s.phi) * s.rho0)
    return state.fluid.rho0, target_s


def predict_densities(state, nl, pd, vf, vs, dt):
    """rho* = rho + dt * D(rho)/Dt evaluated with the given velocities."""
    from .density import density_rates

    rate_f, rate_s = density_rates(state, nl, pd, vf, vs)
    return state.fluid.rho_hat + dt * rate_f, state.solid.rho + dt * rate_s


@njit(cache=True, parallel=True)
def _pressure_accel_kernel(
    start, indices, fluid_end, solid_end, gradW,
    V0_f, V0_s, phi_s, psi_b, rho_hat, rho_s, fixed_s,
    n_fluid, n_solid, n_fs, rho0_f, rho0_s,
    p_f, p_s, a_f, a_s,
):
    for i in prange(n_fluid):
        ki = p_f[i] / (rho_hat[i] * rho_hat[i])
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        for k in range(start[i], fluid_end[i]):
            j = indices[k]
            c = V0_f[j] * (ki + p_f[j] / (rho_hat[j] * rho_hat[j]))
            acc0 += c * gradW[k, 0]
            acc1 += c * gradW[k, 1]
            acc2 += c * gradW[k, 2]
        for k in range(fluid_end[i], solid_end[i]):
            t = indices[k] - n_fluid
            c = (1.0 - phi_s[t]) * V0_s[t] * ki
            acc0 += c * gradW[k, 0]
            acc1 += c * gradW[k, 1]
            acc2 += c * gradW[k, 2]
        for k in range(solid_end[i], start[i + 1]):
            c = psi_b[indices[k] - n_fs] * ki
            acc0 += c * gradW[k, 0]
            acc1 += c * gradW[k, 1]
            acc2 += c * gradW[k, 2]
        a_f[i, 0] = -rho0_f * acc0
        a_f[i, 1] = -rho0_f * acc1
        a_f[i, 2] = -rho0_f * acc2

    for s in prange(n_solid):
        if fixed_s[s]:
            a_s[s, 0] = 0.0
            a_s[s, 1] = 0.0
            a_s[s, 2] = 0.0
            continue
        g = n_fluid + s
        ks = p_s[s] / (rho_s[s] * rho_s[s])
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        for k in range(fluid_end[g], solid_end[g]):
            t = indices[k] - n_fluid
            c = V0_s[t] * (ks + p_s[t] / (rho_s[t] * rho_s[t]))
            acc0 += c * gradW[k, 0]
            acc1 += c * gradW[k, 1]
            acc2 += c * gradW[k, 2]
        for k in range(solid_end[g], start[g + 1]):
            c = psi_b[indices[k] - n_fs] * ks
            acc0 += c * gradW[k, 0]
            acc1 += c * gradW[k, 1]
            acc2 += c * gradW[k, 2]
        coef = -(1.0 - phi_s[s]) * rho0_s[s]
        a_s[s, 0] = coef * acc0
        a_s[s, 1] = coef * acc1
        a_s[s, 2] = coef * acc2


@njit(cache=True, parallel=True)
def _diagonal_kernel(
    start, indices, fluid_end, solid_end, gradW,
    V0_f, V0_s, phi_s, psi_b, rho_hat, rho_s, fixed_s,
    n_fluid, n_solid, n_fs, rho0_f, rho0_s,
    aii_f, aii_s,
):
    # d(Ap)_k / dp_k: the particle's own acceleration response plus the
    # reaction acceleration its pressure induces on same-phase neighbors
    for i in prange(n_fluid):
        inv2 = 1.0 / (rho_hat[i] * rho_hat[i])
        g0 = 0.0
        g1 = 0.0
        g2 = 0.0
        react = 0.0
        for k in range(start[i], fluid_end[i]):
            j = indices[k]
            g0 += V0_f[j] * gradW[k, 0]
            g1 += V0_f[j] * gradW[k, 1]
            g2 += V0_f[j] * gradW[k, 2]
            gg = (
                gradW[k, 0] * gradW[k, 0]
                + gradW[k, 1] * gradW[k, 1]
                + gradW[k, 2] * gradW[k, 2]
            )
            react += V0_f[j] * rho0_f * V0_f[i] * inv2 * gg
        for k in range(fluid_end[i], solid_end[i]):
            t = indices[k] - n_fluid
            c = (1.0 - phi_s[t]) * V0_s[t]
            g0 += c * gradW[k, 0]
            g1 += c * gradW[k, 1]
            g2 += c * gradW[k, 2]
        for k in range(solid_end[i], start[i + 1]):
            c = psi_b[indices[k] - n_fs]
            g0 += c * gradW[k, 0]
            g1 += c * gradW[k, 1]
            g2 += c * gradW[k, 2]
        own = rho0_f * inv2 * (g0 * g0 + g1 * g1 + g2 * g2)
        aii_f[i] = -rho0_f * (react + own)

    for s in prange(n_solid):
        g = n_fluid + s
        inv2 = 1.0 / (rho_s[s] * rho_s[s])
        g0 = 0.0
        g1 = 0.0
        g2 = 0.0
        react = 0.0
        for k in range(fluid_end[g], solid_end[g]):
            t = indices[k] - n_fluid
            g0 += V0_s[t] * gradW[k, 0]
            g1 += V0_s[t] * gradW[k, 1]
            g2 += V0_s[t] * gradW[k, 2]
            if not fixed_s[t]:
                gg = (
                    gradW[k, 0] * gradW[k, 0]
                    + gradW[k, 1] * gradW[k, 1]
                    + gradW[k, 2] * gradW[k, 2]
                )
                react += V0_s[t] * (1.0 - phi_s[t]) * rho0_s[t] * V0_s[s] * inv2 * gg
        for k in range(solid_end[g], start[g + 1]):
            c = psi_b[indices[k] - n_fs]
            g0 += c * gradW[k, 0]
            g1 += c * gradW[k, 1]
            g2 += c * gradW[k, 2]
        own = 0.0
        if not fixed_s[s]:
            own = (1.0 - phi_s[s]) * rho0_s[s] * inv2 * (g0 * g0 + g1 * g1 + g2 * g2)
        aii_s[s] = -(1.0 - phi_s[s]) * rho0_s[s] * (react + own)


@njit(cache=True, parallel=True)
def _jacobi_update(p, source, Ap, aii, omega, eps):
    n = p.shape[0]
    for k in prange(n):
        if aii[k] < -eps or aii[k] > eps:
            val = p[k] + omega * (source[k] - Ap[k]) / aii[k]
            p[k] = val if val > 0.0 else 0.0
        else:
            p[k] = 0.0


def pressure_accelerations(state, nl, pd, p_f=None, p_s=None):
    """Accelerations from the given (default: stored) pressures."""
    f, s, b = state.fluid, state.solid, state.boundary
    p_f = f.p if p_f is None else p_f
    p_s = s.p if p_s is None else p_s
    a_f = np.empty((f.n, 3))
    a_s = np.empty((s.n, 3))
    _pressure_accel_kernel(
        nl.start, nl.indices, nl.fluid_end, nl.solid_end, pd.gradW,
        f.V0, s.V0, s.phi, b.psi, f.rho_hat, s.rho, s.fixed,
        f.n, s.n, f.n + s.n, f.rho0, s.rho0,
        p_f, p_s, a_f, a_s,
    )
    return a_f, a_s


def _rate_of_accelerations(state, nl, pd, a_f, a_s):
    f, s, b = state.fluid, state.solid, state.boundary
    out_f = np.empty(f.n)
    out_s = np.empty(s.n)
    _density_rate_kernel(
        nl.start, nl.indices, nl.fluid_end, nl.solid_end, pd.gradW,
        f.V0, s.V0, s.phi, b.psi, f.n, s.n, f.n + s.n, f.rho0, s.rho0,
        a_f, a_s, out_f, out_s,
    )
    return out_f, out_s


def solve_pressure(
    state: SimulationState,
    nl: NeighborLists,
    pd: PairData,
    rho_star_f: np.ndarray,
    rho_star_s: np.ndarray,
    dt: float,
    omega: float = 0.5,
    tolerance: float = 1e-3,
    max_iterations: int = 100,
):
    """Relaxed Jacobi iteration on the clamped pressure Poisson system.

    Returns (a_f, a_s, stats) and stores the final pressures on the state.
    """
    f, s = state.fluid, state.solid
    n = f.n + s.n
    target_f, target_s = density_targets(state)
    if n == 0:
        return np.zeros((0, 3)), np.zeros((0, 3)), PressureStats(0, 0.0, 0.0, True)

    dt2 = dt * dt
    source = np.concatenate([(target_f - rho_star_f), (target_s - rho_star_s)]) / dt2
    target = np.concatenate([np.full(f.n, target_f), target_s])
    rho_star = np.concatenate([rho_star_f, rho_star_s])

    aii_f = np.empty(f.n)
    aii_s = np.empty(s.n)
    _diagonal_kernel(
        nl.start, nl.indices, nl.fluid_end, nl.solid_end, pd.gradW,
        f.V0, s.V0, s.phi, state.boundary.psi, f.rho_hat, s.rho, s.fixed,
        f.n, s.n, f.n + s.n, f.rho0, s.rho0,
        aii_f, aii_s,
    )
    aii = np.concatenate([aii_f, aii_s])
    eps = 1e-10 * max(np.abs(aii).max(), 1e-300)

    p = np.zeros(n)
    prev_err = np.inf
    growth = 0
    iterations = 0
    a_f = np.zeros((f.n, 3))
    a_s = np.zeros((s.n, 3))
    err = 0.0
    max_err = 0.0
    converged = False
    history = []
    for _ in range(max_iterations + 1):
        a_f, a_s = pressure_accelerations(state, nl, pd, p[: f.n], p[f.n :])
        rate_f, rate_s = _rate_of_accelerations(state, nl, pd, a_f, a_s)
        Ap = np.concatenate([rate_f, rate_s])
        viol = np.maximum(0.0, rho_star + dt2 * Ap - target) / target
        err = float(viol.mean())
        max_err = float(viol.max())
        history.append(err)
        if not np.isfinite(err):
            raise PressureSolveDiverged(
                f"pressure solve produced non-finite density error at iteration "
                f"{iterations} (step {state.step}); history tail {history[-5:]}"
            )
        if err <= tolerance:
            converged = True
            break
        if iterations >= max_iterations:
            break
        growth = growth + 1 if err > prev_err else 0
        if growth >= 10:
            raise PressureSolveDiverged(
                f"average density error grew for 10 consecutive iterations at "
                f"iteration {iterations} (step {state.step}); history tail "
                f"{[f'{e:.3e}' for e in history[-12:]]}"
            )
        prev_err = err
        _jacobi_update(p, source, Ap, aii, omega, eps)
        iterations += 1

    f.p[:] = p[: f.n]
    s.p[:] = p[f.n :]
    f.a_press[:] = a_f
    s.a_press[:] = a_s
    return a_f, a_s, PressureStats(iterations, err, max_err, converged)


@njit(cache=True, parallel=True)
def _buoyancy_kernel(
    start, indices, fluid_end, gradW,
    m_f, rho_hat, p_f, V0_s, phi_s,
    n_fluid, n_solid, rho0_f,
    b_out,
):
    for s in prange(n_solid):
        g = n_fluid + s
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        for k in range(start[g], fluid_end[g]):
            j = indices[k]
            c = m_f[j] * rho0_f * p_f[j] / (rho_hat[j] * rho_hat[j])
            acc0 += c * gradW[k, 0]
            acc1 += c * gradW[k, 1]
            acc2 += c * gradW[k, 2]
        coef = -(1.0 - phi_s[s]) * V0_s[s]
        b_out[s, 0] = coef * acc0
        b_out[s, 1] = coef * acc1
        b_out[s, 2] = coef * acc2


def buoyancy_rhs(state, nl, pd, p_f=None) -> np.ndarray:
    """Mirror of the fluid particles' solid-side pressure force, per Eq.-style
    deferral: evaluated with the stored pressures of the most recent solve."""
    f, s = state.fluid, state.solid
    p_f = f.p if p_f is None else p_f
    b = np.zeros((s.n, 3))
    _buoyancy_kernel(
        nl.start, nl.indices, nl.fluid_end, pd.gradW,
        f.m, f.rho_hat, p_f, s.V0, s.phi,
        f.n, s.n, f.rho0,
        b,
    )
    return b


@njit(cache=True, parallel=True)
def _fluid_from_solid_force_kernel(
    start, indices, fluid_end, solid_end, gradW,
    m_f, rho_hat, p_f, V0_s, phi_s,
    n_fluid, rho0_f, out,
):
    for i in prange(n_fluid):
        ki = m_f[i] * rho0_f * p_f[i] / (rho_hat[i] * rho_hat[i])
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        for k in range(fluid_end[i], solid_end[i]):
            t = indices[k] - n_fluid
            c = (1.0 - phi_s[t]) * V0_s[t]
            acc0 += c * gradW[k, 0]
            acc1 += c * gradW[k, 1]
            acc2 += c * gradW[k, 2]
        out[i, 0] = -ki * acc0
        out[i, 1] = -ki * acc1
        out[i, 2] = -ki * acc2


def fluid_solid_pressure_forces(state, nl, pd, p_f=None) -> np.ndarray:
    """Per fluid particle m_i * (solid part of its pressure acceleration).

    The total of this array plus the total buoyancy RHS evaluated with the
    same pressures and kernels vanishes (exact mirror).
    """
    f, s = state.fluid, state.solid
    p_f = f.p if p_f is None else p_f
    out = np.zeros((f.n, 3))
    _fluid_from_solid_force_kernel(
        nl.start, nl.indices, nl.fluid_end, nl.solid_end, pd.gradW,
        f.m, f.rho_hat, p_f, s.V0, s.phi,
        f.n, f.rho0, out,
    )
    return out
