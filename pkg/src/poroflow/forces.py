"""Strongly coupled implicit system for all non-pressure forces.

One linear system in the stacked particle velocities combines capillary
attraction, fluid-solid drag, fluid viscosity and corotated elasticity,
all linear and homogeneous in v, plus a right-hand side carrying gravity,
the position-dependent force parts and the deferred buoyancy mirror:

    M v' - dt f(v') = M v + dt b

Every pairwise term is assembled symmetric (averaged masses/densities,
energy-consistent elasticity with frozen rotations), so the operator is
symmetric and a Jacobi(mass)-preconditioned matrix-free CG applies; a
BiCGStab fallback sits behind the same interface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .density import PairData
from .elasticity import (
    ElasticPrecomputation,
    effective_lame,
    elastic_forces,
    elastic_stress,
    hourglass_forces,
)
from .neighbors import NeighborLists
from .state import SimulationState

log = logging.getLogger(__name__)

D_TILDE_3D = 2.0 * (3 + 2)  # dimension factor of the viscosity/drag Laplacian


class CoupledSolveError(RuntimeError):
    """The velocity solve produced non-finite values."""


@dataclass
class CoupledStats:
    iterations: int
    residual: float  # relative to |rhs|
    converged: bool
    stagnated: bool = False


def capillary_coefficient(S, c_cap0, eta_cap):
    """Saturation-weighted capillary coefficient c0 * (1 - S * eta)."""
    return c_cap0 * (1.0 - S * eta_cap)


@njit(cache=True, parallel=True)
def _coupling_force_kernel(
    start, indices, fluid_end, solid_end, W, gradW, dx, r,
    m_f, rho_f, rho_hat, m_s, phi_s, rho0_s, c_cap, mu_por,
    n_fluid, n_solid, mu_vis, h, dt,
    vf, vs, include_drag, include_visc, include_cap,
    out_f, out_s,
):
    """Gather capillary (v-part), drag and viscosity forces for given v.

    Fixed solid velocities are read as given (the caller projects them to
    zero and discards their output rows).
    """
    eps = 0.01 * h * h
    for i in prange(n_fluid):
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        vi0 = vf[i, 0]; vi1 = vf[i, 1]; vi2 = vf[i, 2]
        if include_visc:
            for k in range(start[i], fluid_end[i]):
                j = indices[k]
                dv0 = vi0 - vf[j, 0]
                dv1 = vi1 - vf[j, 1]
                dv2 = vi2 - vf[j, 2]
                dot = dv0 * dx[k, 0] + dv1 * dx[k, 1] + dv2 * dx[k, 2]
                c = (
                    D_TILDE_3D * mu_vis * m_f[i] * m_f[j]
                    / (rho_hat[i] * rho_hat[j])
                    * dot / (r[k] * r[k] + eps)
                )
                a0 += c * gradW[k, 0]
                a1 += c * gradW[k, 1]
                a2 += c * gradW[k, 2]
        for k in range(fluid_end[i], solid_end[i]):
            t = indices[k] - n_fluid
            dv0 = vi0 - vs[t, 0]
            dv1 = vi1 - vs[t, 1]
            dv2 = vi2 - vs[t, 2]
            if include_cap:
                mbar = 0.5 * (m_f[i] + m_s[t])
                rbar = 0.5 * (rho_f[i] + (1.0 - phi_s[t]) * rho0_s[t])
                cc = dt * c_cap[t] * mbar / rbar * W[k]
                a0 -= cc * dv0
                a1 -= cc * dv1
                a2 -= cc * dv2
            if include_drag:
                dot = dv0 * dx[k, 0] + dv1 * dx[k, 1] + dv2 * dx[k, 2]
                c = (
                    D_TILDE_3D * mu_por[t] / (1.0 - phi_s[t])
                    * m_f[i] * m_s[t] / (rho_f[i] * rho0_s[t])
                    * dot / (r[k] * r[k] + eps)
                )
                a0 += c * gradW[k, 0]
                a1 += c * gradW[k, 1]
                a2 += c * gradW[k, 2]
        out_f[i, 0] = a0
        out_f[i, 1] = a1
        out_f[i, 2] = a2

    for s in prange(n_solid):
        g = n_fluid + s
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        vs0 = vs[s, 0]; vs1 = vs[s, 1]; vs2 = vs[s, 2]
        for k in range(start[g], fluid_end[g]):
            j = indices[k]
            dv0 = vs0 - vf[j, 0]
            dv1 = vs1 - vf[j, 1]
            dv2 = vs2 - vf[j, 2]
            if include_cap:
                mbar = 0.5 * (m_s[s] + m_f[j])
                rbar = 0.5 * (rho_f[j] + (1.0 - phi_s[s]) * rho0_s[s])
                cc = dt * c_cap[s] * mbar / rbar * W[k]
                a0 -= cc * dv0
                a1 -= cc * dv1
                a2 -= cc * dv2
            if include_drag:
                dot = dv0 * dx[k, 0] + dv1 * dx[k, 1] + dv2 * dx[k, 2]
                c = (
                    D_TILDE_3D * mu_por[s] / (1.0 - phi_s[s])
                    * m_s[s] * m_f[j] / (rho_f[j] * rho0_s[s])
                    * dot / (r[k] * r[k] + eps)
                )
                a0 += c * gradW[k, 0]
                a1 += c * gradW[k, 1]
                a2 += c * gradW[k, 2]
        out_s[s, 0] = a0
        out_s[s, 1] = a1
        out_s[s, 2] = a2


@njit(cache=True, parallel=True)
def _capillary_rhs_kernel(
    start, indices, fluid_end, solid_end, W, dx,
    m_f, rho_f, m_s, phi_s, rho0_s, c_cap,
    n_fluid, n_solid,
    b_f, b_s,
):
    for i in prange(n_fluid):
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for k in range(fluid_end[i], solid_end[i]):
            t = indices[k] - n_fluid
            mbar = 0.5 * (m_f[i] + m_s[t])
            rbar = 0.5 * (rho_f[i] + (1.0 - phi_s[t]) * rho0_s[t])
            cc = c_cap[t] * mbar / rbar * W[k]
            a0 -= cc * dx[k, 0]
            a1 -= cc * dx[k, 1]
            a2 -= cc * dx[k, 2]
        b_f[i, 0] += a0
        b_f[i, 1] += a1
        b_f[i, 2] += a2
    for s in prange(n_solid):
        g = n_fluid + s
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for k in range(start[g], fluid_end[g]):
            j = indices[k]
            mbar = 0.5 * (m_s[s] + m_f[j])
            rbar = 0.5 * (rho_f[j] + (1.0 - phi_s[s]) * rho0_s[s])
            cc = c_cap[s] * mbar / rbar * W[k]
            a0 -= cc * dx[k, 0]
            a1 -= cc * dx[k, 1]
            a2 -= cc * dx[k, 2]
        b_s[s, 0] += a0
        b_s[s, 1] += a1
        b_s[s, 2] += a2


class ImplicitSystem:
    """Matrix-free operator and right-hand side with frozen per-step data."""

    def __init__(
        self,
        state: SimulationState,
        nl: NeighborLists,
        pd: PairData,
        ep: ElasticPrecomputation | None,
        gravity,
        dt: float,
        explicit_drag: bool = False,
    ):
        self.state = state
        self.nl = nl
        self.pd = pd
        self.ep = ep
        self.dt = dt
        self.explicit_drag = explicit_drag
        f, s = state.fluid, state.solid
        self.c_cap = capillary_coefficient(s.S, s.c_cap0, s.eta_cap)
        self.mu_eff, self.lam_eff = effective_lame(s)
        self.has_elastic = ep is not None and ep.n_pairs > 0
        self.has_hourglass = self.has_elastic and np.any(s.hg_k > 0.0)
        self.gravity = np.asarray(gravity, dtype=np.float64)

        b_f = f.m[:, None] * self.gravity[None, :]
        b_s = s.m[:, None] * self.gravity[None, :]
        _capillary_rhs_kernel(
            nl.start, nl.indices, nl.fluid_end, nl.solid_end, pd.W, pd.dx,
            f.m, f.rho, s.m, s.phi, s.rho0, self.c_cap,
            f.n, s.n, b_f, b_s,
        )
        if self.has_elastic:
            sigma_n = elastic_stress(ep, s, self.mu_eff, self.lam_eff, s.x, True)
            elastic_forces(ep, s, sigma_n, out=b_s)
            if self.has_hourglass:
                hourglass_forces(ep, s, dt, out=b_s)
        b_s += s.b_buo
        if explicit_drag:
            df, ds = self._coupling(f.v, s.v, drag=True, visc=False, cap=False)
            b_f += df
            b_s += ds
        self.b_f = b_f
        self.b_s = b_s

    def _coupling(self, vf, vs, drag=True, visc=True, cap=True):
        f, s = self.state.fluid, self.state.solid
        out_f = np.empty((f.n, 3))
        out_s = np.empty((s.n, 3))
        _coupling_force_kernel(
            self.nl.start, self.nl.indices, self.nl.fluid_end, self.nl.solid_end,
            self.pd.W, self.pd.gradW, self.pd.dx, self.pd.r,
            f.m, f.rho, f.rho_hat, s.m, s.phi, s.rho0, self.c_cap, s.mu_por,
            f.n, s.n, f.mu_vis, self.pd.h, self.dt,
            np.ascontiguousarray(vf), np.ascontiguousarray(vs),
            drag, visc, cap, out_f, out_s,
        )
        return out_f, out_s

    def force(self, vf, vs):
        """Linear force part f(v): capillary + drag + viscosity + elastic."""
        out_f, out_s = self._coupling(
            vf, vs, drag=not self.explicit_drag, visc=True, cap=True
        )
        if self.has_elastic:
            s = self.state.solid
            sigma_v = elastic_stress(self.ep, s, self.mu_eff, self.lam_eff, vs, False)
            rate = elastic_forces(self.ep, s, sigma_v)
            out_s += self.dt * rate
            if self.has_hourglass:
                out_s += hourglass_forces(self.ep, s, self.dt, v=vs)
        return out_f, out_s

    def project(self, vs):
        """Zero the velocity rows of fixed solid particles (in place)."""
        vs[self.state.solid.fixed] = 0.0
        return vs

    def apply(self, vf, vs):
        """Operator A v = M v - dt f(v), fixed rows projected."""
        ff, fs = self.force(vf, vs)
        out_f = self.state.fluid.m[:, None] * vf - self.dt * ff
        out_s = self.state.solid.m[:, None] * vs - self.dt * fs
        return out_f, self.project(out_s)

    def rhs(self, vf_n, vs_n):
        rhs_f = self.state.fluid.m[:, None] * vf_n + self.dt * self.b_f
        rhs_s = self.state.solid.m[:, None] * vs_n + self.dt * self.b_s
        return rhs_f, self.project(rhs_s)

    def internal_force_balance(self, vf, vs):
        """Momentum residual of all internal pairwise forces, unprojected.

        Sums every capillary/drag/viscosity/elastic force row plus the
        position-dependent capillary and elastic RHS parts; pairwise
        antisymmetry makes the total vanish up to rounding. Returns
        (|residual|, magnitude scale).
        """
        ff, fs = self._coupling(vf, vs, drag=True, visc=True, cap=True)
        f, s = self.state.fluid, self.state.solid
        bf = np.zeros((f.n, 3))
        bs = np.zeros((s.n, 3))
        _capillary_rhs_kernel(
            self.nl.start, self.nl.indices, self.nl.fluid_end, self.nl.solid_end,
            self.pd.W, self.pd.dx, f.m, f.rho, s.m, s.phi, s.rho0, self.c_cap,
            f.n, s.n, bf, bs,
        )
        if self.has_elastic:
            sigma_n = elastic_stress(self.ep, s, self.mu_eff, self.lam_eff, s.x, True)
            elastic_forces(self.ep, s, sigma_n, out=bs)
            sigma_v = elastic_stress(self.ep, s, self.mu_eff, self.lam_eff, vs, False)
            fs = fs + self.dt * elastic_forces(self.ep, s, sigma_v)
            if self.has_hourglass:
                hourglass_forces(self.ep, s, self.dt, out=bs)
                fs = fs + hourglass_forces(self.ep, s, self.dt, v=vs)
        total = (ff + bf).sum(axis=0) + (fs + bs).sum(axis=0)
        scale = (
            np.abs(ff) + np.abs(bf)
        ).sum() + (np.abs(fs) + np.abs(bs)).sum()
        return float(np.linalg.norm(total)), float(scale)


def _dot(af, as_, bf, bs):
    return float((af * bf).sum() + (as_ * bs).sum())


def solve_velocities(
    system: ImplicitSystem,
    v0_f: np.ndarray,
    v0_s: np.ndarray,
    tolerance: float = 1e-4,
    max_iterations: int = 100,
    method: str = "cg",
):
    """Solve M v - dt f(v) = M v^n + dt b for v, matrix-free.

    v0 is the warm-start initial guess. Residual stagnation over 20
    iterations accepts the current iterate with a warning; non-finite
    values abort with a diagnostic.
    """
    state = system.state
    rhs_f, rhs_s = system.rhs(state.fluid.v, state.solid.v)
    rhs_norm = np.sqrt(_dot(rhs_f, rhs_s, rhs_f, rhs_s))
    if rhs_norm == 0.0:
        return np.zeros_like(v0_f), np.zeros_like(v0_s), CoupledStats(0, 0.0, True)

    if method == "bicgstab":
        return _solve_bicgstab(system, v0_f, v0_s, rhs_f, rhs_s, rhs_norm,
                               tolerance, max_iterations)

    m_f = state.fluid.m[:, None]
    m_s = state.solid.m[:, None]

    x_f = v0_f.copy()
    x_s = system.project(v0_s.copy())
    Ax_f, Ax_s = system.apply(x_f, x_s)
    r_f = rhs_f - Ax_f
    r_s = rhs_s - Ax_s
    z_f = r_f / m_f
    z_s = r_s / m_s
    p_f = z_f.copy()
    p_s = z_s.copy()
    rz = _dot(r_f, r_s, z_f, z_s)

    res = np.sqrt(_dot(r_f, r_s, r_f, r_s)) / rhs_norm
    best = res
    since_best = 0
    iterations = 0
    stagnated = False
    while res > tolerance and iterations < max_iterations:
        Ap_f, Ap_s = system.apply(p_f, p_s)
        pAp = _dot(p_f, p_s, Ap_f, Ap_s)
        if pAp <= 0.0 or not np.isfinite(pAp):
            raise CoupledSolveError(
                f"operator lost positive definiteness (p.Ap = {pAp:.3e}) at "
                f"iteration {iterations}, step {state.step}"
            )
        alpha = rz / pAp
        x_f += alpha * p_f
        x_s += alpha * p_s
        r_f -= alpha * Ap_f
        r_s -= alpha * Ap_s
        res = np.sqrt(_dot(r_f, r_s, r_f, r_s)) / rhs_norm
        iterations += 1
        if not np.isfinite(res):
            raise CoupledSolveError(
                f"velocity solve produced non-finite residual at iteration "
                f"{iterations}, step {state.step}"
            )
        if res < best * (1.0 - 1e-12):
            best = res
            since_best = 0
        else:
            since_best += 1
            if since_best >= 20:
                log.warning(
                    "velocity solve stagnated at residual %.3e (step %d); "
                    "accepting current iterate", res, state.step,
                )
                stagnated = True
                break
        z_f = r_f / m_f
        z_s = r_s / m_s
        rz_new = _dot(r_f, r_s, z_f, z_s)
        p_f = z_f + (rz_new / rz) * p_f
        p_s = z_s + (rz_new / rz) * p_s
        rz = rz_new

    return x_f, x_s, CoupledStats(iterations, res, res <= tolerance, stagnated)


def _solve_bicgstab(system, v0_f, v0_s, rhs_f, rhs_s, rhs_norm, tol, max_iter):
    """Fallback Krylov variant for non-symmetric perturbations."""
    from scipy.sparse.linalg import LinearOperator, bicgstab

    nf = system.state.fluid.n
    ns = system.state.solid.n
    n = 3 * (nf + ns)

    def matvec(x):
        vf = x[: 3 * nf].reshape(nf, 3)
        vs = x[3 * nf :].reshape(ns, 3).copy()
        system.project(vs)
        of, os_ = system.apply(vf, vs)
        return np.concatenate([of.ravel(), os_.ravel()])

    op = LinearOperator((n, n), matvec=matvec)
    b = np.concatenate([rhs_f.ravel(), rhs_s.ravel()])
    x0 = np.concatenate([v0_f.ravel(), system.project(v0_s.copy()).ravel()])
    counter = {"n": 0}

    def cb(_):
        counter["n"] += 1

    x, info = bicgstab(op, b, x0=x0, rtol=tol, maxiter=max_iter, callback=cb)
    if not np.isfinite(x).all():
        raise CoupledSolveError("bicgstab produced non-finite velocities")
    res = float(np.linalg.norm(b - matvec(x)) / rhs_norm)
    v_f = x[: 3 * nf].reshape(nf, 3)
    v_s = x[3 * nf :].reshape(ns, 3)
    system.project(v_s)
    return v_f, v_s, CoupledStats(counter["n"], res, info == 0)
