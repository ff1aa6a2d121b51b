"""Corotated linear elasticity over rest neighborhoods.

Deformation gradients use kernel-gradient correction matrices computed from
the rest sampling, so linear displacement fields are reproduced exactly.
Stress includes the saturation-driven stiffness change and the isotropic
bloating offset. Forces are assembled pairwise-symmetric over the frozen
rest topology, which makes them momentum conserving and (with rotations
held fixed) the exact negative gradient of the corotated energy, hence a
symmetric implicit operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .density import _pair_geometry
from .kernels import KernelSpec
from .neighbors import build_neighbor_lists
from .state import SolidState


@dataclass
class ElasticPrecomputation:
    start: np.ndarray  # CSR over solid particles (rest topology)
    idx: np.ndarray  # solid-local neighbor indices
    reverse: np.ndarray  # for pair e=(s->t): index of the pair (t->s)
    grad0: np.ndarray  # corrected rest gradients L_s @ gradW0_st, (E,3)
    W0: np.ndarray  # rest kernel values (E,)
    dx0: np.ndarray  # x0_s - x0_t (E,3)
    L: np.ndarray  # correction matrices (nS,3,3)
    pinv_fallbacks: int  # particles whose moment matrix needed a pseudo-inverse

    @property
    def n_pairs(self) -> int:
        return len(self.idx)


def precompute_elastic(solid: SolidState, h: float) -> ElasticPrecomputation:
    """Freeze rest neighborhoods and kernel-gradient correction matrices.

    Rest pairs are restricted to particles of the same body; bodies marked
    fixed get empty neighborhoods (their velocities are pinned anyway).
    """
    n = solid.n
    nl = build_neighbor_lists(np.zeros((0, 3)), solid.x0, np.zeros((0, 3)), h)

    rows = []
    for s in range(n):
        if solid.fixed[s]:
            rows.append(np.zeros(0, dtype=np.int64))
            continue
        nb = nl.solid_neighbors(s)  # global == local here (no fluid offset)
        nb = nb[(solid.body[nb] == solid.body[s]) & ~solid.fixed[nb]]
        rows.append(nb)
    counts = np.array([len(r) for r in rows], dtype=np.int64)
    start = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=start[1:])
    idx = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    idx = idx.astype(np.int64)
    src = np.repeat(np.arange(n, dtype=np.int64), counts)

    e = len(idx)
    dx0 = np.empty((e, 3))
    r0 = np.empty(e)
    W0 = np.empty(e)
    gradW0 = np.empty((e, 3))
    spec = KernelSpec(h=h)
    _pair_geometry(solid.x0, start, idx, h, spec.sigma, dx0, r0, W0, gradW0)

    # moment matrix A_s = sum_t V_t grad W0_st (x) (x0_t - x0_s)
    A = np.zeros((n, 3, 3))
    if e:
        contrib = solid.V0[idx, None, None] * gradW0[:, :, None] * (-dx0)[:, None, :]
        np.add.at(A, src, contrib)

    L = np.zeros((n, 3, 3))
    fallbacks = 0
    if n:
        U, sig, Vt = np.linalg.svd(A)
        smax = sig.max(axis=1)
        rcond = 1e-8
        bad = sig <= (rcond * smax[:, None] + 1e-300)
        fallbacks = int(np.any(bad & (counts[:, None] > 0), axis=1).sum())
        inv_sig = np.where(bad, 0.0, 1.0 / np.where(bad, 1.0, sig))
        L = np.einsum("nij,nj,nkj->nik", Vt.transpose(0, 2, 1), inv_sig, U)

    grad0 = np.einsum("nij,nj->ni", L[src], gradW0) if e else np.zeros((0, 3))

    reverse = np.full(e, -1, dtype=np.int64)
    for ei in range(e):
        s, t = src[ei], idx[ei]
        row = idx[start[t] : start[t + 1]]
        pos = np.searchsorted(row, s)
        reverse[ei] = start[t] + pos

    return ElasticPrecomputation(
        start=start, idx=idx, reverse=reverse, grad0=grad0, W0=W0, dx0=dx0,
        L=L, pinv_fallbacks=fallbacks,
    )


@njit(cache=True, parallel=True)
def _deformation_gradient_kernel(start, idx, grad0, V0, x, F_out):
    n = start.shape[0] - 1
    for s in prange(n):
        f00 = 0.0; f01 = 0.0; f02 = 0.0
        f10 = 0.0; f11 = 0.0; f12 = 0.0
        f20 = 0.0; f21 = 0.0; f22 = 0.0
        for k in range(start[s], start[s + 1]):
            t = idx[k]
            v = V0[t]
            d0 = x[t, 0] - x[s, 0]
            d1 = x[t, 1] - x[s, 1]
            d2 = x[t, 2] - x[s, 2]
            g0 = grad0[k, 0]; g1 = grad0[k, 1]; g2 = grad0[k, 2]
            f00 += v * d0 * g0; f01 += v * d0 * g1; f02 += v * d0 * g2
            f10 += v * d1 * g0; f11 += v * d1 * g1; f12 += v * d1 * g2
            f20 += v * d2 * g0; f21 += v * d2 * g1; f22 += v * d2 * g2
        F_out[s, 0, 0] = f00; F_out[s, 0, 1] = f01; F_out[s, 0, 2] = f02
        F_out[s, 1, 0] = f10; F_out[s, 1, 1] = f11; F_out[s, 1, 2] = f12
        F_out[s, 2, 0] = f20; F_out[s, 2, 1] = f21; F_out[s, 2, 2] = f22


def deformation_gradients(ep: ElasticPrecomputation, solid: SolidState, x=None):
    F = np.empty((solid.n, 3, 3))
    _deformation_gradient_kernel(
        ep.start, ep.idx, ep.grad0, solid.V0,
        np.ascontiguousarray(solid.x if x is None else x), F,
    )
    return F


def extract_rotations(F: np.ndarray) -> np.ndarray:
    """Proper rotations from the polar decomposition of each F (batched SVD).

    Degenerate gradients (isolated particles, empty neighborhoods) fall back
    to the identity.
    """
    n = len(F)
    if n == 0:
        return np.zeros((0, 3, 3))
    U, sig, Vt = np.linalg.svd(F)
    R = U @ Vt
    det = np.linalg.det(R)
    flip = det < 0.0
    if np.any(flip):
        U = U.copy()
        U[flip, :, 2] *= -1.0
        R = U @ Vt
    degenerate = sig[:, 0] < 1e-12
    if np.any(degenerate):
        R[degenerate] = np.eye(3)
    return R


@njit(cache=True, parallel=True)
def _stress_kernel(
    start, idx, grad0, V0, y, R, mu_eff, lam_eff, bloat, position_mode, sigma_out
):
    """Corotated stress per particle from positions (mode 1) or velocities.

    Position mode subtracts the identity from the rotated gradient and adds
    the bloating offset; velocity mode is the pure strain-rate response.
    """
    n = start.shape[0] - 1
    for s in prange(n):
        f00 = 0.0; f01 = 0.0; f02 = 0.0
        f10 = 0.0; f11 = 0.0; f12 = 0.0
        f20 = 0.0; f21 = 0.0; f22 = 0.0
        for k in range(start[s], start[s + 1]):
            t = idx[k]
            v = V0[t]
            d0 = y[t, 0] - y[s, 0]
            d1 = y[t, 1] - y[s, 1]
            d2 = y[t, 2] - y[s, 2]
            g0 = grad0[k, 0]; g1 = grad0[k, 1]; g2 = grad0[k, 2]
            f00 += v * d0 * g0; f01 += v * d0 * g1; f02 += v * d0 * g2
            f10 += v * d1 * g0; f11 += v * d1 * g1; f12 += v * d1 * g2
            f20 += v * d2 * g0; f21 += v * d2 * g1; f22 += v * d2 * g2
        # G = R^T F
        r00 = R[s, 0, 0]; r01 = R[s, 0, 1]; r02 = R[s, 0, 2]
        r10 = R[s, 1, 0]; r11 = R[s, 1, 1]; r12 = R[s, 1, 2]
        r20 = R[s, 2, 0]; r21 = R[s, 2, 1]; r22 = R[s, 2, 2]
        g00 = r00 * f00 + r10 * f10 + r20 * f20
        g01 = r00 * f01 + r10 * f11 + r20 * f21
        g02 = r00 * f02 + r10 * f12 + r20 * f22
        g10 = r01 * f00 + r11 * f10 + r21 * f20
        g11 = r01 * f01 + r11 * f11 + r21 * f21
        g12 = r01 * f02 + r11 * f12 + r21 * f22
        g20 = r02 * f00 + r12 * f10 + r22 * f20
        g21 = r02 * f01 + r12 * f11 + r22 * f21
        g22 = r02 * f02 + r12 * f12 + r22 * f22
        # strain: symmetric part (minus identity in position mode)
        e00 = g00
        e11 = g11
        e22 = g22
        if position_mode:
            e00 -= 1.0
            e11 -= 1.0
            e22 -= 1.0
        e01 = 0.5 * (g01 + g10)
        e02 = 0.5 * (g02 + g20)
        e12 = 0.5 * (g12 + g21)
        mu2 = 2.0 * mu_eff[s]
        lt = lam_eff[s] * (e00 + e11 + e22)
        s00 = mu2 * e00 + lt
        s11 = mu2 * e11 + lt
        s22 = mu2 * e22 + lt
        if position_mode:
            s00 -= bloat[s]
            s11 -= bloat[s]
            s22 -= bloat[s]
        sigma_out[s, 0, 0] = s00
        sigma_out[s, 1, 1] = s11
        sigma_out[s, 2, 2] = s22
        sigma_out[s, 0, 1] = mu2 * e01
        sigma_out[s, 1, 0] = mu2 * e01
        sigma_out[s, 0, 2] = mu2 * e02
        sigma_out[s, 2, 0] = mu2 * e02
        sigma_out[s, 1, 2] = mu2 * e12
        sigma_out[s, 2, 1] = mu2 * e12


@njit(cache=True, parallel=True)
def _elastic_force_kernel(start, idx, reverse, grad0, V0, R, sigma, out):
    n = start.shape[0] - 1
    for s in prange(n):
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for k in range(start[s], start[s + 1]):
            t = idx[k]
            kr = reverse[k]
            # R_s sigma_s grad0_st
            g0 = grad0[k, 0]; g1 = grad0[k, 1]; g2 = grad0[k, 2]
            p0 = sigma[s, 0, 0] * g0 + sigma[s, 0, 1] * g1 + sigma[s, 0, 2] * g2
            p1 = sigma[s, 1, 0] * g0 + sigma[s, 1, 1] * g1 + sigma[s, 1, 2] * g2
            p2 = sigma[s, 2, 0] * g0 + sigma[s, 2, 1] * g1 + sigma[s, 2, 2] * g2
            q0 = R[s, 0, 0] * p0 + R[s, 0, 1] * p1 + R[s, 0, 2] * p2
            q1 = R[s, 1, 0] * p0 + R[s, 1, 1] * p1 + R[s, 1, 2] * p2
            q2 = R[s, 2, 0] * p0 + R[s, 2, 1] * p1 + R[s, 2, 2] * p2
            # R_t sigma_t grad0_ts
            h0 = grad0[kr, 0]; h1 = grad0[kr, 1]; h2 = grad0[kr, 2]
            u0 = sigma[t, 0, 0] * h0 + sigma[t, 0, 1] * h1 + sigma[t, 0, 2] * h2
            u1 = sigma[t, 1, 0] * h0 + sigma[t, 1, 1] * h1 + sigma[t, 1, 2] * h2
            u2 = sigma[t, 2, 0] * h0 + sigma[t, 2, 1] * h1 + sigma[t, 2, 2] * h2
            w0 = R[t, 0, 0] * u0 + R[t, 0, 1] * u1 + R[t, 0, 2] * u2
            w1 = R[t, 1, 0] * u0 + R[t, 1, 1] * u1 + R[t, 1, 2] * u2
            w2 = R[t, 2, 0] * u0 + R[t, 2, 1] * u1 + R[t, 2, 2] * u2
            vv = V0[s] * V0[t]
            a0 += vv * (q0 - w0)
            a1 += vv * (q1 - w1)
            a2 += vv * (q2 - w2)
        out[s, 0] += a0
        out[s, 1] += a1
        out[s, 2] += a2


@njit(cache=True, parallel=True)
def _hourglass_kernel(
    start, idx, W0, dx0, V0, R, hg_k, x, v, dt, use_velocity, out
):
    """Pairwise zero-energy-mode penalty; off unless a material sets hg_k."""
    n = start.shape[0] - 1
    for s in prange(n):
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for k in range(start[s], start[s + 1]):
            t = idx[k]
            r02 = dx0[k, 0] ** 2 + dx0[k, 1] ** 2 + dx0[k, 2] ** 2
            if r02 <= 0.0:
                continue
            kap = 0.5 * (hg_k[s] + hg_k[t]) * V0[s] * V0[t] * W0[k] / r02
            if kap == 0.0:
                continue
            if use_velocity:
                a0 += kap * dt * (v[t, 0] - v[s, 0])
                a1 += kap * dt * (v[t, 1] - v[s, 1])
                a2 += kap * dt * (v[t, 2] - v[s, 2])
            else:
                # deviation of the current edge from the corotated rest edge
                b0 = 0.5 * (
                    (R[s, 0, 0] + R[t, 0, 0]) * dx0[k, 0]
                    + (R[s, 0, 1] + R[t, 0, 1]) * dx0[k, 1]
                    + (R[s, 0, 2] + R[t, 0, 2]) * dx0[k, 2]
                )
                b1 = 0.5 * (
                    (R[s, 1, 0] + R[t, 1, 0]) * dx0[k, 0]
                    + (R[s, 1, 1] + R[t, 1, 1]) * dx0[k, 1]
                    + (R[s, 1, 2] + R[t, 1, 2]) * dx0[k, 2]
                )
                b2 = 0.5 * (
                    (R[s, 2, 0] + R[t, 2, 0]) * dx0[k, 0]
                    + (R[s, 2, 1] + R[t, 2, 1]) * dx0[k, 1]
                    + (R[s, 2, 2] + R[t, 2, 2]) * dx0[k, 2]
                )
                d0 = x[s, 0] - x[t, 0]
                d1 = x[s, 1] - x[t, 1]
                d2 = x[s, 2] - x[t, 2]
                a0 += -kap * (d0 - b0)
                a1 += -kap * (d1 - b1)
                a2 += -kap * (d2 - b2)
        out[s, 0] += a0
        out[s, 1] += a1
        out[s, 2] += a2


def effective_lame(solid: SolidState):
    """Saturation-adjusted Lame coefficients with positivity clamps."""
    mu = (1.0 + solid.eta_m * solid.S) * solid.mu0
    mu = np.maximum(mu, solid.mu_floor * solid.mu0)
    lam = np.maximum((1.0 + solid.eta_l * solid.S) * solid.lam0, 0.0)
    return mu, lam


def elastic_stress(ep, solid, mu_eff, lam_eff, y, position_mode: bool):
    """Per-particle corotated stress from positions or velocities."""
    sigma = np.empty((solid.n, 3, 3))
    bloat = solid.eta_bloat * solid.S
    _stress_kernel(
        ep.start, ep.idx, ep.grad0, solid.V0, np.ascontiguousarray(y),
        solid.R, mu_eff, lam_eff, bloat, position_mode, sigma,
    )
    return sigma


def elastic_forces(ep, solid, sigma, out=None):
    if out is None:
        out = np.zeros((solid.n, 3))
    _elastic_force_kernel(ep.start, ep.idx, ep.reverse, ep.grad0, solid.V0,
                          solid.R, sigma, out)
    return out


def hourglass_forces(ep, solid, dt, v=None, out=None):
    if out is None:
        out = np.zeros((solid.n, 3))
    use_velocity = v is not None
    vv = np.zeros((solid.n, 3)) if v is None else np.ascontiguousarray(v)
    _hourglass_kernel(
        ep.start, ep.idx, ep.W0, ep.dx0, solid.V0, solid.R, solid.hg_k,
        solid.x, vv, dt, use_velocity, out,
    )
    return out
