"""Shared helpers: direct state construction and lattice builders."""

import numpy as np
import pytest

from poroflow.materials import FluidMaterial, PorousSolidMaterial
from poroflow.neighbors import build_neighbor_lists
from poroflow.density import build_pair_data
from poroflow.scene import compute_boundary_pseudo_volumes
from poroflow.state import BoundaryState, FluidState, SimulationState, SolidState

WATER = FluidMaterial(name="water", rest_density=1000.0, viscosity=0.01)
SPONGE = PorousSolidMaterial(
    name="sponge",
    solid_phase_rest_density=1000.0,
    porosity=0.6,
    lame_mu=1e5,
    lame_lambda=1e5,
    porous_viscosity=10.0,
    capillary_c0=500.0,
    capillary_falloff=1.0,
)


def empty3():
    return np.zeros((0, 3))


def lattice(n, dx, origin=(0.0, 0.0, 0.0)):
    """n^3 cubic lattice of cell centers with spacing dx."""
    if np.isscalar(n):
        n = (n, n, n)
    axes = [origin[a] + (np.arange(n[a]) + 0.5) * dx for a in range(3)]
    xs, ys, zs = np.meshgrid(*axes, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)


def interior_index(x):
    """Index of the particle closest to the centroid."""
    c = x.mean(axis=0)
    return int(np.argmin(np.linalg.norm(x - c, axis=1)))


def make_state(
    xf=None,
    xs=None,
    xb=None,
    dx=0.1,
    fluid_mat=WATER,
    solid_mat=SPONGE,
    vf=None,
    vs=None,
    fluid_V0=None,
    fixed=None,
    solid_body=None,
):
    xf = empty3() if xf is None else np.asarray(xf, dtype=np.float64).reshape(-1, 3)
    xs = empty3() if xs is None else np.asarray(xs, dtype=np.float64).reshape(-1, 3)
    xb = empty3() if xb is None else np.asarray(xb, dtype=np.float64).reshape(-1, 3)
    V0 = dx**3

    fluid = FluidState.allocate(len(xf), rho0=fluid_mat.rest_density, mu_vis=fluid_mat.viscosity)
    fluid.x[:] = xf
    fluid.V0[:] = V0 if fluid_V0 is None else fluid_V0
    fluid.m[:] = fluid.rho0 * fluid.V0
    if vf is not None:
        fluid.v[:] = vf

    solid = SolidState.allocate(len(xs))
    solid.x[:] = xs
    solid.x0[:] = xs
    solid.V0[:] = V0
    solid.set_material(slice(None), solid_mat)
    solid.m[:] = solid_mat.bulk_rest_density * V0
    if vs is not None:
        solid.v[:] = vs
    if fixed is not None:
        solid.fixed[:] = fixed
    if solid_body is not None:
        solid.body[:] = solid_body

    boundary = BoundaryState.allocate(len(xb))
    boundary.x[:] = xb
    if len(xb):
        boundary.psi[:] = compute_boundary_pseudo_volumes(xb, 2.0 * dx)

    state = SimulationState(fluid=fluid, solid=solid, boundary=boundary)
    state.v_prev_fluid = fluid.v.copy()
    state.v_prev_solid = solid.v.copy()
    return state


def neighbors_and_pairs(state, dx):
    h = 2.0 * dx
    nl = build_neighbor_lists(state.fluid.x, state.solid.x, state.boundary.x, h)
    pd = build_pair_data(state, nl)
    return nl, pd


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
