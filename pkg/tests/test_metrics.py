import numpy as np
import pytest

from poroflow.density import compute_densities, compute_saturation
from poroflow.materials import PorousSolidMaterial
from poroflow.metrics import (
    absorbed_mask,
    absorbed_volume,
    compute_metrics_row,
    density_errors,
    kinetic_energy,
    read_metrics_csv,
    row_to_csv,
    saturation_front_height,
    total_momentum,
)

from conftest import WATER, lattice, make_state, neighbors_and_pairs

DX = 0.1


def saturated_block(phi, n=10):
    """Solid block with its pores exactly filled by a coarser fluid lattice.

    Per-axis fluid counts are chosen so the placed fluid volume matches
    phi * bulk volume to within a couple of percent despite lattice
    quantization.
    """
    mat = PorousSolidMaterial(name="m", solid_phase_rest_density=1000.0, porosity=phi)
    xs = lattice(n, DX)
    extent = n * DX
    target = phi * n**3
    nxy = max(int(round(n * phi ** (1.0 / 3.0))), 1)
    nz = max(int(round(target / (nxy * nxy))), 1)
    axes = [
        (np.arange(c) + 0.5) * (extent / c) for c in (nxy, nxy, nz)
    ]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    xf = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    state = make_state(xf=xf, xs=xs, dx=DX, solid_mat=mat)
    return state


def test_absorbed_volume_zero_outside():
    state = make_state(
        xf=lattice(4, DX), xs=lattice(4, DX, origin=(2.0, 0, 0)), dx=DX
    )
    nl, pd = neighbors_and_pairs(state, DX)
    assert absorbed_volume(state, nl, pd) == 0.0


@pytest.mark.parametrize("phi", [0.4, 0.8])
def test_absorbed_volume_of_saturated_block(phi):
    state = saturated_block(phi)
    nl, pd = neighbors_and_pairs(state, DX)
    vol = absorbed_volume(state, nl, pd)
    bulk = state.solid.n * DX**3
    assert vol == pytest.approx(phi * bulk, rel=0.10)


def test_absorbed_volume_ratio_tracks_porosity():
    v04 = absorbed_volume(saturated_block(0.4), spacing=DX)
    v08 = absorbed_volume(saturated_block(0.8), spacing=DX)
    assert v04 / v08 == pytest.approx(0.5, abs=0.05)


def test_front_height_dry_and_saturated():
    state = make_state(xs=lattice(6, DX), dx=DX)
    base = state.solid.x[:, 1].min()
    top = state.solid.x[:, 1].max()
    state.solid.S[:] = 0.0
    assert saturation_front_height(state, DX) == pytest.approx(base)
    state.solid.S[:] = 1.0
    assert saturation_front_height(state, DX) == pytest.approx(top)


def test_front_height_partial_fill():
    state = make_state(xs=lattice(6, DX), dx=DX)
    y = state.solid.x[:, 1]
    cut = y.min() + 2.5 * DX
    state.solid.S[:] = np.where(y < cut, 1.0, 0.1)
    front = saturation_front_height(state, DX)
    assert front == pytest.approx(y.min() + 2 * DX, abs=1e-9)


def test_front_height_no_solid_nan():
    state = make_state(xf=lattice(3, DX), dx=DX)
    assert np.isnan(saturation_front_height(state, DX))


def test_density_errors_and_momentum():
    state = make_state(xf=lattice(4, DX), dx=DX)
    state.fluid.rho_hat[:] = 1000.0
    state.fluid.rho_hat[0] = 1100.0
    mx, avg = density_errors(state)
    assert mx == pytest.approx(0.1)
    assert avg == pytest.approx(0.1 / state.fluid.n)

    state.fluid.v[:] = [1.0, 0.0, 0.0]
    mom = total_momentum(state)
    np.testing.assert_allclose(mom, [state.fluid.m.sum(), 0.0, 0.0])
    assert kinetic_energy(state) == pytest.approx(0.5 * state.fluid.m.sum())


def test_metrics_row_csv_round_trip(tmp_path):
    state = saturated_block(0.5, n=6)
    nl, pd = neighbors_and_pairs(state, DX)
    compute_densities(state, nl, pd)
    compute_saturation(state, nl, pd)
    row = compute_metrics_row(state, DX, pressure_iterations=7, cg_iterations=3)
    path = tmp_path / "metrics.csv"
    from poroflow.metrics import METRICS_COLUMNS

    path.write_text(",".join(METRICS_COLUMNS) + "\n" + row_to_csv(row) + "\n")
    rows = read_metrics_csv(path)
    assert len(rows) == 1
    got = rows[0]
    assert got.pressure_iterations == 7
    assert got.cg_iterations == 3
    assert got.absorbed_volume == pytest.approx(row.absorbed_volume, rel=1e-8)
    assert got.front_height == pytest.approx(row.front_height, rel=1e-8)
