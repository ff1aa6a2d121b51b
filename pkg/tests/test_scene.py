import json

import numpy as np
import pytest

from poroflow.kernels import KernelSpec, kernel_value
from poroflow.materials import FluidMaterial, PorousSolidMaterial
from poroflow.scene import (
    Body,
    BoundaryBox,
    Scene,
    SceneError,
    SimParams,
    load_scene,
    sample_box,
    sample_sphere,
    scene_from_dict,
)

from conftest import SPONGE, WATER


def basic_scene(**overrides):
    params = SimParams(particle_spacing=0.1, time_step=1e-3, end_time=0.01)
    kw = dict(
        materials={"water": WATER, "sponge": SPONGE},
        bodies=[
            Body(sampler="box", material="water", phase="fluid",
                 lo=(0, 0, 0), hi=(0.3, 0.3, 0.3)),
            Body(sampler="sphere", material="sponge", phase="solid",
                 center=(1.0, 1.0, 1.0), radius=0.25),
        ],
        boundaries=[BoundaryBox(lo=(-0.2, -0.2, -0.2), hi=(1.6, 1.6, 1.6), open_top=True)],
        params=params,
    )
    kw.update(overrides)
    return Scene(**kw)


def test_sample_box_counts_and_volumes():
    pts = sample_box((0, 0, 0), (1, 1, 1), 0.1)
    assert len(pts) == 1000
    assert np.all(pts >= 0.05 - 1e-12) and np.all(pts <= 0.95 + 1e-12)


def test_sample_box_masses():
    scene = basic_scene()
    state = scene.build()
    # fluid: m = rho0 * V0
    np.testing.assert_allclose(state.fluid.m, 1000.0 * 0.1**3)
    # solid: m = (1 - phi) rho0 V0 = 0.4 * 1000 * 1e-3
    np.testing.assert_allclose(state.solid.m, 0.4 * 1000.0 * 0.1**3)


def test_sample_box_smaller_than_spacing_warns_empty():
    with pytest.warns(UserWarning, match="smaller than one spacing"):
        pts = sample_box((0, 0, 0), (0.05, 0.05, 0.05), 0.1)
    assert len(pts) == 0


def test_sample_sphere_tiny_radius_single_particle():
    pts = sample_sphere((0.3, 0.4, 0.5), 0.04, 0.1)
    np.testing.assert_array_equal(pts, [[0.3, 0.4, 0.5]])


def test_sample_sphere_count_and_containment():
    dx = 0.1
    r = 5 * dx
    pts = sample_sphere((0, 0, 0), r, dx)
    assert np.all(np.linalg.norm(pts, axis=1) <= r + 1e-12)
    # exact lattice-clip oracle
    k = int(np.floor(r / dx))
    offs = np.arange(-k, k + 1) * dx
    xs, ys, zs = np.meshgrid(offs, offs, offs, indexing="ij")
    grid = np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)
    expected = int((np.linalg.norm(grid, axis=1) <= r).sum())
    assert len(pts) == expected
    # within 15% of the continuum volume estimate
    assert abs(len(pts) - 4.0 / 3.0 * np.pi * r**3 / dx**3) <= 0.15 * len(pts)


def test_total_solid_mass_matches_lattice_volume():
    scene = basic_scene()
    state = scene.build()
    n = state.solid.n
    lattice_volume = n * 0.1**3
    assert state.solid.m.sum() == pytest.approx(0.4 * 1000.0 * lattice_volume, rel=1e-12)


def test_boundary_pseudo_volumes_near_plane():
    # psi of an infinite wall particle is a finite positive volume larger
    # than a bulk cell (single layer stands in for missing depth)
    scene = basic_scene()
    state = scene.build()
    assert np.all(state.boundary.psi > 0)
    dx3 = 0.1**3
    assert state.boundary.psi.max() < 10 * dx3
    assert state.boundary.psi.min() > 0.5 * dx3


def test_scene_json_round_trip(tmp_path):
    scene = basic_scene()
    path = tmp_path / "scene.json"
    scene.save(path)
    loaded = load_scene(path)
    s1 = scene.build()
    s2 = loaded.build()
    np.testing.assert_array_equal(s1.fluid.x, s2.fluid.x)
    np.testing.assert_array_equal(s1.fluid.m, s2.fluid.m)
    np.testing.assert_array_equal(s1.solid.x, s2.solid.x)
    np.testing.assert_array_equal(s1.solid.m, s2.solid.m)
    np.testing.assert_array_equal(s1.boundary.x, s2.boundary.x)
    np.testing.assert_array_equal(s1.boundary.psi, s2.boundary.psi)
    # serializing the reloaded scene is stable
    assert loaded.to_dict() == scene.to_dict()


def test_porosity_one_rejected():
    cfg = {
        "materials": [
            {"type": "porous_solid", "name": "bad",
             "solid_phase_rest_density": 1000.0, "porosity": 1.0}
        ],
        "bodies": [],
        "sim": {},
    }
    with pytest.raises(SceneError, match=r"porosity.*\[0, 1\)"):
        scene_from_dict(cfg)


def test_porosity_variants_build():
    for phi in (0.4, 0.6, 0.8):
        mat = PorousSolidMaterial(
            name="m", solid_phase_rest_density=1000.0, porosity=phi
        )
        scene = basic_scene(materials={"water": WATER, "m": mat},
                            bodies=[Body(sampler="box", material="m", phase="solid",
                                         lo=(0, 0, 0), hi=(0.3, 0.3, 0.3))])
        state = scene.build()
        np.testing.assert_allclose(state.solid.phi, phi)
        np.testing.assert_allclose(state.solid.m, (1 - phi) * 1000.0 * 0.1**3)


def test_json_parse_error_cites_location(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "materials": [,]\n}')
    with pytest.raises(SceneError, match=r"broken\.json:2:"):
        load_scene(path)


def test_unknown_material_reference():
    scene = basic_scene()
    scene.bodies[0].material = "slime"
    with pytest.raises(SceneError, match=r"bodies\[0\].material: unknown"):
        scene.build()


def test_unknown_sim_parameter_rejected():
    cfg = {"materials": [], "bodies": [], "sim": {"timestep": 1e-3}}
    with pytest.raises(SceneError, match="sim.timestep: unknown parameter"):
        scene_from_dict(cfg)


def test_multi_fluid_materials_rejected():
    w2 = FluidMaterial(name="oil", rest_density=800.0)
    scene = basic_scene(materials={"water": WATER, "oil": w2, "sponge": SPONGE})
    scene.bodies.append(
        Body(sampler="box", material="oil", phase="fluid", lo=(2, 0, 0), hi=(2.2, 0.2, 0.2))
    )
    with pytest.raises(SceneError, match="one fluid material"):
        scene.build()


def test_particle_import_and_fixed_flag(tmp_path):
    csv = tmp_path / "dots.csv"
    pts = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0]])
    np.savetxt(csv, pts, delimiter=",")
    cfg = {
        "materials": [
            {"type": "porous_solid", "name": "m",
             "solid_phase_rest_density": 1000.0, "porosity": 0.5}
        ],
        "bodies": [
            {"sampler": "particles", "path": "dots.csv", "material": "m",
             "phase": "solid", "fixed": True}
        ],
        "sim": {"particle_spacing": 0.1},
    }
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(cfg))
    scene = load_scene(path)
    state = scene.build()
    np.testing.assert_array_equal(state.solid.x, pts)
    assert state.solid.fixed.all()


def test_minimal_fluid_only_scene_builds():
    scene = basic_scene(bodies=[Body(sampler="box", material="water", phase="fluid",
                                     lo=(0, 0, 0), hi=(0.2, 0.2, 0.2))],
                        boundaries=[])
    state = scene.build()
    assert state.solid.n == 0
    assert state.fluid.n == 8
