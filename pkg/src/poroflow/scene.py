"""Scene construction: materials, particle sampling, boundaries, parameters.

A scene is either built programmatically (materials + bodies + boundaries +
SimParams) or loaded from a JSON file. Building produces the rest state:
lattice positions, masses, rest volumes, boundary pseudo-volumes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .kernels import SUPPORT_OVER_SPACING, KernelSpec, kernel_value
from .materials import (
    FluidMaterial,
    MaterialError,
    PorousSolidMaterial,
    fluid_material_from_dict,
    solid_material_from_dict,
)
from .neighbors import build_neighbor_lists
from .state import BoundaryState, FluidState, SimulationState, SolidState


class SceneError(ValueError):
    """Scene file or scene description violates the schema."""


@dataclass
class SimParams:
    time_step: float = 1e-3  # s
    gravity: tuple = (0.0, -9.81, 0.0)
    particle_spacing: float = 0.025  # m
    end_time: float = 1.0  # s
    output_interval: float = 0.05  # s
    # pressure solver (relaxed Jacobi)
    pressure_relaxation: float = 0.5
    pressure_max_iterations: int = 100
    pressure_tolerance: float = 1e-3  # average density error fraction
    # coupled implicit solver (matrix-free CG)
    coupled_tolerance: float = 1e-4  # relative residual
    coupled_max_iterations: int = 100
    cfl_warn_factor: float = 0.4  # warn when max |v| dt exceeds this * h
    explicit_drag: bool = False  # test-only: evaluate drag at v^n on the RHS

    def __post_init__(self):
        if not self.time_step > 0:
            raise SceneError(f"sim.time_step: must be positive, got {self.time_step}")
        if not self.particle_spacing > 0:
            raise SceneError(
                f"sim.particle_spacing: must be positive, got {self.particle_spacing}"
            )
        for name in ("pressure_tolerance", "coupled_tolerance", "output_interval"):
            if not getattr(self, name) > 0:
                raise SceneError(f"sim.{name}: must be positive, got {getattr(self, name)}")
        self.gravity = tuple(float(g) for g in self.gravity)
        if len(self.gravity) != 3:
            raise SceneError(f"sim.gravity: expected 3 components, got {self.gravity}")

    @property
    def support_radius(self) -> float:
        return SUPPORT_OVER_SPACING * self.particle_spacing

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(h=self.support_radius, dim=3)


@dataclass
class Body:
    """One sampled particle set bound to a material."""

    sampler: str  # box | sphere | particles
    material: str
    phase: str  # fluid | solid
    fixed: bool = False
    velocity: tuple = (0.0, 0.0, 0.0)
    lo: tuple | None = None  # box
    hi: tuple | None = None
    center: tuple | None = None  # sphere
    radius: float | None = None
    path: str | None = None  # particles: CSV with x,y,z rows
    positions: np.ndarray | None = None  # particles: direct array


@dataclass
class BoundaryBox:
    """Static (optionally moving) boundary sampled from a box.

    kind "walls" samples the faces of the box (a container); "block"
    samples the filled volume (a floor, press, or obstacle).
    """

    lo: tuple
    hi: tuple
    kind: str = "walls"  # walls | block
    open_top: bool = False
    layers: int = 1
    motion: dict | None = None  # {"velocity": [..], "start": t0, "stop": t1}


def sample_box(lo, hi, spacing: float) -> np.ndarray:
    """Regular lattice of cell-center positions filling an axis-aligned box."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if spacing <= 0:
        raise SceneError(f"sampling spacing must be positive, got {spacing}")
    extent = hi - lo
    if np.any(extent <= 0):
        raise SceneError(f"box extent must be positive, got min={lo} max={hi}")
    counts = np.floor(extent / spacing + 1e-9).astype(int)
    if np.any(counts < 1):
        warnings.warn(
            f"box {lo}..{hi} is smaller than one spacing {spacing}; sampled no particles"
        )
        return np.zeros((0, 3))
    axes = [lo[a] + (np.arange(counts[a]) + 0.5) * spacing for a in range(3)]
    xs, ys, zs = np.meshgrid(*axes, indexing="ij")
    return np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)


def sample_sphere(center, radius: float, spacing: float) -> np.ndarray:
    """Lattice clipped to a sphere; always contains the center point."""
    center = np.asarray(center, dtype=np.float64)
    if spacing <= 0:
        raise SceneError(f"sampling spacing must be positive, got {spacing}")
    if radius < 0:
        raise SceneError(f"sphere radius must be non-negative, got {radius}")
    k = int(np.floor(radius / spacing))
    offs = np.arange(-k, k + 1) * spacing
    xs, ys, zs = np.meshgrid(offs, offs, offs, indexing="ij")
    pts = np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)
    keep = np.linalg.norm(pts, axis=1) <= radius
    return center + pts[keep]


def _sample_walls(lo, hi, spacing: float, open_top: bool, layers: int) -> np.ndarray:
    """Wall layers on the box faces, offset half a spacing outward.

    The declared box is the interior domain: particles sampled at its cell
    centers end up one full spacing from the first wall layer, matching the
    lattice. Edges and corners are deduplicated.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(hi - lo <= 0):
        raise SceneError(f"boundary extent must be positive, got min={lo} max={hi}")
    seen = set()
    pts = []

    def add(p):
        key = tuple(np.round(p / (0.5 * spacing)).astype(int))
        if key not in seen:
            seen.add(key)
            pts.append(p)

    counts = np.maximum(np.round((hi - lo) / spacing).astype(int), 1)
    for layer in range(layers):
        off = (layer + 0.5) * spacing
        l, u = lo - off, hi + off
        n = counts + 2 * (layer + 1)
        ax = [l[a] + np.arange(n[a] + 1) * (u[a] - l[a]) / n[a] for a in range(3)]
        faces = [(0, l[0]), (0, u[0]), (1, l[1]), (2, l[2]), (2, u[2])]
        if not open_top:
            faces.append((1, u[1]))
        for axis, value in faces:
            others = [a for a in range(3) if a != axis]
            g0, g1 = np.meshgrid(ax[others[0]], ax[others[1]], indexing="ij")
            for a0, a1 in zip(g0.ravel(), g1.ravel()):
                p = np.zeros(3)
                p[axis] = value
                p[others[0]] = a0
                p[others[1]] = a1
                add(p)
    return np.array(pts) if pts else np.zeros((0, 3))


@dataclass
class BoundaryMotion:
    body: int
    velocity: np.ndarray
    start: float
    stop: float


@dataclass
class Scene:
    materials: dict
    bodies: list
    boundaries: list = field(default_factory=list)
    params: SimParams = field(default_factory=SimParams)
    meta: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path)

    def fluid_material(self) -> FluidMaterial | None:
        mats = {
            b.material for b in self.bodies if b.phase == "fluid"
        }
        if not mats:
            return None
        if len(mats) > 1:
            raise SceneError(
                "bodies: all fluid bodies must share one fluid material "
                f"(multi-fluid mixtures are unsupported); got {sorted(mats)}"
            )
        name = mats.pop()
        if name not in self.materials:
            raise SceneError(f"bodies: unknown material {name!r}")
        return self.materials[name]

    def build(self) -> SimulationState:
        dx = self.params.particle_spacing
        V0 = dx**3
        h = self.params.support_radius

        fluid_parts = []
        solid_parts = []
        for bi, body in enumerate(self.bodies):
            pos = self._sample_body(bi, body, dx)
            if body.phase == "fluid":
                fluid_parts.append((bi, body, pos))
            else:
                solid_parts.append((bi, body, pos))
        fmat = self.fluid_material()

        nf = sum(len(p) for _, _, p in fluid_parts)
        fluid = FluidState.allocate(
            nf,
            rho0=fmat.rest_density if fmat else 1000.0,
            mu_vis=fmat.viscosity if fmat else 0.0,
        )
        at = 0
        for bi, body, pos in fluid_parts:
            n = len(pos)
            sel = slice(at, at + n)
            fluid.x[sel] = pos
            fluid.v[sel] = np.asarray(body.velocity, dtype=np.float64)
            fluid.V0[sel] = V0
            fluid.m[sel] = fluid.rho0 * V0
            fluid.body[sel] = bi
            at += n

        ns = sum(len(p) for _, _, p in solid_parts)
        solid = SolidState.allocate(ns)
        at = 0
        for bi, body, pos in solid_parts:
            mat = self.materials[body.material]
            n = len(pos)
            sel = slice(at, at + n)
            solid.x[sel] = pos
            solid.x0[sel] = pos
            solid.v[sel] = np.asarray(body.velocity, dtype=np.float64)
            solid.V0[sel] = V0
            solid.m[sel] = mat.bulk_rest_density * V0
            solid.fixed[sel] = body.fixed
            solid.body[sel] = bi
            solid.set_material(sel, mat)
            at += n

        bnd_pos = []
        bnd_body = []
        for gi, bx in enumerate(self.boundaries):
            if bx.kind == "walls":
                pos = _sample_walls(bx.lo, bx.hi, dx, bx.open_top, bx.layers)
            elif bx.kind == "block":
                pos = sample_box(bx.lo, bx.hi, dx)
            else:
                raise SceneError(
                    f"boundaries[{gi}].kind: expected 'walls' or 'block', got {bx.kind!r}"
                )
            bnd_pos.append(pos)
            bnd_body.append(np.full(len(pos), gi, dtype=np.int64))
        boundary = BoundaryState.allocate(sum(len(p) for p in bnd_pos))
        if boundary.n:
            boundary.x[:] = np.concatenate(bnd_pos, axis=0)
            boundary.body[:] = np.concatenate(bnd_body)
            boundary.psi[:] = compute_boundary_pseudo_volumes(boundary.x, h)

        state = SimulationState(fluid=fluid, solid=solid, boundary=boundary)
        state.v_prev_fluid = fluid.v.copy()
        state.v_prev_solid = solid.v.copy()
        return state

    def boundary_motions(self) -> list:
        out = []
        for gi, bx in enumerate(self.boundaries):
            if bx.motion:
                m = bx.motion
                out.append(
                    BoundaryMotion(
                        body=gi,
                        velocity=np.asarray(m.get("velocity", (0, 0, 0)), dtype=np.float64),
                        start=float(m.get("start", 0.0)),
                        stop=float(m.get("stop", np.inf)),
                    )
                )
        return out

    def _sample_body(self, bi: int, body: Body, dx: float) -> np.ndarray:
        where = f"bodies[{bi}]"
        if body.phase not in ("fluid", "solid"):
            raise SceneError(f"{where}.phase: expected 'fluid' or 'solid', got {body.phase!r}")
        if body.material not in self.materials:
            raise SceneError(f"{where}.material: unknown material {body.material!r}")
        mat = self.materials[body.material]
        if body.phase == "fluid" and not isinstance(mat, FluidMaterial):
            raise SceneError(f"{where}.material: {body.material!r} is not a fluid material")
        if body.phase == "solid" and not isinstance(mat, PorousSolidMaterial):
            raise SceneError(f"{where}.material: {body.material!r} is not a porous solid material")
        if body.fixed and body.phase == "fluid":
            raise SceneError(f"{where}.fixed: only solid bodies can be fixed")

        if body.sampler == "box":
            if body.lo is None or body.hi is None:
                raise SceneError(f"{where}: box sampler requires 'min' and 'max'")
            return sample_box(body.lo, body.hi, dx)
        if body.sampler == "sphere":
            if body.center is None or body.radius is None:
                raise SceneError(f"{where}: sphere sampler requires 'center' and 'radius'")
            return sample_sphere(body.center, body.radius, dx)
        if body.sampler == "particles":
            if body.positions is not None:
                return np.asarray(body.positions, dtype=np.float64).reshape(-1, 3)
            if body.path is None:
                raise SceneError(f"{where}: particles sampler requires 'path' or positions")
            path = self.base_dir / body.path
            if not path.exists():
                raise SceneError(f"{where}.path: file not found: {path}")
            return np.loadtxt(path, delimiter=",", ndmin=2)[:, :3].astype(np.float64)
        raise SceneError(
            f"{where}.sampler: expected 'box', 'sphere' or 'particles', got {body.sampler!r}"
        )

    def to_dict(self) -> dict:
        mats = []
        for m in self.materials.values():
            d = asdict(m)
            d["type"] = "fluid" if isinstance(m, FluidMaterial) else "porous_solid"
            mats.append(d)
        bodies = []
        for b in self.bodies:
            d = {"sampler": b.sampler, "material": b.material, "phase": b.phase}
            if b.fixed:
                d["fixed"] = True
            if any(v != 0.0 for v in b.velocity):
                d["velocity"] = list(b.velocity)
            if b.sampler == "box":
                d["min"], d["max"] = list(b.lo), list(b.hi)
            elif b.sampler == "sphere":
                d["center"], d["radius"] = list(b.center), b.radius
            elif b.positions is not None:
                d["positions"] = np.asarray(b.positions).reshape(-1, 3).tolist()
            else:
                d["path"] = b.path
            bodies.append(d)
        bounds = []
        for bx in self.boundaries:
            d = {"kind": bx.kind, "min": list(bx.lo), "max": list(bx.hi)}
            if bx.open_top:
                d["open_top"] = True
            if bx.layers != 1:
                d["layers"] = bx.layers
            if bx.motion:
                d["motion"] = bx.motion
            bounds.append(d)
        sim = asdict(self.params)
        sim["gravity"] = list(sim["gravity"])
        out = {"materials": mats, "bodies": bodies, "boundaries": bounds, "sim": sim}
        if self.meta:
            out["meta"] = self.meta
        return out

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def compute_boundary_pseudo_volumes(x_boundary: np.ndarray, h: float) -> np.ndarray:
    """Psi_b = 1 / sum_{b' in N(b) + self} W_bb' over boundary neighbors."""
    spec = KernelSpec(h=h)
    # boundary-only build: global indices coincide with boundary indices
    nl = build_neighbor_lists(np.zeros((0, 3)), np.zeros((0, 3)), x_boundary, h)
    w0 = kernel_value(np.zeros(3), spec)
    psi = np.empty(len(x_boundary))
    for b in range(len(x_boundary)):
        nb = nl.boundary_neighbors(b)
        r = np.linalg.norm(x_boundary[nb] - x_boundary[b], axis=1)
        total = w0 + sum(kernel_value(np.array([ri, 0.0, 0.0]), spec) for ri in r)
        psi[b] = 1.0 / total
    return psi


def _material_from_dict(d: dict, idx: int):
    where = f"materials[{idx}]"
    if not isinstance(d, dict):
        raise SceneError(f"{where}: expected an object, got {type(d).__name__}")
    kind = d.get("type")
    try:
        if kind == "fluid":
            return fluid_material_from_dict(d, where)
        if kind == "porous_solid":
            return solid_material_from_dict(d, where)
    except (MaterialError, TypeError, ValueError) as e:
        raise SceneError(f"{where}: {e}") from e
    raise SceneError(f"{where}.type: expected 'fluid' or 'porous_solid', got {kind!r}")


def scene_from_dict(cfg: dict, base_dir=Path(".")) -> Scene:
    if not isinstance(cfg, dict):
        raise SceneError(f"scene root: expected an object, got {type(cfg).__name__}")
    materials = {}
    for i, md in enumerate(cfg.get("materials", [])):
        mat = _material_from_dict(md, i)
        if mat.name in materials:
            raise SceneError(f"materials[{i}].name: duplicate material name {mat.name!r}")
        materials[mat.name] = mat

    bodies = []
    for i, bd in enumerate(cfg.get("bodies", [])):
        where = f"bodies[{i}]"
        if not isinstance(bd, dict):
            raise SceneError(f"{where}: expected an object")
        try:
            body = Body(
                sampler=bd.get("sampler", "box"),
                material=str(bd.get("material", "")),
                phase=bd.get("phase", "fluid"),
                fixed=bool(bd.get("fixed", False)),
                velocity=tuple(bd.get("velocity", (0.0, 0.0, 0.0))),
                lo=tuple(bd["min"]) if "min" in bd else None,
                hi=tuple(bd["max"]) if "max" in bd else None,
                center=tuple(bd["center"]) if "center" in bd else None,
                radius=float(bd["radius"]) if "radius" in bd else None,
                path=bd.get("path"),
                positions=np.asarray(bd["positions"], dtype=np.float64)
                if "positions" in bd
                else None,
            )
        except (TypeError, ValueError) as e:
            raise SceneError(f"{where}: {e}") from e
        bodies.append(body)

    boundaries = []
    for i, xd in enumerate(cfg.get("boundaries", [])):
        where = f"boundaries[{i}]"
        if not isinstance(xd, dict) or "min" not in xd or "max" not in xd:
            raise SceneError(f"{where}: requires 'min' and 'max'")
        boundaries.append(
            BoundaryBox(
                lo=tuple(xd["min"]),
                hi=tuple(xd["max"]),
                kind=xd.get("kind", "walls"),
                open_top=bool(xd.get("open_top", False)),
                layers=int(xd.get("layers", 1)),
                motion=xd.get("motion"),
            )
        )

    sim_cfg = cfg.get("sim", {})
    if not isinstance(sim_cfg, dict):
        raise SceneError("sim: expected an object")
    known = set(SimParams.__dataclass_fields__)
    unknown = set(sim_cfg) - known
    if unknown:
        raise SceneError(f"sim.{sorted(unknown)[0]}: unknown parameter")
    try:
        params = SimParams(**{k: v for k, v in sim_cfg.items()})
    except TypeError as e:
        raise SceneError(f"sim: {e}") from e

    scene = Scene(
        materials=materials,
        bodies=bodies,
        boundaries=boundaries,
        params=params,
        meta=cfg.get("meta", {}),
        base_dir=Path(base_dir),
    )
    # eager validation of body/material references and geometry fields
    for bi, body in enumerate(scene.bodies):
        scene._sample_body(bi, body, params.particle_spacing)
    scene.fluid_material()
    return scene


def load_scene(path) -> Scene:
    path = Path(path)
    if not path.exists():
        raise SceneError(f"scene file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SceneError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    return scene_from_dict(cfg, base_dir=path.parent)
