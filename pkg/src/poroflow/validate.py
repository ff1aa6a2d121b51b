"""Analytic validation oracles applied to finished run directories."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .casagrande import DamGeometry, casagrande_surface
from .density import build_pair_data
from .metrics import DEFAULT_ABSORBED_THRESHOLD, absorbed_mask, read_metrics_csv
from .neighbors import build_neighbor_lists
from .rundir import RunDirectory

ORACLES = ("hydrostatic", "buoyancy", "porosity-linearity", "casagrande")


@dataclass
class ValidationReport:
    oracle: str
    passed: bool
    lines: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        body = "\n".join(f"  {line}" for line in self.lines)
        return f"[{status}] oracle={self.oracle}\n{body}"


def _final_state(run_dir):
    rd = RunDirectory(run_dir)
    snap = rd.read_snapshot(-1)
    state = rd.state_from_snapshot(snap)
    scene = rd.load_scene()
    return rd, scene, state


def _column_surface(x, y, column_size):
    """Max particle height per (binned) horizontal position."""
    cols = np.round(x / column_size).astype(np.int64)
    out = {}
    for c, yy in zip(cols, y):
        if c not in out or yy > out[c]:
            out[c] = yy
    return out


def validate_hydrostatic(run_dir, rel_tol=0.10) -> ValidationReport:
    """Pressure at depth matches rho0 |g| depth within the tolerance."""
    rd, scene, state = _final_state(run_dir)
    f = state.fluid
    dx = scene.params.particle_spacing
    h = scene.params.support_radius
    g = abs(scene.params.gravity[1])
    report = ValidationReport(oracle="hydrostatic", passed=False)
    if f.n == 0 or g == 0:
        report.lines.append("no fluid particles or zero gravity; nothing to validate")
        return report

    keys = (np.round(f.x[:, 0] / dx).astype(np.int64) * 2_000_003
            + np.round(f.x[:, 2] / dx).astype(np.int64))
    surface = {}
    for k, yy in zip(keys, f.x[:, 1]):
        if k not in surface or yy > surface[k]:
            surface[k] = yy
    surf = np.array([surface[k] for k in keys]) + 0.5 * dx
    depth = surf - f.x[:, 1]
    sel = depth > 2.0 * h
    if not sel.any():
        report.lines.append("tank too shallow: no particles deeper than 2h")
        return report
    expected = state.fluid.rho0 * g * depth[sel]
    rel = np.abs(f.p[sel] - expected) / expected
    med = float(np.median(rel))
    report.details = {
        "median_relative_deviation": med,
        "particles_checked": int(sel.sum()),
        "tolerance": rel_tol,
    }
    report.passed = med <= rel_tol
    report.lines.append(
        f"pressure vs rho g y over {int(sel.sum())} particles: median relative "
        f"deviation {med:.3%} (tolerance {rel_tol:.0%})"
    )
    return report


def _floor_height(scene):
    if "floor_y" in scene.meta:
        return float(scene.meta["floor_y"])
    if scene.boundaries:
        return min(b.lo[1] for b in scene.boundaries)
    return 0.0


def validate_buoyancy(run_dir) -> ValidationReport:
    """Float/sink classification per solid body vs solid phase density.

    A porous body floats exactly when its solid phase is less dense than
    the fluid; sinking bodies must reach the floor in order of decreasing
    saturated density (solid bulk plus filled pores).
    """
    rd = RunDirectory(run_dir)
    scene = rd.load_scene()
    dx = scene.params.particle_spacing
    floor = _floor_height(scene)
    fmat = scene.fluid_material()
    report = ValidationReport(oracle="buoyancy", passed=False)
    if fmat is None:
        report.lines.append("scene has no fluid; nothing to validate")
        return report

    solid_bodies = [
        (i, b) for i, b in enumerate(scene.bodies) if b.phase == "solid"
    ]
    if not solid_bodies:
        report.lines.append("scene has no solid bodies; nothing to validate")
        return report

    static = rd.read_static()
    body_of = np.array([int(row[1]) for row in static["S"]], dtype=np.int64)

    touch = floor + 1.6 * dx  # bottom particle resting on the floor layer
    floor_time = {i: None for i, _ in solid_bodies}
    final_min_y = {}
    for path in rd.snapshot_paths():
        from .snapshots import read_snapshot

        snap = read_snapshot(path)
        for bi, _ in solid_bodies:
            sel = body_of == bi
            if not sel.any():
                continue
            min_y = float(snap.solid_x[sel, 1].min())
            final_min_y[bi] = min_y
            if min_y <= touch and floor_time[bi] is None:
                floor_time[bi] = snap.time

    ok = True
    sinkers = []
    for bi, body in solid_bodies:
        mat = scene.materials[body.material]
        expected_float = mat.solid_phase_rest_density < fmat.rest_density
        measured_float = floor_time[bi] is None
        verdict = "ok" if expected_float == measured_float else "MISMATCH"
        ok = ok and (expected_float == measured_float)
        sat_density = mat.bulk_rest_density + mat.porosity * fmat.rest_density
        report.lines.append(
            f"body {bi} ({body.material}): rho_solid={mat.solid_phase_rest_density:.1f} "
            f"expected {'float' if expected_float else 'sink'}, measured "
            f"{'float' if measured_float else 'sink'}"
            + (f" (floor at t={floor_time[bi]:.3f}s)" if floor_time[bi] is not None else "")
            + f" [{verdict}]"
        )
        if not expected_float:
            sinkers.append((bi, sat_density, floor_time[bi]))

    # heavier saturated bodies must reach the floor no later
    sinkers.sort(key=lambda r: -r[1])
    for (b1, d1, t1), (b2, d2, t2) in zip(sinkers, sinkers[1:]):
        if t1 is None or t2 is None:
            continue
        if t1 > t2 + 1e-9:
            ok = False
            report.lines.append(
                f"ordering violated: body {b1} (saturated density {d1:.0f}) reached "
                f"the floor after body {b2} ({d2:.0f})"
            )
    report.passed = ok
    report.details = {
        "floor_time": {k: v for k, v in floor_time.items()},
        "final_min_y": final_min_y,
    }
    return report


def _final_absorbed(run_dir):
    rd = RunDirectory(run_dir)
    if rd.metrics_path.exists():
        rows = read_metrics_csv(rd.metrics_path)
        if rows:
            return rows[-1].absorbed_volume
    from .metrics import absorbed_volume

    scene = rd.load_scene()
    state = rd.state_from_snapshot(rd.read_snapshot(-1))
    return absorbed_volume(state, spacing=scene.params.particle_spacing)


def validate_porosity_linearity(run_dirs, tol=0.15) -> ValidationReport:
    """Final absorbed volumes of matched seep runs scale like their porosities."""
    report = ValidationReport(oracle="porosity-linearity", passed=False)
    if len(run_dirs) < 2:
        report.lines.append("need at least two run directories to compare")
        return report
    entries = []
    for d in run_dirs:
        rd = RunDirectory(d)
        scene = rd.load_scene()
        phis = {
            scene.materials[b.material].porosity
            for b in scene.bodies if b.phase == "solid"
        }
        if len(phis) != 1:
            report.lines.append(f"{d}: expected one solid porosity, got {sorted(phis)}")
            return report
        entries.append((Path(d).name, phis.pop(), _final_absorbed(d)))

    ok = True
    for i in range(len(entries)):
        for j in range(i + 1, len(entries)):
            n1, p1, a1 = entries[i]
            n2, p2, a2 = entries[j]
            if a2 == 0:
                ok = False
                report.lines.append(f"{n2}: zero absorbed volume")
                continue
            measured = a1 / a2
            expected = p1 / p2
            dev = abs(measured - expected) / expected
            ok = ok and dev <= tol
            report.lines.append(
                f"{n1} vs {n2}: absorbed ratio {measured:.3f}, porosity ratio "
                f"{expected:.3f}, deviation {dev:.1%} (tolerance {tol:.0%})"
            )
    for name, phi, vol in entries:
        report.lines.append(f"{name}: phi={phi}, absorbed={vol:.4e} m^3")
    report.passed = ok
    report.details = {"entries": entries}
    return report


def dam_from_meta(meta: dict) -> DamGeometry:
    if "dam" not in meta:
        raise ValueError(
            "scene meta lacks the 'dam' geometry block required by the "
            "casagrande oracle"
        )
    d = meta["dam"]
    return DamGeometry(
        upstream_toe_x=float(d["upstream_toe_x"]),
        downstream_toe_x=float(d["downstream_toe_x"]),
        upstream_slope=float(d["upstream_slope"]),
        height=float(d["height"]),
        base_y=float(d.get("base_y", 0.0)),
    )


def validate_casagrande(run_dir, tol=0.15,
                        threshold=DEFAULT_ABSORBED_THRESHOLD) -> ValidationReport:
    """Median deviation of the interior phreatic surface from the base
    parabola, relative to the measured upstream head."""
    rd, scene, state = _final_state(run_dir)
    dam = dam_from_meta(scene.meta)
    dx = scene.params.particle_spacing
    f = state.fluid
    report = ValidationReport(oracle="casagrande", passed=False)

    upstream = f.x[:, 0] < dam.upstream_toe_x
    if not upstream.any():
        report.lines.append("no fluid upstream of the dam; cannot measure the head")
        return report
    head = float(f.x[upstream, 1].max()) + 0.5 * dx - dam.base_y
    head = min(head, dam.height)
    solution = casagrande_surface(dam, head)

    nl = build_neighbor_lists(f.x, state.solid.x, state.boundary.x,
                              scene.params.support_radius)
    pd = build_pair_data(state, nl)
    inside = absorbed_mask(state, nl, pd, threshold)
    margin = 2.0 * dx
    sel = inside & (f.x[:, 0] >= solution.entry_x + margin)
    sel &= f.x[:, 0] <= dam.downstream_toe_x - margin
    if sel.sum() < 10:
        report.lines.append(
            f"only {int(sel.sum())} absorbed particles between entry point and "
            "focus; dam not permeated"
        )
        return report

    surface = _column_surface(f.x[sel, 0], f.x[sel, 1], dx)
    xs = np.array(sorted(surface)) * dx
    ys = np.array([surface[int(round(x / dx))] for x in xs]) + 0.5 * dx
    oracle = solution.height(xs)
    dev = np.abs(ys - oracle)
    med = float(np.median(dev))
    report.details = {
        "measured_head": head,
        "median_deviation": med,
        "relative": med / head,
        "columns": len(xs),
        "focal": solution.focal,
    }
    report.passed = med <= tol * head
    report.lines.append(
        f"measured head {head:.3f} m, focal parameter {solution.focal:.4f} m"
    )
    report.lines.append(
        f"median |surface - parabola| over {len(xs)} columns: {med:.4f} m "
        f"= {med / head:.1%} of head (tolerance {tol:.0%})"
    )
    return report


def run_validation(oracle: str, run_dirs, **kw) -> ValidationReport:
    if oracle == "hydrostatic":
        return validate_hydrostatic(run_dirs[0], **kw)
    if oracle == "buoyancy":
        return validate_buoyancy(run_dirs[0], **kw)
    if oracle == "porosity-linearity":
        return validate_porosity_linearity(run_dirs, **kw)
    if oracle == "casagrande":
        return validate_casagrande(run_dirs[0], **kw)
    raise ValueError(f"unknown oracle {oracle!r}; expected one of {ORACLES}")
