"""Run metrics: absorbed volume, saturation front, density errors, momentum.

Metric functions are pure functions of a simulation state, so rows computed
in-process during a run and rows recomputed offline from a snapshot agree
up to serialization precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, prange

from .density import build_pair_data
from .neighbors import build_neighbor_lists
from .pressure import density_targets

METRICS_COLUMNS = [
    "time", "absorbed_volume", "front_height", "max_density_error",
    "avg_density_error", "momentum_x", "momentum_y", "momentum_z",
    "pressure_iterations", "cg_iterations",
]

DEFAULT_ABSORBED_THRESHOLD = 0.5
FRONT_SATURATION = 0.95


@dataclass
class MetricsRow:
    time: float
    absorbed_volume: float  # m^3
    front_height: float  # m, NaN when the scene has no solid
    max_density_error: float
    avg_density_error: float
    momentum: np.ndarray  # (3,), kg m/s
    pressure_iterations: int = 0
    cg_iterations: int = 0


@njit(cache=True, parallel=True)
def _solidity_kernel(fluid_end, solid_end, indices, W, V0_s, n_fluid, out):
    for i in prange(n_fluid):
        acc = 0.0
        for k in range(fluid_end[i], solid_end[i]):
            acc += V0_s[indices[k] - n_fluid] * W[k]
        out[i] = acc


def fluid_solidity(state, nl, pd) -> np.ndarray:
    """Solid rest-volume indicator per fluid particle: ~1 deep inside a
    rest-state solid, 0 outside."""
    out = np.zeros(state.fluid.n)
    _solidity_kernel(nl.fluid_end, nl.solid_end, nl.indices, pd.W,
                     state.solid.V0, state.fluid.n, out)
    return out


def absorbed_mask(state, nl, pd, threshold=DEFAULT_ABSORBED_THRESHOLD):
    """A fluid particle counts as absorbed when the solid volume indicator
    from its porous-density sum exceeds the threshold (default: half of the
    full-embedding lattice reference)."""
    return fluid_solidity(state, nl, pd) > threshold


def absorbed_volume(state, nl=None, pd=None, spacing=None,
                    threshold=DEFAULT_ABSORBED_THRESHOLD) -> float:
    if nl is None or pd is None:
        nl, pd = _neighbors(state, spacing)
    mask = absorbed_mask(state, nl, pd, threshold)
    return float(state.fluid.V0[mask].sum())


def saturation_front_height(state, column_size, s_threshold=FRONT_SATURATION) -> float:
    """Median over solid columns of the highest fully saturated height.

    Columns are (x, z) bins of the given size; a column without any
    saturated particle reports its base height. NaN when no solid exists.
    """
    s = state.solid
    if s.n == 0:
        return float("nan")
    cx = np.round(s.x[:, 0] / column_size).astype(np.int64)
    cz = np.round(s.x[:, 2] / column_size).astype(np.int64)
    keys = cx * 2_000_003 + cz
    order = np.argsort(keys, kind="stable")
    heights = []
    at = 0
    ks = keys[order]
    while at < len(ks):
        end = at
        while end < len(ks) and ks[end] == ks[at]:
            end += 1
        rows = order[at:end]
        sat = rows[s.S[rows] >= s_threshold]
        if len(sat):
            heights.append(s.x[sat, 1].max())
        else:
            heights.append(s.x[rows, 1].min())
        at = end
    return float(np.median(heights))


def density_errors(state):
    """(max, avg) positive relative density error over all particles."""
    target_f, target_s = density_targets(state)
    errs = []
    if state.fluid.n:
        errs.append(np.maximum(0.0, state.fluid.rho_hat - target_f) / target_f)
    if state.solid.n:
        errs.append(np.maximum(0.0, state.solid.rho - target_s) / target_s)
    if not errs:
        return 0.0, 0.0
    all_err = np.concatenate(errs)
    return float(all_err.max()), float(all_err.mean())


def total_momentum(state) -> np.ndarray:
    f, s = state.fluid, state.solid
    mom = np.zeros(3)
    if f.n:
        mom += (f.m[:, None] * f.v).sum(axis=0)
    if s.n:
        mom += (s.m[:, None] * s.v).sum(axis=0)
    return mom


def kinetic_energy(state) -> float:
    f, s = state.fluid, state.solid
    e = 0.0
    if f.n:
        e += 0.5 * float((f.m * (f.v**2).sum(axis=1)).sum())
    if s.n:
        e += 0.5 * float((s.m * (s.v**2).sum(axis=1)).sum())
    return e


def _neighbors(state, spacing):
    if spacing is None:
        raise ValueError("spacing required to rebuild neighbor lists")
    h = 2.0 * spacing
    nl = build_neighbor_lists(state.fluid.x, state.solid.x, state.boundary.x, h)
    return nl, build_pair_data(state, nl)


def compute_metrics_row(state, spacing, pressure_iterations=0, cg_iterations=0,
                        threshold=DEFAULT_ABSORBED_THRESHOLD) -> MetricsRow:
    nl, pd = _neighbors(state, spacing)
    maxe, avge = density_errors(state)
    return MetricsRow(
        time=state.time,
        absorbed_volume=absorbed_volume(state, nl, pd, threshold=threshold),
        front_height=saturation_front_height(state, spacing),
        max_density_error=maxe,
        avg_density_error=avge,
        momentum=total_momentum(state),
        pressure_iterations=pressure_iterations,
        cg_iterations=cg_iterations,
    )


def row_to_csv(row: MetricsRow) -> str:
    return ",".join([
        "%.9g" % row.time, "%.9g" % row.absorbed_volume, "%.9g" % row.front_height,
        "%.6e" % row.max_density_error, "%.6e" % row.avg_density_error,
        "%.9g" % row.momentum[0], "%.9g" % row.momentum[1], "%.9g" % row.momentum[2],
        str(row.pressure_iterations), str(row.cg_iterations),
    ])


def read_metrics_csv(path) -> list:
    rows = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics columns {header}")
        for line in fh:
            v = line.rstrip("\n").split(",")
            rows.append(MetricsRow(
                time=float(v[0]), absorbed_volume=float(v[1]),
                front_height=float(v[2]), max_density_error=float(v[3]),
                avg_density_error=float(v[4]),
                momentum=np.array([float(v[5]), float(v[6]), float(v[7])]),
                pressure_iterations=int(v[8]), cg_iterations=int(v[9]),
            ))
    return rows


def recompute_metrics(run_dir, threshold=DEFAULT_ABSORBED_THRESHOLD) -> list:
    """Recompute MetricsRows from a run directory's snapshot series."""
    from .rundir import RunDirectory
    from .snapshots import read_snapshot

    rd = RunDirectory(run_dir)
    scene = rd.load_scene()
    spacing = scene.params.particle_spacing
    iters = _step_iterations(rd)
    rows = []
    for path in rd.snapshot_paths():
        snap = read_snapshot(path)
        state = rd.state_from_snapshot(snap)
        pit, cit = iters.get(snap.step, (0, 0))
        rows.append(compute_metrics_row(state, spacing, pit, cit, threshold))
    return rows


def _step_iterations(rd) -> dict:
    out = {}
    path = Path(rd.steps_path)
    if not path.exists():
        return out
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        i_step = header.index("step")
        i_pit = header.index("pressure_iterations")
        i_cg = header.index("cg_iterations")
        for line in fh:
            v = line.rstrip("\n").split(",")
            out[int(v[i_step])] = (int(v[i_pit]), int(v[i_cg]))
    return out
