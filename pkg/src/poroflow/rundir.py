"""Run output directory: resolved config, static particle data, snapshot
series, per-step stats stream and scheduled metrics."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .scene import Body, Scene, scene_from_dict
from .snapshots import Snapshot, read_snapshot, snapshot_from_state, write_snapshot
from .state import BoundaryState, FluidState, SimulationState, SolidState

STEPS_COLUMNS = [
    "step", "time", "pressure_iterations", "pressure_avg_error",
    "pressure_max_error", "pressure_converged", "cg_iterations", "cg_residual",
    "force_balance", "momentum_x", "momentum_y", "momentum_z", "max_velocity",
    "cfl_exceeded", "wall_clock",
]


class RunDirectoryError(ValueError):
    pass


class RunDirectory:
    def __init__(self, root):
        self.root = Path(root)

    @property
    def config_path(self) -> Path:
        return self.root / "run_config.json"

    @property
    def static_path(self) -> Path:
        return self.root / "particles_static.csv"

    @property
    def snapshot_dir(self) -> Path:
        return self.root / "snapshots"

    @property
    def steps_path(self) -> Path:
        return self.root / "steps.csv"

    @property
    def metrics_path(self) -> Path:
        return self.root / "metrics.csv"

    @property
    def summary_path(self) -> Path:
        return self.root / "summary.json"

    def create(self):
        self.snapshot_dir.mkdir(parents=True, exist_ok=True)

    def write_config(self, scene: Scene):
        resolved = Scene(
            materials=scene.materials,
            bodies=[self._resolve_body(scene, b) for b in scene.bodies],
            boundaries=scene.boundaries,
            params=scene.params,
            meta=scene.meta,
            base_dir=scene.base_dir,
        )
        cfg = resolved.to_dict()
        cfg["poroflow_version"] = __version__
        self.config_path.write_text(json.dumps(cfg, indent=2))

    @staticmethod
    def _resolve_body(scene: Scene, body: Body) -> Body:
        if body.sampler != "particles" or body.positions is not None:
            return body
        pos = scene._sample_body(scene.bodies.index(body), body, scene.params.particle_spacing)
        return Body(sampler="particles", material=body.material, phase=body.phase,
                    fixed=body.fixed, velocity=body.velocity, positions=pos)

    def load_scene(self) -> Scene:
        if not self.config_path.exists():
            raise RunDirectoryError(f"not a run directory (missing {self.config_path})")
        cfg = json.loads(self.config_path.read_text())
        cfg.pop("poroflow_version", None)
        return scene_from_dict(cfg, base_dir=self.root)

    def write_static(self, state: SimulationState, scene: Scene):
        lines = ["phase,index,body,material,fixed,m,V0,psi,x0,y0,z0"]
        g = "%.17g"
        f, s, b = state.fluid, state.solid, state.boundary
        mat_of_body = {i: body.material for i, body in enumerate(scene.bodies)}
        for i in range(f.n):
            lines.append(
                "F,%d,%d,%s,0,%s,%s,,%s,%s,%s"
                % (i, f.body[i], mat_of_body.get(int(f.body[i]), ""),
                   g % f.m[i], g % f.V0[i],
                   g % f.x[i, 0], g % f.x[i, 1], g % f.x[i, 2])
            )
        for i in range(s.n):
            lines.append(
                "S,%d,%d,%s,%d,%s,%s,,%s,%s,%s"
                % (i, s.body[i], mat_of_body.get(int(s.body[i]), ""),
                   int(s.fixed[i]), g % s.m[i], g % s.V0[i],
                   g % s.x0[i, 0], g % s.x0[i, 1], g % s.x0[i, 2])
            )
        for i in range(b.n):
            lines.append(
                "B,%d,%d,,0,,,%s,%s,%s,%s"
                % (i, b.body[i], g % b.psi[i],
                   g % b.x[i, 0], g % b.x[i, 1], g % b.x[i, 2])
            )
        self.static_path.write_text("\n".join(lines) + "\n")

    def read_static(self) -> dict:
        if not self.static_path.exists():
            raise RunDirectoryError(f"missing static particle data {self.static_path}")
        out = {"F": [], "S": [], "B": []}
        with open(self.static_path) as fh:
            header = fh.readline()
            assert header.startswith("phase")
            for line in fh:
                parts = line.rstrip("\n").split(",")
                out[parts[0]].append(parts[1:])
        return out

    def snapshot_paths(self) -> list:
        if not self.snapshot_dir.exists():
            return []
        return sorted(self.snapshot_dir.glob("snap_*"))

    def read_snapshot(self, which=-1) -> Snapshot:
        paths = self.snapshot_paths()
        if not paths:
            raise RunDirectoryError(f"no snapshots in {self.snapshot_dir}")
        return read_snapshot(paths[which])

    def state_from_snapshot(self, snap: Snapshot) -> SimulationState:
        """Rebuild a state sufficient for metric recomputation.

        Boundary particles are restored at their rest positions; metric
        quantities do not consume boundary data.
        """
        scene = self.load_scene()
        static = self.read_static()
        fmat = scene.fluid_material()

        fluid = FluidState.allocate(
            snap.n_fluid,
            rho0=fmat.rest_density if fmat else 1000.0,
            mu_vis=fmat.viscosity if fmat else 0.0,
        )
        if snap.n_fluid != len(static["F"]):
            raise RunDirectoryError("snapshot fluid count does not match static data")
        for i, row in enumerate(static["F"]):
            fluid.body[i] = int(row[1])
            fluid.m[i] = float(row[4])
            fluid.V0[i] = float(row[5])
        fluid.x[:] = snap.fluid_x
        fluid.v[:] = snap.fluid_v
        fluid.rho[:] = snap.fluid_rho
        fluid.rho_hat[:] = snap.fluid_rho_hat
        fluid.p[:] = snap.fluid_p

        solid = SolidState.allocate(snap.n_solid)
        if snap.n_solid != len(static["S"]):
            raise RunDirectoryError("snapshot solid count does not match static data")
        for i, row in enumerate(static["S"]):
            solid.body[i] = int(row[1])
            mat = scene.materials[row[2]]
            solid.set_material(np.s_[i : i + 1], mat)
            solid.fixed[i] = bool(int(row[3]))
            solid.m[i] = float(row[4])
            solid.V0[i] = float(row[5])
            solid.x0[i] = [float(row[7]), float(row[8]), float(row[9])]
        solid.x[:] = snap.solid_x
        solid.v[:] = snap.solid_v
        solid.rho[:] = snap.solid_rho
        solid.S[:] = snap.solid_S
        solid.p[:] = snap.solid_p

        boundary = BoundaryState.allocate(len(static["B"]))
        for i, row in enumerate(static["B"]):
            boundary.body[i] = int(row[1])
            boundary.psi[i] = float(row[6])
            boundary.x[i] = [float(row[7]), float(row[8]), float(row[9])]

        state = SimulationState(fluid=fluid, solid=solid, boundary=boundary,
                                time=snap.time, step=snap.step)
        return state


class DirectorySink:
    """Writes the standard run directory layout during a run."""

    def __init__(self, root, binary: bool = False, absorbed_threshold: float = 0.5,
                 progress=None):
        self.rd = RunDirectory(root)
        self.binary = binary
        self.absorbed_threshold = absorbed_threshold
        self.progress = progress
        self._steps_fh = None
        self._metrics_fh = None

    def on_start(self, sim):
        from .metrics import METRICS_COLUMNS

        self.rd.create()
        self.rd.write_config(sim.scene)
        self.rd.write_static(sim.state, sim.scene)
        self._steps_fh = open(self.rd.steps_path, "w")
        self._steps_fh.write(",".join(STEPS_COLUMNS) + "\n")
        self._metrics_fh = open(self.rd.metrics_path, "w")
        self._metrics_fh.write(",".join(METRICS_COLUMNS) + "\n")
        self._last_report = None

    def on_step(self, sim, report):
        r = report
        row = [
            r.step, "%.9g" % r.time, r.pressure.iterations,
            "%.6e" % r.pressure.avg_error, "%.6e" % r.pressure.max_error,
            int(r.pressure.converged), r.coupled.iterations,
            "%.6e" % r.coupled.residual, "%.6e" % r.force_balance,
            "%.9g" % r.momentum[0], "%.9g" % r.momentum[1], "%.9g" % r.momentum[2],
            "%.6g" % r.max_velocity, int(r.cfl_exceeded), "%.4f" % r.wall_clock,
        ]
        self._steps_fh.write(",".join(str(v) for v in row) + "\n")
        self._last_report = report

    def on_sample(self, sim, report):
        from .metrics import compute_metrics_row, row_to_csv

        state = sim.state
        ext = "bin" if self.binary else "csv"
        path = self.rd.snapshot_dir / f"snap_{state.step:06d}.{ext}"
        write_snapshot(snapshot_from_state(state), path, binary=self.binary)
        row = compute_metrics_row(
            state, sim.params.particle_spacing,
            pressure_iterations=report.pressure.iterations if report else 0,
            cg_iterations=report.coupled.iterations if report else 0,
            threshold=self.absorbed_threshold,
        )
        self._metrics_fh.write(row_to_csv(row) + "\n")
        self._metrics_fh.flush()
        self._steps_fh.flush()
        if self.progress:
            self.progress(
                f"t={state.time:.3f}s step={state.step} "
                f"absorbed={row.absorbed_volume:.3e} m^3 "
                f"front={row.front_height if row.front_height == row.front_height else float('nan'):.4f} m"
            )

    def on_finish(self, sim, result):
        import json as _json

        for fh in (self._steps_fh, self._metrics_fh):
            if fh:
                fh.close()
        self.rd.summary_path.write_text(_json.dumps({
            "steps": len(result.reports),
            "samples": result.samples,
            "final_time": result.final_time,
            "aborted": result.aborted,
            "abort_reason": result.abort_reason,
        }, indent=2))
