"""Time-step orchestration and run lifecycle.

Each step executes, in order: boundary motion, neighbor build + pair cache,
densities and saturation, rotation extraction and the deferred buoyancy
right-hand side, the strongly coupled implicit velocity solve (warm
started), density prediction, the pressure solve, and a symplectic Euler
update. Solver aborts annotate the report and halt the run.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .density import build_pair_data, compute_densities, compute_saturation
from .elasticity import deformation_gradients, extract_rotations, precompute_elastic
from .forces import CoupledSolveError, CoupledStats, ImplicitSystem, solve_velocities
from .neighbors import NeighborSearchError, build_neighbor_lists
from .pressure import (
    PressureSolveDiverged,
    PressureStats,
    buoyancy_rhs,
    predict_densities,
    solve_pressure,
)
from .scene import Scene

log = logging.getLogger(__name__)


@dataclass
class StepReport:
    step: int
    time: float  # sim time after the step, s
    pressure: PressureStats
    coupled: CoupledStats
    force_balance: float  # relative momentum residual of internal forces
    momentum: np.ndarray  # total linear momentum after the step
    max_velocity: float
    cfl_exceeded: bool
    wall_clock: float  # s


@dataclass
class RunResult:
    state: object
    reports: list = field(default_factory=list)
    samples: int = 0
    aborted: bool = False
    abort_reason: str = ""

    @property
    def final_time(self) -> float:
        return self.state.time


class Simulator:
    def __init__(self, scene: Scene, state=None):
        self.scene = scene
        self.params = scene.params
        self.state = scene.build() if state is None else state
        self.motions = scene.boundary_motions()
        solid = self.state.solid
        self.elastic = None
        if solid.n and not solid.fixed.all():
            self.elastic = precompute_elastic(solid, self.params.support_radius)
            if self.elastic.pinv_fallbacks:
                log.info(
                    "elastic precompute: %d particles with deficient moment "
                    "matrices use a pseudo-inverse", self.elastic.pinv_fallbacks,
                )

    def _move_boundaries(self, dt: float):
        b = self.state.boundary
        if not self.motions or b.n == 0:
            return
        b.v[:] = 0.0
        t = self.state.time
        for m in self.motions:
            if m.start <= t < m.stop:
                sel = b.body == m.body
                b.x[sel] += dt * m.velocity
                b.v[sel] = m.velocity

    def step(self) -> StepReport:
        t0 = _time.perf_counter()
        state = self.state
        params = self.params
        dt = params.time_step
        f, s = state.fluid, state.solid

        self._move_boundaries(dt)
        nl = build_neighbor_lists(f.x, s.x, state.boundary.x, params.support_radius)
        pd = build_pair_data(state, nl)

        compute_densities(state, nl, pd)
        compute_saturation(state, nl, pd)
        state.densities_stamp = state.step

        if self.elastic is not None:
            F = deformation_gradients(self.elastic, s)
            s.R[:] = extract_rotations(F)
        s.b_buo[:] = buoyancy_rhs(state, nl, pd)  # pressures of the last solve

        # forces must consume this step's densities
        assert state.densities_stamp == state.step
        system = ImplicitSystem(
            state, nl, pd, self.elastic, params.gravity, dt,
            explicit_drag=params.explicit_drag,
        )
        guess_f = 2.0 * f.v - state.v_prev_fluid
        guess_s = 2.0 * s.v - state.v_prev_solid
        v_f, v_s, coupled = solve_velocities(
            system, guess_f, guess_s,
            tolerance=params.coupled_tolerance,
            max_iterations=params.coupled_max_iterations,
        )
        balance, balance_scale = system.internal_force_balance(v_f, v_s)
        force_balance = balance / balance_scale if balance_scale > 0 else 0.0

        rho_star_f, rho_star_s = predict_densities(state, nl, pd, v_f, v_s, dt)
        a_f, a_s, pstats = solve_pressure(
            state, nl, pd, rho_star_f, rho_star_s, dt,
            omega=params.pressure_relaxation,
            tolerance=params.pressure_tolerance,
            max_iterations=params.pressure_max_iterations,
        )

        state.v_prev_fluid = f.v.copy()
        state.v_prev_solid = s.v.copy()
        f.v[:] = v_f + dt * a_f
        s.v[:] = v_s + dt * a_s
        s.v[s.fixed] = 0.0
        f.x += dt * f.v
        s.x += dt * s.v

        state.step += 1
        state.time += dt

        vmax = 0.0
        if f.n:
            vmax = float(np.sqrt((f.v**2).sum(axis=1).max()))
        if s.n:
            vmax = max(vmax, float(np.sqrt((s.v**2).sum(axis=1).max())))
        cfl = vmax * dt > params.cfl_warn_factor * params.support_radius
        if cfl:
            log.warning(
                "CFL monitor: max |v| dt = %.3e exceeds %.2f h at step %d",
                vmax * dt, params.cfl_warn_factor, state.step,
            )
        momentum = (f.m[:, None] * f.v).sum(axis=0) + (s.m[:, None] * s.v).sum(axis=0)

        return StepReport(
            step=state.step,
            time=state.time,
            pressure=pstats,
            coupled=coupled,
            force_balance=force_balance,
            momentum=momentum,
            max_velocity=vmax,
            cfl_exceeded=bool(cfl),
            wall_clock=_time.perf_counter() - t0,
        )

    def run(self, sinks=()) -> RunResult:
        params = self.params
        state = self.state
        result = RunResult(state=state)
        n_steps = int(np.floor(params.end_time / params.time_step + 1e-9))

        for sink in sinks:
            if hasattr(sink, "on_start"):
                sink.on_start(self)

        def sample():
            for sink in sinks:
                if hasattr(sink, "on_sample"):
                    sink.on_sample(self, result.reports[-1] if result.reports else None)
            result.samples += 1

        try:
            sample()  # initial snapshot at t = 0
            next_sample = params.output_interval
            for _ in range(n_steps):
                report = self.step()
                result.reports.append(report)
                for sink in sinks:
                    if hasattr(sink, "on_step"):
                        sink.on_step(self, report)
                while state.time + 1e-9 >= next_sample:
                    sample()
                    next_sample += params.output_interval
        except (PressureSolveDiverged, CoupledSolveError, NeighborSearchError) as e:
            result.aborted = True
            result.abort_reason = f"{type(e).__name__}: {e}"
            log.error("run aborted at step %d: %s", state.step, result.abort_reason)
        except OSError as e:
            result.aborted = True
            result.abort_reason = f"output sink failure: {e}"
            log.error("run aborted (partial outputs preserved): %s", result.abort_reason)

        for sink in sinks:
            if hasattr(sink, "on_finish"):
                sink.on_finish(self, result)
        return result
