"""Command-line entry point: run scenes, extract metrics, validate runs.

Exit codes: 0 success, 1 usage error, 2 runtime abort, 3 validation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_VALIDATION = 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="poroflow",
        description="Implicit incompressible SPH for porous solid-fluid coupling",
    )
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = p.add_subparsers(dest="command")

    run = sub.add_parser("run", help="execute a scene file")
    run.add_argument("scene", help="scene JSON file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--binary", action="store_true",
                     help="write binary snapshots instead of text")
    run.add_argument("--threads", type=int, default=None,
                     help="worker thread count (output is bitwise identical "
                          "for any value)")
    run.add_argument("--absorbed-threshold", type=float, default=0.5,
                     help="solid volume indicator above which a fluid particle "
                          "counts as absorbed (default 0.5)")
    run.add_argument("--no-figures", action="store_true",
                     help="skip rendering the metrics figure")

    met = sub.add_parser("metrics", help="recompute metrics from a run directory")
    met.add_argument("dir", help="run directory produced by `poroflow run`")
    met.add_argument("--absorbed-threshold", type=float, default=0.5)
    met.add_argument("--no-figures", action="store_true")

    val = sub.add_parser("validate", help="compare a run against an analytic oracle")
    val.add_argument("dirs", nargs="+",
                     help="run directory (porosity-linearity takes several)")
    val.add_argument("--oracle", required=True,
                     choices=["casagrande", "buoyancy", "porosity-linearity",
                              "hydrostatic"])
    val.add_argument("--no-figures", action="store_true")
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    if args.command is None:
        parser.print_usage()
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "validate":
            return _cmd_validate(args)
    except BrokenPipeError:
        return EXIT_RUNTIME
    except Exception as e:  # surfaced with type for diagnosis
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


def _set_threads(n):
    if n is not None:
        import numba

        numba.set_num_threads(max(1, n))


def _cmd_run(args) -> int:
    from .metrics import read_metrics_csv
    from .rundir import DirectorySink, RunDirectory
    from .scene import SceneError, load_scene
    from .simulator import Simulator

    _set_threads(args.threads)
    try:
        scene = load_scene(args.scene)
    except SceneError as e:
        print(f"scene error: {e}", file=sys.stderr)
        return EXIT_USAGE

    progress = None if args.quiet else lambda msg: print(msg, flush=True)
    sink = DirectorySink(args.out, binary=args.binary,
                         absorbed_threshold=args.absorbed_threshold,
                         progress=progress)
    sim = Simulator(scene)
    if not args.quiet:
        print(f"particles: {sim.state.fluid.n} fluid, {sim.state.solid.n} solid, "
              f"{sim.state.boundary.n} boundary")
    result = sim.run(sinks=[sink])

    if not args.no_figures:
        _render_metrics_figure(RunDirectory(args.out))
    if result.aborted:
        print(f"run aborted: {result.abort_reason}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        print(f"finished at t={result.final_time:.3f}s "
              f"({len(result.reports)} steps, {result.samples} snapshots)")
    return EXIT_OK


def _render_metrics_figure(rd, rows=None):
    from .metrics import read_metrics_csv
    from .plots import metrics_figure

    if rows is None:
        if not rd.metrics_path.exists():
            return
        rows = read_metrics_csv(rd.metrics_path)
    if rows:
        metrics_figure(rows, rd.root / "metrics.png")


def _cmd_metrics(args) -> int:
    from .metrics import METRICS_COLUMNS, recompute_metrics, row_to_csv
    from .rundir import RunDirectory

    rd = RunDirectory(args.dir)
    rows = recompute_metrics(args.dir, threshold=args.absorbed_threshold)
    out = rd.root / "metrics_recomputed.csv"
    with open(out, "w") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for row in rows:
            fh.write(row_to_csv(row) + "\n")
    print(f"wrote {out} ({len(rows)} rows)")
    if not args.no_figures:
        _render_metrics_figure(rd, rows)
        print(f"wrote {rd.root / 'metrics.png'}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .validate import run_validation

    report = run_validation(args.oracle, args.dirs)
    print(report.text())
    if not args.no_figures:
        try:
            path = _render_validation_figure(args.oracle, args.dirs, report)
            if path:
                print(f"wrote {path}")
        except Exception as e:
            print(f"figure rendering skipped: {type(e).__name__}: {e}",
                  file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _render_validation_figure(oracle, dirs, report):
    from .rundir import RunDirectory

    rd = RunDirectory(dirs[0])
    out = rd.root / f"validate_{oracle.replace('-', '_')}.png"

    if oracle == "hydrostatic":
        from .plots import hydrostatic_figure

        scene = rd.load_scene()
        state = rd.state_from_snapshot(rd.read_snapshot(-1))
        f = state.fluid
        dx = scene.params.particle_spacing
        surf = f.x[:, 1].max() + 0.5 * dx
        depth = surf - f.x[:, 1]
        g = abs(scene.params.gravity[1])
        return hydrostatic_figure(depth, f.p, f.rho0 * g, out)

    if oracle == "buoyancy":
        from .plots import buoyancy_figure
        from .snapshots import read_snapshot

        scene = rd.load_scene()
        static = rd.read_static()
        body_of = np.array([int(row[1]) for row in static["S"]], dtype=np.int64)
        times = []
        heights = {int(b): [] for b in np.unique(body_of)}
        for path in rd.snapshot_paths():
            snap = read_snapshot(path)
            times.append(snap.time)
            for b in heights:
                heights[b].append(float(snap.solid_x[body_of == b, 1].min()))
        from .validate import _floor_height

        return buoyancy_figure(times, heights, _floor_height(scene), out)

    if oracle == "porosity-linearity":
        from .plots import porosity_figure

        entries = report.details.get("entries", [])
        if not entries:
            return None
        return porosity_figure([e[1] for e in entries], [e[2] for e in entries],
                               Path(dirs[0]) / "validate_porosity_linearity.png")

    if oracle == "casagrande":
        from .casagrande import casagrande_surface
        from .plots import casagrande_figure
        from .validate import dam_from_meta

        scene = rd.load_scene()
        state = rd.state_from_snapshot(rd.read_snapshot(-1))
        dam = dam_from_meta(scene.meta)
        head = report.details.get("measured_head", dam.height)
        solution = casagrande_surface(dam, head)
        return casagrande_figure(
            state.fluid.x[:, :2], state.solid.x[:, :2], solution,
            np.zeros(0), np.zeros(0), out,
        )
    return None


if __name__ == "__main__":
    sys.exit(main())
