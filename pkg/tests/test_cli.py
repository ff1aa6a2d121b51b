import json

import numpy as np
import pytest

from poroflow.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION, main
from poroflow.metrics import read_metrics_csv, recompute_metrics
from poroflow.rundir import RunDirectory

DX = 0.05


@pytest.fixture(scope="module")
def tank_run(tmp_path_factory):
    """Small hydrostatic tank run through the CLI (shared by several tests)."""
    root = tmp_path_factory.mktemp("tank")
    scene = {
        "materials": [
            {"type": "fluid", "name": "water", "rest_density": 1000.0,
             "viscosity": 0.02}
        ],
        "bodies": [
            {"sampler": "box", "material": "water", "phase": "fluid",
             "min": [0.5 * DX, 0.5 * DX, 0.5 * DX],
             "max": [8 * DX - 0.5 * DX, 8 * DX, 8 * DX - 0.5 * DX]}
        ],
        "boundaries": [
            {"kind": "walls", "min": [0, 0, 0], "max": [8 * DX, 16 * DX, 8 * DX],
             "open_top": True}
        ],
        "sim": {
            "particle_spacing": DX, "time_step": 1e-3, "end_time": 0.35,
            "output_interval": 0.05,
        },
    }
    scene_path = root / "tank.json"
    scene_path.write_text(json.dumps(scene))
    out = root / "out"
    code = main(["--quiet", "run", str(scene_path), "--out", str(out)])
    assert code == EXIT_OK
    return out


def test_run_produces_directory_layout(tank_run):
    rd = RunDirectory(tank_run)
    assert rd.config_path.exists()
    assert rd.static_path.exists()
    assert rd.steps_path.exists()
    assert rd.metrics_path.exists()
    assert rd.summary_path.exists()
    assert (tank_run / "metrics.png").exists()
    snaps = rd.snapshot_paths()
    assert len(snaps) == 8  # t=0 plus 7 scheduled samples
    summary = json.loads(rd.summary_path.read_text())
    assert summary["steps"] == 350
    assert not summary["aborted"]


def test_steps_stream_has_row_per_step(tank_run):
    lines = (tank_run / "steps.csv").read_text().strip().splitlines()
    assert len(lines) == 351  # header + one per step
    header = lines[0].split(",")
    assert "pressure_iterations" in header
    assert "cg_residual" in header


def test_offline_metrics_match_in_process(tank_run):
    rows_live = read_metrics_csv(RunDirectory(tank_run).metrics_path)
    rows_off = recompute_metrics(tank_run)
    assert len(rows_live) == len(rows_off)
    for a, b in zip(rows_live, rows_off):
        assert a.time == pytest.approx(b.time, rel=1e-8)
        assert a.absorbed_volume == pytest.approx(b.absorbed_volume, rel=1e-6, abs=1e-12)
        assert a.max_density_error == pytest.approx(b.max_density_error, rel=1e-4, abs=1e-9)
        np.testing.assert_allclose(a.momentum, b.momentum, rtol=1e-6, atol=1e-9)
        assert a.pressure_iterations == b.pressure_iterations
        assert a.cg_iterations == b.cg_iterations


def test_metrics_subcommand(tank_run):
    code = main(["--quiet", "metrics", str(tank_run)])
    assert code == EXIT_OK
    out = tank_run / "metrics_recomputed.csv"
    assert out.exists()
    rows = read_metrics_csv(out)
    assert len(rows) == 8


def test_validate_hydrostatic_passes(tank_run, capsys):
    code = main(["--quiet", "validate", str(tank_run), "--oracle", "hydrostatic"])
    out = capsys.readouterr().out
    assert "[PASS] oracle=hydrostatic" in out
    assert code == EXIT_OK
    assert (tank_run / "validate_hydrostatic.png").exists()


def test_validate_failure_exit_code(tank_run, tmp_path, capsys):
    # zero out the pressures in a copied run to force a hydrostatic failure
    import shutil

    broken = tmp_path / "broken"
    shutil.copytree(tank_run, broken)
    rd = RunDirectory(broken)
    for p in rd.snapshot_paths():
        text = p.read_text().splitlines()
        rows = []
        for line in text:
            if line.startswith(("#", "phase")):
                rows.append(line)
            else:
                parts = line.split(",")
                parts[-1] = "0"
                rows.append(",".join(parts))
        p.write_text("\n".join(rows) + "\n")
    code = main(["--quiet", "validate", str(broken), "--oracle", "hydrostatic",
                 "--no-figures"])
    assert code == EXIT_VALIDATION
    assert "[FAIL]" in capsys.readouterr().out


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["run", "--bogus-flag"]) == EXIT_USAGE
    assert main(["validate", "somewhere", "--oracle", "nonsense"]) == EXIT_USAGE


def test_run_missing_scene_is_usage_error(tmp_path):
    assert main(["--quiet", "run", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_metrics_on_non_run_dir_is_runtime_error(tmp_path):
    assert main(["--quiet", "metrics", str(tmp_path)]) == EXIT_RUNTIME


def test_binary_snapshot_run_round_trip(tmp_path):
    scene = {
        "materials": [
            {"type": "fluid", "name": "w", "rest_density": 1000.0}
        ],
        "bodies": [
            {"sampler": "box", "material": "w", "phase": "fluid",
             "min": [0, 0, 0], "max": [2 * DX, 2 * DX, 2 * DX]}
        ],
        "sim": {"particle_spacing": DX, "time_step": 1e-3, "end_time": 0.004,
                "output_interval": 0.002},
    }
    spath = tmp_path / "s.json"
    spath.write_text(json.dumps(scene))

    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    for out in (out1, out2):
        assert main(["--quiet", "run", str(spath), "--out", str(out),
                     "--binary", "--no-figures"]) == EXIT_OK
    s1 = sorted((out1 / "snapshots").iterdir())
    s2 = sorted((out2 / "snapshots").iterdir())
    assert [p.name for p in s1] == [p.name for p in s2]
    for a, b in zip(s1, s2):
        assert a.read_bytes() == b.read_bytes()  # bitwise deterministic
