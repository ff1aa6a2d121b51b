"""Snapshot serialization: delimited text and flat little-endian binary.

Text files are human-auditable CSV with full round-trip precision; binary
files are a 64-byte header followed by flat float64 arrays and round-trip
bit exactly. Both carry the same schema version and agree to the last
digit of a 17-significant-digit decimal rendering.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
_MAGIC = b"PFSNAP01"
_HEADER = struct.Struct("<8sIiqdII")  # magic, version, pad, step, time, nf, ns
_HEADER_SIZE = 64

FLUID_FIELDS = ("x", "v", "rho", "rho_hat", "p")
SOLID_FIELDS = ("x", "v", "rho", "S", "p")


class SnapshotError(ValueError):
    pass


@dataclass
class Snapshot:
    step: int
    time: float
    fluid_x: np.ndarray
    fluid_v: np.ndarray
    fluid_rho: np.ndarray
    fluid_rho_hat: np.ndarray
    fluid_p: np.ndarray
    solid_x: np.ndarray
    solid_v: np.ndarray
    solid_rho: np.ndarray
    solid_S: np.ndarray
    solid_p: np.ndarray

    @property
    def n_fluid(self) -> int:
        return len(self.fluid_rho)

    @property
    def n_solid(self) -> int:
        return len(self.solid_rho)


def snapshot_from_state(state) -> Snapshot:
    f, s = state.fluid, state.solid
    return Snapshot(
        step=state.step, time=state.time,
        fluid_x=f.x.copy(), fluid_v=f.v.copy(), fluid_rho=f.rho.copy(),
        fluid_rho_hat=f.rho_hat.copy(), fluid_p=f.p.copy(),
        solid_x=s.x.copy(), solid_v=s.v.copy(), solid_rho=s.rho.copy(),
        solid_S=s.S.copy(), solid_p=s.p.copy(),
    )


def write_snapshot(snap: Snapshot, path, binary: bool = False):
    path = Path(path)
    try:
        if binary:
            _write_binary(snap, path)
        else:
            _write_text(snap, path)
    except OSError as e:
        raise OSError(f"failed to write snapshot {path}: {e}") from e


def read_snapshot(path) -> Snapshot:
    path = Path(path)
    if not path.exists():
        raise SnapshotError(f"snapshot not found: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == _MAGIC:
        return _read_binary(path)
    return _read_text(path)


def _write_text(snap: Snapshot, path: Path):
    lines = [
        f"# poroflow snapshot v{SCHEMA_VERSION}",
        f"# step={snap.step} time={snap.time!r} n_fluid={snap.n_fluid} n_solid={snap.n_solid}",
        "phase,index,x,y,z,vx,vy,vz,rho,rho_hat,S,p",
    ]
    g = "%.17g"
    for i in range(snap.n_fluid):
        x, v = snap.fluid_x[i], snap.fluid_v[i]
        lines.append(
            "F,%d,%s,%s,%s,%s,%s,%s,%s,%s,,%s"
            % (i, g % x[0], g % x[1], g % x[2], g % v[0], g % v[1], g % v[2],
               g % snap.fluid_rho[i], g % snap.fluid_rho_hat[i], g % snap.fluid_p[i])
        )
    for i in range(snap.n_solid):
        x, v = snap.solid_x[i], snap.solid_v[i]
        lines.append(
            "S,%d,%s,%s,%s,%s,%s,%s,%s,,%s,%s"
            % (i, g % x[0], g % x[1], g % x[2], g % v[0], g % v[1], g % v[2],
               g % snap.solid_rho[i], g % snap.solid_S[i], g % snap.solid_p[i])
        )
    path.write_text("\n".join(lines) + "\n")


def _read_text(path: Path) -> Snapshot:
    step = 0
    time = 0.0
    nf = ns = None
    fluid_rows = []
    solid_rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if token.startswith("step="):
                        step = int(token[5:])
                    elif token.startswith("time="):
                        time = float(token[5:])
                    elif token.startswith("n_fluid="):
                        nf = int(token[8:])
                    elif token.startswith("n_solid="):
                        ns = int(token[8:])
                continue
            if line.startswith("phase"):
                continue
            parts = line.split(",")
            vals = [float(p) if p else np.nan for p in parts[2:]]
            if parts[0] == "F":
                fluid_rows.append(vals)
            elif parts[0] == "S":
                solid_rows.append(vals)
            else:
                raise SnapshotError(f"{path}: unknown phase tag {parts[0]!r}")
    fl = np.array(fluid_rows, dtype=np.float64).reshape(-1, 10)
    so = np.array(solid_rows, dtype=np.float64).reshape(-1, 10)
    if nf is not None and nf != len(fl):
        raise SnapshotError(f"{path}: header claims {nf} fluid rows, found {len(fl)}")
    if ns is not None and ns != len(so):
        raise SnapshotError(f"{path}: header claims {ns} solid rows, found {len(so)}")
    return Snapshot(
        step=step, time=time,
        fluid_x=fl[:, 0:3], fluid_v=fl[:, 3:6], fluid_rho=fl[:, 6],
        fluid_rho_hat=fl[:, 7], fluid_p=fl[:, 9],
        solid_x=so[:, 0:3], solid_v=so[:, 3:6], solid_rho=so[:, 6],
        solid_S=so[:, 8], solid_p=so[:, 9],
    )


def _write_binary(snap: Snapshot, path: Path):
    header = _HEADER.pack(
        _MAGIC, SCHEMA_VERSION, 0, snap.step, snap.time, snap.n_fluid, snap.n_solid
    )
    header += b"\x00" * (_HEADER_SIZE - len(header))
    arrays = [
        snap.fluid_x, snap.fluid_v, snap.fluid_rho, snap.fluid_rho_hat, snap.fluid_p,
        snap.solid_x, snap.solid_v, snap.solid_rho, snap.solid_S, snap.solid_p,
    ]
    with open(path, "wb") as fh:
        fh.write(header)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_binary(path: Path) -> Snapshot:
    raw = path.read_bytes()
    if len(raw) < _HEADER_SIZE:
        raise SnapshotError(f"{path}: truncated header")
    magic, version, _, step, time, nf, ns = _HEADER.unpack(raw[: _HEADER.size])
    if magic != _MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != SCHEMA_VERSION:
        raise SnapshotError(
            f"{path}: schema version {version} unsupported (expected {SCHEMA_VERSION})"
        )
    body = np.frombuffer(raw[_HEADER_SIZE:], dtype="<f8")
    expected = nf * 9 + ns * 9  # x(3) v(3) rho {rho_hat|S} p per particle
    if len(body) != expected:
        raise SnapshotError(f"{path}: expected {expected} values, found {len(body)}")
    at = 0

    def take(count, shape=None):
        nonlocal at
        arr = body[at : at + count].copy()
        at += count
        return arr.reshape(shape) if shape else arr

    return Snapshot(
        step=step, time=time,
        fluid_x=take(nf * 3, (nf, 3)), fluid_v=take(nf * 3, (nf, 3)),
        fluid_rho=take(nf), fluid_rho_hat=take(nf), fluid_p=take(nf),
        solid_x=take(ns * 3, (ns, 3)), solid_v=take(ns * 3, (ns, 3)),
        solid_rho=take(ns), solid_S=take(ns), solid_p=take(ns),
    )
