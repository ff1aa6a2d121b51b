"""Figure rendering for the report paths (metrics and validation)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def metrics_figure(rows, path) -> Path:
    """Four-panel overview of a run's metrics series."""
    path = Path(path)
    t = np.array([r.time for r in rows])
    fig, axes = plt.subplots(2, 2, figsize=(9, 6.5), constrained_layout=True)

    ax = axes[0, 0]
    ax.plot(t, [r.absorbed_volume for r in rows], "C0.-")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("absorbed fluid volume [m$^3$]")

    ax = axes[0, 1]
    front = np.array([r.front_height for r in rows])
    if np.isfinite(front).any():
        ax.plot(t, front, "C1.-")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("saturation front height [m]")

    ax = axes[1, 0]
    ax.semilogy(t, np.maximum([r.avg_density_error for r in rows], 1e-12),
                "C2.-", label="avg")
    ax.semilogy(t, np.maximum([r.max_density_error for r in rows], 1e-12),
                "C3.-", label="max")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("density error [-]")
    ax.legend()

    ax = axes[1, 1]
    mom = np.array([r.momentum for r in rows])
    for k, lbl in enumerate("xyz"):
        ax.plot(t, mom[:, k], label=f"p_{lbl}")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("total momentum [kg m/s]")
    ax.legend()

    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def hydrostatic_figure(depth, pressure, rho_g, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.5, 4.2), constrained_layout=True)
    ax.plot(pressure, -depth, "C0.", ms=2, label="particles")
    d = np.linspace(0, depth.max(), 50)
    ax.plot(rho_g * d, -d, "k-", lw=1.2, label=r"$\rho^0 g\, y$")
    ax.set_xlabel("pressure [Pa]")
    ax.set_ylabel("depth below surface [m]")
    ax.legend()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def buoyancy_figure(times, heights_by_body, floor, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.5, 4.2), constrained_layout=True)
    for body, ys in heights_by_body.items():
        ax.plot(times, ys, label=f"body {body}")
    ax.axhline(floor, color="k", lw=0.8, ls="--", label="floor")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("body minimum height [m]")
    ax.legend()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def porosity_figure(phis, volumes, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.0, 4.0), constrained_layout=True)
    ax.plot(phis, volumes, "C0o", ms=7, label="runs")
    phis = np.asarray(phis, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    if len(phis) >= 2:
        k = (volumes / phis).mean()
        xs = np.linspace(0, phis.max() * 1.1, 20)
        ax.plot(xs, k * xs, "k--", lw=1.0, label="linear in porosity")
    ax.set_xlabel(r"porosity $\phi$")
    ax.set_ylabel("absorbed volume [m$^3$]")
    ax.set_xlim(left=0)
    ax.set_ylim(bottom=0)
    ax.legend()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def casagrande_figure(fluid_xy, solid_xy, solution, measured_x, measured_y, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7.5, 4.0), constrained_layout=True)
    if len(solid_xy):
        ax.plot(solid_xy[:, 0], solid_xy[:, 1], ".", color="0.7", ms=2, label="solid")
    if len(fluid_xy):
        ax.plot(fluid_xy[:, 0], fluid_xy[:, 1], ".", color="C0", ms=2, label="fluid")
    xs, ys = solution.sample(300)
    ax.plot(xs, ys, "r-", lw=1.6, label="base parabola")
    if len(measured_x):
        ax.plot(measured_x, measured_y, "k.-", lw=1.0, ms=4, label="measured surface")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
