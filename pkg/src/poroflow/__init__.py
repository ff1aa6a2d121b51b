"""poroflow: implicit incompressible SPH for porous solid-fluid coupling."""

import numba as _numba

# TBB on this image is too old for numba; pick the OpenMP layer up front so
# numba does not warn while probing.
_numba.config.THREADING_LAYER = "omp"

from .kernels import SUPPORT_OVER_SPACING, KernelSpec, kernel_gradient, kernel_value
from .materials import FluidMaterial, MaterialError, PorousSolidMaterial
from .neighbors import NeighborLists, build_neighbor_lists
from .scene import (
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
from .state import BoundaryState, FluidState, SimulationState, SolidState

__version__ = "0.1.0"

__all__ = [
    "SUPPORT_OVER_SPACING",
    "KernelSpec",
    "kernel_gradient",
    "kernel_value",
    "FluidMaterial",
    "MaterialError",
    "PorousSolidMaterial",
    "NeighborLists",
    "build_neighbor_lists",
    "Body",
    "BoundaryBox",
    "Scene",
    "SceneError",
    "SimParams",
    "load_scene",
    "sample_box",
    "sample_sphere",
    "scene_from_dict",
    "BoundaryState",
    "FluidState",
    "SimulationState",
    "SolidState",
    "__version__",
]
