"""Uniform-grid neighbor search over all particle phases.

Particles of the three phases (fluid, solid, boundary) live in one global
index space: fluid in [0, n_fluid), solid in [n_fluid, n_fluid + n_solid),
boundary after that. The search produces one CSR adjacency over the global
index space per particle, sorted by neighbor index, with per-row markers
separating the fluid / solid / boundary segments. Strict support: j is a
neighbor of i iff |x_i - x_j| < h, self excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

_KEY_BITS = 21
_KEY_OFF = 1 << (_KEY_BITS - 1)


class NeighborSearchError(ValueError):
    pass


@dataclass
class NeighborLists:
    """CSR neighbor adjacency with phase segment markers.

    For particle i the neighbors are indices[start[i]:start[i+1]], sorted.
    Fluid neighbors occupy [start[i], fluid_end[i]), solid neighbors
    [fluid_end[i], solid_end[i]), boundary the rest of the row.
    """

    start: np.ndarray
    indices: np.ndarray
    fluid_end: np.ndarray
    solid_end: np.ndarray
    n_fluid: int
    n_solid: int
    n_boundary: int
    h: float

    @property
    def n_total(self) -> int:
        return self.n_fluid + self.n_solid + self.n_boundary

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.start[i] : self.start[i + 1]]

    def fluid_neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.start[i] : self.fluid_end[i]]

    def solid_neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.fluid_end[i] : self.solid_end[i]]

    def boundary_neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.solid_end[i] : self.start[i + 1]]


@njit(cache=True, inline="always")
def _cell_key(cx, cy, cz):
    return (
        ((cx + _KEY_OFF) << (2 * _KEY_BITS))
        | ((cy + _KEY_OFF) << _KEY_BITS)
        | (cz + _KEY_OFF)
    )


@njit(cache=True, parallel=True)
def _count_and_fill(x, cells, sorted_keys, order, h, counts, start, indices, fill):
    n = x.shape[0]
    h2 = h * h
    ns = sorted_keys.shape[0]
    for i in prange(n):
        cx = cells[i, 0]
        cy = cells[i, 1]
        cz = cells[i, 2]
        m = 0
        base = start[i] if fill else 0
        for ox in range(-1, 2):
            for oy in range(-1, 2):
                for oz in range(-1, 2):
                    key = _cell_key(cx + ox, cy + oy, cz + oz)
                    # lower bound of the key run in the sorted key array
                    lo = 0
                    hi = ns
                    while lo < hi:
                        mid = (lo + hi) >> 1
                        if sorted_keys[mid] < key:
                            lo = mid + 1
                        else:
                            hi = mid
                    k = lo
                    while k < ns and sorted_keys[k] == key:
                        j = order[k]
                        k += 1
                        if j == i:
                            continue
                        dx = x[i, 0] - x[j, 0]
                        dy = x[i, 1] - x[j, 1]
                        dz = x[i, 2] - x[j, 2]
                        if dx * dx + dy * dy + dz * dz < h2:
                            if fill:
                                indices[base + m] = j
                            m += 1
        if fill:
            # insertion sort the row for deterministic, index-sorted output
            for a in range(base + 1, base + m):
                val = indices[a]
                b = a - 1
                while b >= base and indices[b] > val:
                    indices[b + 1] = indices[b]
                    b -= 1
                indices[b + 1] = val
        else:
            counts[i] = m


@njit(cache=True, parallel=True)
def _phase_splits(start, indices, n_fluid, n_fluid_solid, fluid_end, solid_end):
    n = start.shape[0] - 1
    for i in prange(n):
        lo = start[i]
        hi = start[i + 1]
        fe = lo
        while fe < hi and indices[fe] < n_fluid:
            fe += 1
        se = fe
        while se < hi and indices[se] < n_fluid_solid:
            se += 1
        fluid_end[i] = fe
        solid_end[i] = se


def build_neighbor_lists(
    x_fluid: np.ndarray,
    x_solid: np.ndarray,
    x_boundary: np.ndarray,
    h: float,
) -> NeighborLists:
    """Build per-phase neighbor lists for every particle within support h."""
    if not h > 0.0:
        raise NeighborSearchError(f"support radius must be positive, got {h}")
    phases = (("fluid", x_fluid), ("solid", x_solid), ("boundary", x_boundary))
    for name, arr in phases:
        if arr.size and not np.isfinite(arr).all():
            bad = int(np.where(~np.isfinite(arr).all(axis=1))[0][0])
            raise NeighborSearchError(
                f"{name} particle {bad} has non-finite position {arr[bad]}"
            )

    x = np.ascontiguousarray(
        np.concatenate([a.reshape(-1, 3) for _, a in phases], axis=0), dtype=np.float64
    )
    n = x.shape[0]
    n_fluid = len(x_fluid)
    n_solid = len(x_solid)
    n_boundary = len(x_boundary)

    if n == 0:
        z = np.zeros(0, dtype=np.int64)
        return NeighborLists(
            np.zeros(1, dtype=np.int64), z, z.copy(), z.copy(),
            n_fluid, n_solid, n_boundary, h,
        )

    cells = np.floor(x / h).astype(np.int64)
    if np.abs(cells).max(initial=0) >= _KEY_OFF - 1:
        raise NeighborSearchError(
            "particle coordinates exceed the supported grid extent "
            f"(|cell index| must stay below {_KEY_OFF - 1})"
        )
    keys = (
        ((cells[:, 0] + _KEY_OFF) << (2 * _KEY_BITS))
        | ((cells[:, 1] + _KEY_OFF) << _KEY_BITS)
        | (cells[:, 2] + _KEY_OFF)
    )
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]

    counts = np.zeros(n, dtype=np.int64)
    start = np.zeros(n + 1, dtype=np.int64)
    empty = np.zeros(0, dtype=np.int64)
    _count_and_fill(x, cells, sorted_keys, order, h, counts, start, empty, False)
    np.cumsum(counts, out=start[1:])
    indices = np.empty(int(start[-1]), dtype=np.int64)
    _count_and_fill(x, cells, sorted_keys, order, h, counts, start, indices, True)

    fluid_end = np.empty(n, dtype=np.int64)
    solid_end = np.empty(n, dtype=np.int64)
    _phase_splits(start, indices, n_fluid, n_fluid + n_solid, fluid_end, solid_end)
    return NeighborLists(start, indices, fluid_end, solid_end, n_fluid, n_solid, n_boundary, h)
