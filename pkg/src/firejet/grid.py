"""Voxel occupancy grid with exact ray traversal.

The grid is the single world model used for funnel computation, camera
visibility and depth queries. Query semantics outside the stored volume:
anything below the grid floor is occupied (solid earth), anything above the
ceiling or outside the horizontal extent is free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import GridTooLarge
from .geo import EnuPoint
from .terrain import ExtrudedBox, Heightmap, check_coverage

# Hard cap on grid size; 64M cells of bool is 64 MB.
MAX_CELLS_DEFAULT = 64_000_000

_DIR_TOL = 1e-6


class RayHit(NamedTuple):
    point: EnuPoint
    range_m: float


@dataclass(frozen=True)
class OccupancyGrid:
    """Boolean voxel grid anchored at its minimum corner."""

    origin: EnuPoint
    cell_size: float
    occupancy: np.ndarray  # shape (nx, ny, nz), bool

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.occupancy.ndim != 3:
            raise ValueError("occupancy must be 3-D")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.occupancy.shape  # type: ignore[return-value]

    @property
    def max_corner(self) -> EnuPoint:
        nx, ny, nz = self.dims
        cs = self.cell_size
        return EnuPoint(self.origin.e + nx * cs, self.origin.n + ny * cs,
                        self.origin.u + nz * cs)

    def cell_index(self, p: EnuPoint) -> tuple[int, int, int]:
        cs = self.cell_size
        return (
            int(math.floor((p.e - self.origin.e) / cs)),
            int(math.floor((p.n - self.origin.n) / cs)),
            int(math.floor((p.u - self.origin.u) / cs)),
        )

    def cell_center(self, ix: int, iy: int, iz: int) -> EnuPoint:
        cs = self.cell_size
        return EnuPoint(
            self.origin.e + (ix + 0.5) * cs,
            self.origin.n + (iy + 0.5) * cs,
            self.origin.u + (iz + 0.5) * cs,
        )

    def is_occupied(self, p: EnuPoint) -> bool:
        """Point query with the out-of-bounds convention documented above."""
        if p.u < self.origin.u:
            return True
        ix, iy, iz = self.cell_index(p)
        nx, ny, nz = self.dims
        if iz >= nz:
            return False
        if ix < 0 or ix >= nx or iy < 0 or iy >= ny:
            return False
        return bool(self.occupancy[ix, iy, iz])

    def occupied_indices(self) -> np.ndarray:
        """(k, 3) int array of occupied cell indices."""
        return np.argwhere(self.occupancy)

    def column_top_height(self) -> np.ndarray:
        """Per (ix, iy) column: top face altitude of the highest occupied cell.

        Columns with no occupied cell get -inf.
        """
        nx, ny, nz = self.dims
        any_occ = self.occupancy.any(axis=2)
        # Highest occupied z per column: nz - 1 - argmax over reversed z.
        rev = self.occupancy[:, :, ::-1]
        top_iz = nz - 1 - rev.argmax(axis=2)
        tops = self.origin.u + (top_iz + 1) * self.cell_size
        return np.where(any_occ, tops, -np.inf)


def build_grid(
    terrain: Heightmap,
    buildings: Sequence[ExtrudedBox],
    cell_size: float,
    max_cells: int = MAX_CELLS_DEFAULT,
) -> OccupancyGrid:
    """Voxelize terrain plus extruded buildings.

    A cell is occupied iff its center is below the terrain height of its
    column, or inside a building (footprint hit and center at most
    terrain + height_m above datum). Deterministic for identical inputs.
    """
    if not 0.25 <= cell_size <= 10.0:
        raise ValueError(f"cell_size {cell_size} outside [0.25, 10] m")
    check_coverage(terrain, list(buildings))

    e0, n0, e1, n1 = terrain.extent
    nx = int(math.ceil((e1 - e0) / cell_size))
    ny = int(math.ceil((n1 - n0) / cell_size))

    u_min = terrain.min_height() - cell_size
    top = terrain.max_height()
    for box in buildings:
        top = max(top, _terrain_max_in_footprint(terrain, box) + box.height_m)
    nz = max(1, int(math.ceil((top - u_min) / cell_size)) + 1)

    if nx * ny * nz > max_cells:
        raise GridTooLarge(f"{nx}x{ny}x{nz} cells exceed cap {max_cells}")

    origin = EnuPoint(e0, n0, u_min)
    centers_e = e0 + (np.arange(nx) + 0.5) * cell_size
    centers_n = n0 + (np.arange(ny) + 0.5) * cell_size
    centers_u = u_min + (np.arange(nz) + 0.5) * cell_size

    heights = _sample_heights(terrain, centers_e, centers_n)  # (nx, ny)
    occ = centers_u[None, None, :] < heights[:, :, None]

    for box in buildings:
        in_e = (centers_e >= box.e_min) & (centers_e <= box.e_max)
        in_n = (centers_n >= box.n_min) & (centers_n <= box.n_max)
        footprint = in_e[:, None] & in_n[None, :]
        roof = heights + box.height_m
        inside = footprint[:, :, None] & (centers_u[None, None, :] <= roof[:, :, None])
        occ |= inside

    return OccupancyGrid(origin=origin, cell_size=cell_size, occupancy=occ)


def _sample_heights(hm: Heightmap, es: np.ndarray, ns: np.ndarray) -> np.ndarray:
    """Terrain heights at the tensor product of e and n coordinates, (ne, nn)."""
    nrows, ncols = hm.heights.shape
    cols = np.clip(np.floor((es - hm.ll_e) / hm.cellsize).astype(int), 0, ncols - 1)
    rows = np.clip(np.floor((ns - hm.ll_n) / hm.cellsize).astype(int), 0, nrows - 1)
    return hm.heights[np.ix_(rows, cols)].T


def _terrain_max_in_footprint(hm: Heightmap, box: ExtrudedBox) -> float:
    nrows, ncols = hm.heights.shape
    c0 = max(0, int(math.floor((box.e_min - hm.ll_e) / hm.cellsize)))
    c1 = min(ncols - 1, int(math.floor((box.e_max - hm.ll_e) / hm.cellsize)))
    r0 = max(0, int(math.floor((box.n_min - hm.ll_n) / hm.cellsize)))
    r1 = min(nrows - 1, int(math.floor((box.n_max - hm.ll_n) / hm.cellsize)))
    return float(hm.heights[r0:r1 + 1, c0:c1 + 1].max())


def raycast(
    grid: OccupancyGrid,
    start: EnuPoint,
    direction: EnuPoint,
    max_range: float,
) -> Optional[RayHit]:
    """First occupied-cell boundary intersection along a ray.

    Uses exact voxel traversal (every cell the segment passes through is
    visited). Crossing below the grid floor counts as a hit on the floor
    plane. Returns None if nothing is hit within max_range.
    """
    norm = direction.norm()
    if abs(norm - 1.0) > _DIR_TOL:
        raise ValueError(f"direction not normalized (norm {norm})")
    if max_range <= 0:
        return None
    if grid.is_occupied(start):
        return RayHit(start, 0.0)

    de, dn, du = direction.e, direction.n, direction.u

    t_floor = math.inf
    if du < 0:
        t_floor = (grid.origin.u - start.u) / du

    t_cell = _traverse(grid, start, (de, dn, du), max_range)

    t_hit = min(t_cell, t_floor)
    if t_hit > max_range or math.isinf(t_hit):
        return None
    hit = EnuPoint(start.e + de * t_hit, start.n + dn * t_hit, start.u + du * t_hit)
    return RayHit(hit, t_hit)


def _traverse(grid, start, d, max_range) -> float:
    """t of the entry into the first occupied cell, or +inf."""
    lo = grid.origin.as_tuple()
    nx, ny, nz = grid.dims
    cs = grid.cell_size
    hi = (lo[0] + nx * cs, lo[1] + ny * cs, lo[2] + nz * cs)
    s = start.as_tuple()

    # Slab clip of [0, max_range] against the grid box.
    t0, t1 = 0.0, max_range
    for a in range(3):
        if abs(d[a]) < 1e-15:
            if s[a] < lo[a] or s[a] > hi[a]:
                return math.inf
            continue
        ta = (lo[a] - s[a]) / d[a]
        tb = (hi[a] - s[a]) / d[a]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    if t0 > t1:
        return math.inf

    eps = 1e-12 * max(1.0, abs(t0))
    px = s[0] + d[0] * (t0 + eps)
    py = s[1] + d[1] * (t0 + eps)
    pz = s[2] + d[2] * (t0 + eps)
    idx = [
        min(max(int(math.floor((px - lo[0]) / cs)), 0), nx - 1),
        min(max(int(math.floor((py - lo[1]) / cs)), 0), ny - 1),
        min(max(int(math.floor((pz - lo[2]) / cs)), 0), nz - 1),
    ]
    dims = (nx, ny, nz)
    step = [0, 0, 0]
    t_max = [math.inf, math.inf, math.inf]
    t_delta = [math.inf, math.inf, math.inf]
    for a in range(3):
        if d[a] > 1e-15:
            step[a] = 1
            bound = lo[a] + (idx[a] + 1) * cs
            t_max[a] = (bound - s[a]) / d[a]
            t_delta[a] = cs / d[a]
        elif d[a] < -1e-15:
            step[a] = -1
            bound = lo[a] + idx[a] * cs
            t_max[a] = (bound - s[a]) / d[a]
            t_delta[a] = cs / -d[a]

    occ = grid.occupancy
    t_cur = t0
    while t_cur <= t1:
        if occ[idx[0], idx[1], idx[2]]:
            return t_cur
        a = 0
        if t_max[1] < t_max[a]:
            a = 1
        if t_max[2] < t_max[a]:
            a = 2
        t_cur = t_max[a]
        idx[a] += step[a]
        if idx[a] < 0 or idx[a] >= dims[a]:
            return math.inf
        t_max[a] += t_delta[a]
    return math.inf
