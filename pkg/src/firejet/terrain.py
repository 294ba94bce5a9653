"""Terrain ingestion: ESRI ASCII heightmaps and extruded building boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CoverageError


@dataclass(frozen=True)
class ExtrudedBox:
    """Axis-aligned building footprint extruded from the ground to height_m."""

    e_min: float
    n_min: float
    e_max: float
    n_max: float
    height_m: float

    def __post_init__(self):
        if self.e_min >= self.e_max or self.n_min >= self.n_max:
            raise ValueError("degenerate box footprint")
        if self.height_m <= 0:
            raise ValueError("box height must be positive")

    def contains(self, e: float, n: float, u: float, base: float = 0.0) -> bool:
        return (
            self.e_min <= e <= self.e_max
            and self.n_min <= n <= self.n_max
            and base <= u <= base + self.height_m
        )


class Heightmap:
    """Regular grid of terrain heights over an ENU-aligned rectangle.

    Heights are cell-registered: ``height_at`` returns the value of the cell
    containing the query point, which keeps the terrain model exactly
    reproducible by a brute-force oracle.
    """

    def __init__(self, heights: np.ndarray, ll_e: float, ll_n: float, cellsize: float):
        if heights.ndim != 2:
            raise ValueError("heights must be 2-D")
        if cellsize <= 0:
            raise ValueError("cellsize must be positive")
        # Stored row 0 = southernmost row (lowest n).
        self.heights = np.asarray(heights, dtype=float)
        self.ll_e = float(ll_e)
        self.ll_n = float(ll_n)
        self.cellsize = float(cellsize)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(e_min, n_min, e_max, n_max) covered by the map."""
        nrows, ncols = self.heights.shape
        return (
            self.ll_e,
            self.ll_n,
            self.ll_e + ncols * self.cellsize,
            self.ll_n + nrows * self.cellsize,
        )

    def covers(self, e: float, n: float) -> bool:
        e0, n0, e1, n1 = self.extent
        return e0 <= e <= e1 and n0 <= n <= n1

    def height_at(self, e: float, n: float) -> float:
        """Terrain height of the cell containing (e, n)."""
        nrows, ncols = self.heights.shape
        col = int(math.floor((e - self.ll_e) / self.cellsize))
        row = int(math.floor((n - self.ll_n) / self.cellsize))
        col = min(max(col, 0), ncols - 1)
        row = min(max(row, 0), nrows - 1)
        return float(self.heights[row, col])

    def max_height(self) -> float:
        return float(self.heights.max())

    def min_height(self) -> float:
        return float(self.heights.min())

    @classmethod
    def flat(cls, e_min: float, n_min: float, e_max: float, n_max: float,
             cellsize: float, height: float = 0.0) -> "Heightmap":
        ncols = max(1, int(math.ceil((e_max - e_min) / cellsize)))
        nrows = max(1, int(math.ceil((n_max - n_min) / cellsize)))
        return cls(np.full((nrows, ncols), height), e_min, n_min, cellsize)


def load_esri_ascii(path: str | Path) -> Heightmap:
    """Parse an ESRI ASCII grid file into a Heightmap.

    Header keys (case-insensitive): ncols, nrows, xllcorner, yllcorner,
    cellsize, and optional NODATA_value. Data rows are north-to-south,
    row-major. NODATA cells are replaced with the minimum valid height.
    """
    path = Path(path)
    header: dict[str, float] = {}
    data_tokens: list[str] = []
    with path.open() as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) == 2 and parts[0].lower() in (
                "ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"
            ):
                header[parts[0].lower()] = float(parts[1])
            else:
                data_tokens.extend(parts)
    for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if key not in header:
            raise ValueError(f"{path}: missing ESRI ASCII header field {key!r}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    if len(data_tokens) != ncols * nrows:
        raise ValueError(
            f"{path}: expected {ncols * nrows} height values, got {len(data_tokens)}"
        )
    grid = np.array(data_tokens, dtype=float).reshape(nrows, ncols)
    if "nodata_value" in header:
        mask = grid == header["nodata_value"]
        if mask.all():
            raise ValueError(f"{path}: all cells are NODATA")
        if mask.any():
            grid[mask] = grid[~mask].min()
    # File rows run north to south; store south-up.
    grid = grid[::-1]
    return Heightmap(grid, header["xllcorner"], header["yllcorner"], header["cellsize"])


def save_esri_ascii(hm: Heightmap, path: str | Path) -> None:
    """Write a Heightmap as an ESRI ASCII grid (inverse of load_esri_ascii)."""
    nrows, ncols = hm.heights.shape
    lines = [
        f"ncols {ncols}",
        f"nrows {nrows}",
        f"xllcorner {hm.ll_e}",
        f"yllcorner {hm.ll_n}",
        f"cellsize {hm.cellsize}",
        "NODATA_value -9999",
    ]
    for row in hm.heights[::-1]:
        lines.append(" ".join(f"{v:g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def check_coverage(hm: Heightmap, buildings: list[ExtrudedBox]) -> None:
    """Raise CoverageError if any building footprint leaves the terrain extent."""
    e0, n0, e1, n1 = hm.extent
    for box in buildings:
        if box.e_min < e0 or box.n_min < n0 or box.e_max > e1 or box.n_max > n1:
            raise CoverageError(
                f"building footprint ({box.e_min},{box.n_min})-({box.e_max},{box.n_max}) "
                f"outside terrain extent ({e0},{n0})-({e1},{n1})"
            )
