"""Height and normal grid maps, kernel extraction and SVD plane fitting.

Grids are row-major with cell (0, 0) at the minimum-x, minimum-y corner:
row index ``i`` grows with y, column index ``j`` grows with x. Vacant cells
hold ``nan`` in the height array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateFitError

# Relative eigenvalue floor below which a kernel's points count as collinear.
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    height_cells: int
    width_cells: int
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.height_cells < 1 or self.width_cells < 1:
            raise ValueError("grid needs at least one row and one column")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height_cells, self.width_cells)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """World bounds as (x_min, x_max, y_min, y_max)."""
        x0, y0 = self.origin
        return (x0, x0 + self.width_cells * self.resolution,
                y0, y0 + self.height_cells * self.resolution)

    def world_to_cell(self, x, y):
        """Map world coordinates to (row, col) indices; works on scalars and arrays."""
        j = np.floor((np.asarray(x, dtype=float) - self.origin[0]) / self.resolution).astype(np.int64)
        i = np.floor((np.asarray(y, dtype=float) - self.origin[1]) / self.resolution).astype(np.int64)
        if j.ndim == 0:
            return int(i), int(j)
        return i, j

    def cell_center(self, i, j):
        x = self.origin[0] + (np.asarray(j, dtype=float) + 0.5) * self.resolution
        y = self.origin[1] + (np.asarray(i, dtype=float) + 0.5) * self.resolution
        if x.ndim == 0 and y.ndim == 0:
            return float(x), float(y)
        return x, y

    def in_bounds(self, i, j):
        i = np.asarray(i)
        j = np.asarray(j)
        ok = (i >= 0) & (i < self.height_cells) & (j >= 0) & (j < self.width_cells)
        return bool(ok) if ok.ndim == 0 else ok

    def contains(self, x, y):
        """True where a world point falls on the grid."""
        i, j = self.world_to_cell(x, y)
        return self.in_bounds(i, j)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of cell-center coordinates, each of shape (H, W)."""
        xs = self.origin[0] + (np.arange(self.width_cells) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height_cells) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class HeightMap:
    spec: GridSpec
    cells: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=float)
        if cells.shape != self.spec.shape:
            raise ValueError(f"cells shape {cells.shape} does not match grid {self.spec.shape}")
        if np.isinf(cells).any():
            raise ValueError("elevations must be finite or nan (vacant)")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def vacant(self) -> np.ndarray:
        return np.isnan(self.cells)

    def elevation_at(self, x, y):
        """Cell elevation under world point(s); nan when vacant or off the map."""
        i, j = self.spec.world_to_cell(x, y)
        i = np.asarray(i)
        j = np.asarray(j)
        ok = self.spec.in_bounds(i, j)
        out = np.full(np.shape(i), np.nan)
        out[ok] = self.cells[i[ok], j[ok]]
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Kernel:
    center_cell: tuple[int, int]
    side_cells: int
    points: np.ndarray
    vacant_count: int

    @property
    def vacancy_ratio(self) -> float:
        return self.vacant_count / self.side_cells ** 2


@dataclass(frozen=True)
class PlaneFit:
    centroid: np.ndarray
    normal: np.ndarray
    residuals: np.ndarray

    def height_at(self, x, y):
        """Plane elevation above (x, y); undefined for vertical planes."""
        n = self.normal
        c = self.centroid
        return c[2] - (n[0] * (np.asarray(x) - c[0]) + n[1] * (np.asarray(y) - c[1])) / n[2]


@dataclass(frozen=True)
class NormalMap:
    spec: GridSpec
    cells: np.ndarray  # (H, W, 3); nan rows where no normal could be fitted

    def __post_init__(self):
        cells = np.array(self.cells, dtype=float)
        if cells.shape != self.spec.shape + (3,):
            raise ValueError("normal map must have shape (H, W, 3)")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.cells[..., 0])

    def normal_at(self, x, y):
        i, j = self.spec.world_to_cell(x, y)
        if not self.spec.in_bounds(i, j):
            return None
        n = self.cells[i, j]
        return None if np.isnan(n[0]) else n.copy()


def rasterize(points, spec: GridSpec) -> HeightMap:
    """Average point elevations per cell; points off the grid are dropped."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    cells = np.full(spec.shape, np.nan)
    if len(pts) == 0:
        return HeightMap(spec, cells)
    i, j = spec.world_to_cell(pts[:, 0], pts[:, 1])
    ok = spec.in_bounds(i, j)
    flat = i[ok] * spec.width_cells + j[ok]
    size = spec.height_cells * spec.width_cells
    counts = np.bincount(flat, minlength=size)
    sums = np.bincount(flat, weights=pts[ok, 2], minlength=size)
    hit = counts > 0
    out = cells.reshape(-1)
    out[hit] = sums[hit] / counts[hit]
    return HeightMap(spec, out.reshape(spec.shape))


def extract_kernel(hmap: HeightMap, center, side_cells: int) -> Kernel:
    """Collect the cell-center points of a square window around ``center``.

    Window cells that fall off the map are counted as vacant.
    """
    if side_cells < 1 or side_cells % 2 == 0:
        raise ValueError("side_cells must be a positive odd integer")
    ci, cj = int(center[0]), int(center[1])
    spec = hmap.spec
    if not spec.in_bounds(ci, cj):
        raise IndexError(f"kernel center {(ci, cj)} is outside the map")
    half = side_cells // 2
    i0, i1 = max(ci - half, 0), min(ci + half + 1, spec.height_cells)
    j0, j1 = max(cj - half, 0), min(cj + half + 1, spec.width_cells)
    window = hmap.cells[i0:i1, j0:j1]
    ii, jj = np.nonzero(~np.isnan(window))
    ii = ii + i0
    jj = jj + j0
    xs, ys = spec.cell_center(ii, jj)
    points = np.column_stack([np.atleast_1d(xs), np.atleast_1d(ys), hmap.cells[ii, jj]])
    return Kernel((ci, cj), side_cells, points.reshape(-1, 3), side_cells ** 2 - len(ii))


def _orient(normal: np.ndarray) -> np.ndarray:
    """Flip a normal so z >= 0 (ties broken on the first nonzero component)."""
    for c in (normal[2], normal[1], normal[0]):
        if c != 0:
            return normal if c > 0 else -normal
    return normal


def fit_plane(kernel) -> PlaneFit:
    """Total-least-squares plane through a kernel's points via SVD."""
    pts = kernel.points if isinstance(kernel, Kernel) else np.asarray(kernel, dtype=float)
    pts = pts.reshape(-1, 3)
    if len(pts) < 3:
        raise DegenerateFitError(f"need at least 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[0] == 0 or s[1] ** 2 <= _RANK_TOL * s[0] ** 2:
        raise DegenerateFitError("points are collinear")
    normal = _orient(vt[-1] / np.linalg.norm(vt[-1]))
    return PlaneFit(centroid, normal, centered @ normal)


def _windows(cells: np.ndarray, side: int, fill=np.nan) -> np.ndarray:
    """(H, W, side, side) view of every cell's neighbourhood, padded with ``fill``."""
    half = side // 2
    padded = np.pad(cells, half, mode="constant", constant_values=fill)
    return sliding_window_view(padded, (side, side))


@dataclass
class KernelFits:
    """Per-cell plane fits for a whole map, computed in one batch.

    ``offsets`` holds the (dx, dy) of each window slot relative to the center
    cell; ``z`` the window elevations (nan for vacant or clipped slots).
    """

    counts: np.ndarray
    centroids: np.ndarray
    normals: np.ndarray
    ok: np.ndarray
    z: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)

    @property
    def vacancy(self) -> np.ndarray:
        side = self.z.shape[-1]
        return (side * side - self.counts) / (side * side)


def fit_kernels(hmap: HeightMap, side_cells: int) -> KernelFits:
    """Batch plane fit of every cell's kernel.

    Uses the eigen-decomposition of each window's 3x3 scatter matrix, which
    shares its smallest-eigenvalue direction with the SVD used by
    :func:`fit_plane`.
    """
    if side_cells < 1 or side_cells % 2 == 0:
        raise ValueError("side_cells must be a positive odd integer")
    spec = hmap.spec
    res = spec.resolution
    z = _windows(hmap.cells, side_cells)
    half = side_cells // 2
    d = (np.arange(side_cells) - half) * res
    dy, dx = np.meshgrid(d, d, indexing="ij")
    mask = ~np.isnan(z)
    counts = mask.sum(axis=(-2, -1))
    safe = np.maximum(counts, 1)
    zf = np.where(mask, z, 0.0)
    mx = (mask * dx).sum(axis=(-2, -1)) / safe
    my = (mask * dy).sum(axis=(-2, -1)) / safe
    mz = zf.sum(axis=(-2, -1)) / safe
    ex = np.where(mask, dx - mx[..., None, None], 0.0)
    ey = np.where(mask, dy - my[..., None, None], 0.0)
    ez = np.where(mask, z - mz[..., None, None], 0.0)
    comps = (ex, ey, ez)
    scatter = np.empty(spec.shape + (3, 3))
    for a in range(3):
        for b in range(a, 3):
            v = (comps[a] * comps[b]).sum(axis=(-2, -1))
            scatter[..., a, b] = v
            scatter[..., b, a] = v
    evals, evecs = np.linalg.eigh(scatter)
    normals = evecs[..., :, 0].copy()
    flip = (normals[..., 2] < 0) | ((normals[..., 2] == 0) & (normals[..., 1] < 0))
    normals[flip] *= -1
    ok = (counts >= 3) & (evals[..., 2] > 0) & (evals[..., 1] > _RANK_TOL * evals[..., 2])
    xc, yc = spec.cell_centers()
    centroids = np.stack([xc + mx, yc + my, mz], axis=-1)
    normals[~ok] = np.nan
    centroids[~ok] = np.nan
    offsets = np.stack([dx, dy], axis=-1)
    return KernelFits(counts, centroids, normals, ok, z, offsets)


def compute_normal_map(hmap: HeightMap, side_cells: int) -> NormalMap:
    """Fit a plane to every cell's kernel; cells with degenerate kernels get no normal."""
    return NormalMap(hmap.spec, fit_kernels(hmap, side_cells).normals)
