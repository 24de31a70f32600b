"""Apparent traversability, regional constraints and relative traversability.

Apparent traversability ``tau`` in [0, 1] blends three normalized geometric
features of a cell's kernel (slope, sparsity, bumpiness); ``tau = 0`` is fully
traversable. The constraint flag ``gamma`` marks hazardous cells. Relative
traversability ``psi`` is the signed pitch mismatch between the robot's
forward axis and the planned path direction, measured in a frame attached to
the local ground normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateFrameError
from .gridmap import GridSpec, HeightMap, Kernel, NormalMap, PlaneFit, fit_kernels

_UNIT_TOL = 1e-6


@dataclass(frozen=True)
class FeatureWeights:
    alpha_slope: float = 0.3
    alpha_sparsity: float = 0.3
    alpha_bumpiness: float = 0.4

    def __post_init__(self):
        vals = (self.alpha_slope, self.alpha_sparsity, self.alpha_bumpiness)
        if any(not 0.0 <= a <= 1.0 for a in vals):
            raise ValueError("feature weights must lie in [0, 1]")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ValueError(f"feature weights must sum to 1, got {sum(vals)!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha_slope, self.alpha_sparsity, self.alpha_bumpiness])


@dataclass(frozen=True)
class FeatureThresholds:
    r_min: float = 0.2
    r_max: float = 0.8
    eps_slope: float = 0.7
    eps_sparsity: float = 0.6
    eps_bumpiness: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.r_min < self.r_max <= 1.0:
            raise ValueError("need 0 <= r_min < r_max <= 1")


@dataclass(frozen=True)
class AssessmentConfig:
    """Terrain-assessment settings.

    ``roughness`` selects the third feature: ``"bumpiness"`` (earth mover's
    distance between observed and fitted heights) or ``"flatness"`` (RMS of
    point-to-plane residuals, the PUTN-style alternative).
    """

    kernel_side: int = 5
    b_max: float = 0.1
    roughness: str = "bumpiness"
    weights: FeatureWeights = field(default_factory=FeatureWeights)
    thresholds: FeatureThresholds = field(default_factory=FeatureThresholds)

    def __post_init__(self):
        if self.kernel_side < 1 or self.kernel_side % 2 == 0:
            raise ValueError("kernel_side must be a positive odd integer")
        if not self.b_max > 0:
            raise ValueError("b_max must be positive")
        if self.roughness not in ("bumpiness", "flatness"):
            raise ValueError(f"unknown roughness feature {self.roughness!r}")


@dataclass(frozen=True)
class CellFeatures:
    slope: float
    sparsity: float
    bumpiness: float


# -- per-feature operations ---------------------------------------------------

def slope_feature(normal) -> float:
    n = np.asarray(normal, dtype=float)
    norm = float(np.linalg.norm(n))
    if abs(norm - 1.0) > _UNIT_TOL:
        raise ValueError(f"normal must be unit length, got norm {norm}")
    if n[2] < -_UNIT_TOL:
        raise ValueError("normal must have non-negative z")
    return math.acos(min(1.0, max(-1.0, n[2] / norm)))


def sparsity_feature(r: float, thresholds: FeatureThresholds) -> float:
    if r < thresholds.r_min:
        return 0.0
    if r > thresholds.r_max:
        return 1.0
    return (r - thresholds.r_min) / (thresholds.r_max - thresholds.r_min)


def emd_1d(a, b) -> float:
    """Exact earth mover's distance between two equal-size empirical samples."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError("samples must have equal size")
    return float(np.mean(np.abs(a - b)))


def bumpiness_feature(kernel: Kernel, fit: PlaneFit) -> float:
    """EMD between observed heights and fitted-plane heights at the same (x, y)."""
    pts = kernel.points
    if len(pts) == 0:
        raise ValueError("empty kernel")
    if abs(fit.normal[2]) < 1e-12:
        return math.inf
    return emd_1d(pts[:, 2], fit.height_at(pts[:, 0], pts[:, 1]))


def flatness_feature(kernel: Kernel, fit: PlaneFit) -> float:
    if len(kernel.points) == 0:
        raise ValueError("empty kernel")
    return float(np.sqrt(np.mean(fit.residuals ** 2)))


def normalize_features(features: CellFeatures, config: AssessmentConfig = AssessmentConfig()):
    """Map raw features onto [0, 1]: slope by pi/2, roughness by ``b_max`` (clamped)."""
    return (
        min(max(features.slope / (math.pi / 2), 0.0), 1.0),
        min(max(features.sparsity, 0.0), 1.0),
        min(features.bumpiness / config.b_max, 1.0),
    )


def apparent_traversability(normalized, weights: FeatureWeights = FeatureWeights()) -> float:
    s, p, b = normalized
    return weights.alpha_slope * s + weights.alpha_sparsity * p + weights.alpha_bumpiness * b


def regional_constraint(normalized, thresholds: FeatureThresholds = FeatureThresholds()) -> int:
    s, p, b = normalized
    return int((s > thresholds.eps_slope or b > thresholds.eps_bumpiness) and p < thresholds.eps_sparsity)


# -- whole-map assessment -----------------------------------------------------

@dataclass(frozen=True)
class TraversabilityMap:
    spec: GridSpec
    cells: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=float)
        if cells.shape != self.spec.shape:
            raise ValueError("traversability grid shape mismatch")
        if ((cells < 0) | (cells > 1) | np.isnan(cells)).any():
            raise ValueError("traversability values must lie in [0, 1]")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)


@dataclass(frozen=True)
class ConstraintMap:
    spec: GridSpec
    cells: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int8)
        if cells.shape != self.spec.shape:
            raise ValueError("constraint grid shape mismatch")
        if not np.isin(cells, (0, 1)).all():
            raise ValueError("constraint values must be 0 or 1")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)


@dataclass(frozen=True)
class FeatureMaps:
    """Raw and normalized per-cell features. ``has_normal`` marks fitted cells."""

    slope: np.ndarray
    sparsity: np.ndarray
    roughness: np.ndarray
    vacancy: np.ndarray
    normalized: np.ndarray  # (H, W, 3)
    has_normal: np.ndarray


def compute_features(height: HeightMap, normals: NormalMap, config: AssessmentConfig = AssessmentConfig()) -> FeatureMaps:
    if height.spec != normals.spec:
        raise ValueError("height and normal maps are not aligned")
    kf = fit_kernels(height, config.kernel_side)
    th = config.thresholds
    n = normals.cells
    has_normal = normals.present
    nz = np.where(has_normal, n[..., 2], 1.0)
    slope = np.where(has_normal, np.arccos(np.clip(nz, -1.0, 1.0)), 0.0)

    vacancy = kf.vacancy
    sparsity = np.clip((vacancy - th.r_min) / (th.r_max - th.r_min), 0.0, 1.0)

    # Plane through the kernel centroid with the map's normal, evaluated at every window slot.
    xc, yc = height.spec.cell_centers()
    c = np.where(has_normal[..., None], kf.centroids, 0.0)
    nn = np.where(has_normal[..., None], n, np.array([0.0, 0.0, 1.0]))
    wx = xc[..., None, None] + kf.offsets[..., 0]
    wy = yc[..., None, None] + kf.offsets[..., 1]
    mask = ~np.isnan(kf.z)
    side2 = config.kernel_side ** 2
    shape = height.spec.shape
    if config.roughness == "bumpiness":
        with np.errstate(divide="ignore", invalid="ignore"):
            zfit = c[..., 2, None, None] - (
                nn[..., 0, None, None] * (wx - c[..., 0, None, None])
                + nn[..., 1, None, None] * (wy - c[..., 1, None, None])
            ) / nn[..., 2, None, None]
        obs = np.sort(np.where(mask, kf.z, np.nan).reshape(shape + (side2,)), axis=-1)
        fit = np.sort(np.where(mask, zfit, np.nan).reshape(shape + (side2,)), axis=-1)
        with np.errstate(invalid="ignore"):
            diff = np.abs(obs - fit)
        rough = np.nansum(diff, axis=-1) / np.maximum(kf.counts, 1)
        vertical = has_normal & (np.abs(nn[..., 2]) < 1e-12)
        rough = np.where(vertical, np.inf, rough)
    else:
        dz = np.where(mask, kf.z, 0.0) - c[..., 2, None, None]
        dist = (nn[..., 0, None, None] * np.where(mask, wx - c[..., 0, None, None], 0.0)
                + nn[..., 1, None, None] * np.where(mask, wy - c[..., 1, None, None], 0.0)
                + nn[..., 2, None, None] * dz)
        dist = np.where(mask, dist, 0.0)
        rough = np.sqrt((dist ** 2).sum(axis=(-2, -1)) / np.maximum(kf.counts, 1))
    rough = np.where(has_normal, rough, 0.0)

    normalized = np.stack([
        np.clip(slope / (math.pi / 2), 0.0, 1.0),
        sparsity,
        np.minimum(rough / config.b_max, 1.0),
    ], axis=-1)
    return FeatureMaps(slope, sparsity, rough, vacancy, normalized, has_normal)


def build_maps(height: HeightMap, normals: NormalMap, weights: FeatureWeights | None = None,
               thresholds: FeatureThresholds | None = None,
               config: AssessmentConfig | None = None) -> tuple[TraversabilityMap, ConstraintMap]:
    """Per-cell traversability and constraint maps.

    Cells without a fitted normal are pessimistically marked ``tau = 1``; their
    constraint flag uses only the sparsity term (slope and roughness unknown).
    """
    config = config or AssessmentConfig()
    weights = weights or config.weights
    thresholds = thresholds or config.thresholds
    if height.spec != normals.spec:
        raise ValueError("height and normal maps are not aligned")
    feats = compute_features(height, normals, config)
    nrm = np.where(feats.has_normal[..., None], feats.normalized,
                   np.stack([np.zeros_like(feats.sparsity), feats.sparsity,
                             np.zeros_like(feats.sparsity)], axis=-1))
    tau = nrm @ weights.as_array()
    tau = np.where(feats.has_normal, np.clip(tau, 0.0, 1.0), 1.0)
    gamma = (((nrm[..., 0] > thresholds.eps_slope) | (nrm[..., 2] > thresholds.eps_bumpiness))
             & (nrm[..., 1] < thresholds.eps_sparsity))
    return TraversabilityMap(height.spec, tau), ConstraintMap(height.spec, gamma.astype(np.int8))


def kernel_mean(trav: TraversabilityMap, side_cells: int) -> np.ndarray:
    """Mean traversability over each cell's in-map kernel window."""
    from scipy.ndimage import uniform_filter

    ones = np.ones(trav.spec.shape)
    s = uniform_filter(trav.cells, size=side_cells, mode="constant", cval=0.0)
    w = uniform_filter(ones, size=side_cells, mode="constant", cval=0.0)
    return np.clip(s / w, 0.0, 1.0)


@dataclass(frozen=True)
class TerrainMaps:
    """Aligned perception maps used by the planner and controller."""

    height: HeightMap
    normals: NormalMap
    trav: TraversabilityMap
    constraints: ConstraintMap

    @property
    def spec(self) -> GridSpec:
        return self.height.spec

    @cached_property
    def rho(self) -> np.ndarray:
        """Read-only sampling weight (1 - tau)(1 - gamma) per cell."""
        rho = (1.0 - self.trav.cells) * (1.0 - self.constraints.cells)
        rho.flags.writeable = False
        return rho

    def lookup(self, x, y):
        """(tau, gamma, z, inside) at world points; off-map points read tau=1, gamma=1."""
        spec = self.spec
        i, j = spec.world_to_cell(x, y)
        i = np.atleast_1d(i)
        j = np.atleast_1d(j)
        inside = spec.in_bounds(i, j)
        ic = np.clip(i, 0, spec.height_cells - 1)
        jc = np.clip(j, 0, spec.width_cells - 1)
        tau = np.where(inside, self.trav.cells[ic, jc], 1.0)
        gamma = np.where(inside, self.constraints.cells[ic, jc], 1)
        z = np.where(inside, self.height.cells[ic, jc], np.nan)
        return tau, gamma, z, inside


def assess(height: HeightMap, config: AssessmentConfig | None = None) -> TerrainMaps:
    """Run the full assessment pipeline on a height map."""
    from .gridmap import compute_normal_map

    config = config or AssessmentConfig()
    normals = compute_normal_map(height, config.kernel_side)
    trav, cons = build_maps(height, normals, config=config)
    return TerrainMaps(height, normals, trav, cons)


# -- relative traversability --------------------------------------------------

@dataclass(frozen=True)
class RelativeTraversability:
    psi: float
    e_x: np.ndarray
    e_y: np.ndarray
    e_z: np.ndarray


def relative_traversability(forward, normal, path_dir) -> RelativeTraversability:
    """Signed pitch mismatch between the robot's forward axis and the path.

    Builds a ground frame with ``e_z`` along the normal and ``e_x`` along the
    path direction projected onto the ground plane, projects the forward axis
    onto the ``e_x``-``e_z`` plane and returns the angle to the path direction
    about ``e_y``. Positive when the path climbs more steeply than the robot is
    pitched.
    """
    q = np.asarray(forward, dtype=float)
    n = np.asarray(normal, dtype=float)
    p = np.asarray(path_dir, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > _UNIT_TOL or abs(np.linalg.norm(n) - 1.0) > _UNIT_TOL:
        raise ValueError("forward and normal must be unit vectors")
    p_norm = float(np.linalg.norm(p))
    if not p_norm > 0:
        raise ValueError("path direction must be non-zero")
    e_z = n
    tangential = p - (p @ e_z) * e_z
    t_norm = float(np.linalg.norm(tangential))
    if t_norm <= 1e-9 * p_norm:
        raise DegenerateFrameError("path direction is parallel to the ground normal")
    e_x = tangential / t_norm
    e_y = np.cross(e_x, e_z)
    q_xz = q - (q @ e_y) * e_y
    q_norm = float(np.linalg.norm(q_xz))
    if q_norm <= 1e-9:
        raise DegenerateFrameError("forward axis is parallel to the lateral axis")
    q_xz = q_xz / q_norm
    p_hat = p / p_norm
    s = float(np.cross(q_xz, p_hat) @ e_y)
    return RelativeTraversability(math.asin(min(1.0, max(-1.0, s))), e_x, e_y, e_z)


def relative_traversability_batch(forward, normals, path_dirs) -> np.ndarray:
    """Vectorized psi for many (normal, path direction) pairs and one forward axis.

    Rows whose frame is degenerate (or whose inputs are non-finite) give nan.
    """
    q = np.asarray(forward, dtype=float)
    n = np.asarray(normals, dtype=float).reshape(-1, 3)
    p = np.asarray(path_dirs, dtype=float).reshape(-1, 3)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_norm = np.linalg.norm(p, axis=1)
        tangential = p - np.einsum("ij,ij->i", p, n)[:, None] * n
        t_norm = np.linalg.norm(tangential, axis=1)
        e_x = tangential / t_norm[:, None]
        e_y = np.cross(e_x, n)
        q_xz = q[None, :] - (e_y @ q)[:, None] * e_y
        q_norm = np.linalg.norm(q_xz, axis=1)
        q_xz = q_xz / q_norm[:, None]
        s = np.einsum("ij,ij->i", np.cross(q_xz, p / p_norm[:, None]), e_y)
        psi = np.arcsin(np.clip(s, -1.0, 1.0))
    bad = ~(p_norm > 0) | ~(t_norm > 1e-9 * p_norm) | ~(q_norm > 1e-9) | ~np.isfinite(psi)
    psi[bad] = np.nan
    return psi
