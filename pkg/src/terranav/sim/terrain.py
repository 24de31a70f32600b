"""Seeded procedural terrains: fractal noise, a global incline and placed features.

Each terrain keeps two height grids. ``true_height`` drives the simulator
physics; ``height`` is what perception sees, with ditch cells left vacant.
Heights are quantized to 0.1 mm so fixed-seed exports hash-equal.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, asdict
from functools import cached_property

import numpy as np

from ..errors import ConfigError
from ..gridmap import GridSpec, HeightMap
from ..mapio import write_grid_csv
from ..traversability import AssessmentConfig, TerrainMaps, assess

Z_QUANTUM = 1e-4
LEVELS = ("easy", "plain", "hard")


@dataclass(frozen=True)
class Sill:
    """Raised band of constant height (a curb or step), centred at (x, y)."""

    x: float
    y: float
    angle: float = 0.0  # direction of the band's long axis
    length: float = 10.0
    width: float = 1.0
    height: float = 0.2


@dataclass(frozen=True)
class Rock:
    x: float
    y: float
    radius: float = 0.25
    height: float = 0.15


@dataclass(frozen=True)
class Ditch:
    x: float
    y: float
    angle: float = 0.0
    length: float = 2.0
    width: float = 0.4
    depth: float = 0.3
    bank: float = 0.5  # horizontal run of the sloped wall; 0 gives vertical walls


@dataclass(frozen=True)
class Pillar:
    x: float
    y: float
    radius: float = 0.2
    height: float = 1.5


def _tuple_of(kind, items):
    return tuple(it if isinstance(it, kind) else kind(**it) for it in items)


@dataclass(frozen=True)
class TerrainSpec:
    terrain_id: str = "flat"
    extent: tuple = (7.0, 5.0)
    resolution: float = 0.1
    noise_octaves: int = 4
    noise_amplitude: float = 0.0
    noise_wavelength: float = 1.5
    noise_persistence: float = 0.5
    inclination: float = 0.0  # degrees
    incline_direction: float = 0.0  # radians, direction of steepest ascent
    sills: tuple = ()
    rocks: tuple = ()
    ditches: tuple = ()
    pillars: tuple = ()
    rock_density: float = 0.0  # rocks per square metre, placed at random
    rock_radius: tuple = (0.15, 0.35)
    rock_height: tuple = (0.05, 0.25)
    rubble_amplitude: float = 0.0  # short-wavelength noise confined to patches
    rubble_wavelength: float = 0.4
    rubble_coverage: float = 0.0  # fraction of the map inside rubble patches
    corridor_width: float = 0.0  # rubble-free band y = y0 + a*sin(2*pi*x/period + phase); 0 disables
    corridor_y: float = 2.5
    corridor_amplitude: float = 0.0
    corridor_period: float = 6.0
    corridor_phase: float = 0.0
    start: tuple = (1.0, 2.5, 0.0)
    goal: tuple = (6.0, 2.5, 0.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sills", _tuple_of(Sill, self.sills))
        object.__setattr__(self, "rocks", _tuple_of(Rock, self.rocks))
        object.__setattr__(self, "ditches", _tuple_of(Ditch, self.ditches))
        object.__setattr__(self, "pillars", _tuple_of(Pillar, self.pillars))
        for name in ("extent", "rock_radius", "rock_height", "start", "goal"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if min(self.extent) <= 0 or self.resolution <= 0:
            raise ConfigError("terrain extent and resolution must be positive")
        if self.noise_amplitude < 0 or self.rock_density < 0 or self.noise_wavelength <= 0:
            raise ConfigError("noise amplitude, wavelength and rock density must be non-negative")
        if self.corridor_width < 0 or self.corridor_period <= 0:
            raise ConfigError("corridor width must be non-negative and its period positive")
        if self.rubble_amplitude < 0 or self.rubble_wavelength <= 0 or not 0 <= self.rubble_coverage <= 1:
            raise ConfigError("rubble needs amplitude >= 0, wavelength > 0 and coverage in [0, 1]")
        if any(f.height < 0 for f in self.sills + self.rocks) or any(d.depth < 0 for d in self.ditches):
            raise ConfigError("feature heights and depths must be non-negative")
        if not -80 < self.inclination < 80:
            raise ConfigError("inclination must lie within (-80, 80) degrees")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TerrainSpec":
        return cls(**d)

    def corridor_center(self, x):
        return self.corridor_y + self.corridor_amplitude * np.sin(2 * np.pi * np.asarray(x) / self.corridor_period
                                                                  + self.corridor_phase)

    def with_inclination(self, degrees: float) -> "TerrainSpec":
        d = self.to_dict()
        d["inclination"] = float(degrees)
        d["terrain_id"] = f"{self.terrain_id}_i{int(round(degrees)):02d}"
        return TerrainSpec.from_dict(d)


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def gradient_noise(x, y, rng: np.random.Generator) -> np.ndarray:
    """2-D gradient (Perlin-style) noise on an integer lattice with random unit gradients."""
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    gx_min, gy_min = int(x0.min()), int(y0.min())
    nx = int(x0.max()) - gx_min + 2
    ny = int(y0.max()) - gy_min + 2
    ang = rng.uniform(0.0, 2 * np.pi, (ny, nx))
    gxs, gys = np.cos(ang), np.sin(ang)
    fx = x - x0
    fy = y - y0
    ix = x0 - gx_min
    iy = y0 - gy_min

    def corner(di, dj):
        return gxs[iy + di, ix + dj] * (fx - dj) + gys[iy + di, ix + dj] * (fy - di)

    u = _fade(fx)
    v = _fade(fy)
    bottom = corner(0, 0) + u * (corner(0, 1) - corner(0, 0))
    top = corner(1, 0) + u * (corner(1, 1) - corner(1, 0))
    return bottom + v * (top - bottom)


def fractal_noise(x, y, octaves: int, wavelength: float, persistence: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Octave sum of gradient noise normalised to roughly [-1, 1]."""
    total = np.zeros_like(x, dtype=float)
    amp = 1.0
    norm = 0.0
    freq = 1.0 / wavelength
    for _ in range(octaves):
        total += amp * gradient_noise(x * freq, y * freq, rng)
        norm += amp
        amp *= persistence
        freq *= 2.0
    # Gradient noise peaks near +-0.7; rescale so the amplitude reads as metres.
    return total / (norm * 0.7) if norm else total


def _band_inset(X, Y, x, y, angle, length, width):
    """Distance from each point inward to the band's boundary (negative outside)."""
    c, s = math.cos(angle), math.sin(angle)
    u = (X - x) * c + (Y - y) * s
    v = -(X - x) * s + (Y - y) * c
    return np.minimum(length / 2 - np.abs(u), width / 2 - np.abs(v))


def _band_mask(X, Y, x, y, angle, length, width):
    return _band_inset(X, Y, x, y, angle, length, width) >= 0


@dataclass
class Terrain:
    spec: TerrainSpec
    grid: GridSpec
    true_height: np.ndarray
    height: HeightMap
    maps: TerrainMaps
    rocks: tuple = ()

    @property
    def normals(self):
        return self.maps.normals

    @property
    def trav(self):
        return self.maps.trav

    @property
    def constraints(self):
        return self.maps.constraints

    @property
    def obstacles(self) -> tuple:
        return self.spec.pillars

    @property
    def inclination(self) -> float:
        return self.spec.inclination

    @property
    def seed(self) -> int:
        return self.spec.seed

    @property
    def terrain_id(self) -> str:
        return self.spec.terrain_id

    def obstacle_mask(self, inflate: float = 0.0) -> np.ndarray:
        """Cells whose centres lie within a pillar radius plus ``inflate``."""
        X, Y = self.grid.cell_centers()
        mask = np.zeros(self.grid.shape, dtype=bool)
        for p in self.spec.pillars:
            mask |= np.hypot(X - p.x, Y - p.y) <= p.radius + inflate
        return mask

    def collides(self, x: float, y: float, clearance: float) -> bool:
        return any(math.hypot(x - p.x, y - p.y) < p.radius + clearance for p in self.spec.pillars)

    def export_csv(self, path) -> None:
        write_grid_csv(path, self.height.cells, self.grid)

    def digest(self) -> str:
        """SHA-256 of the observed and true height grids as exported text."""
        h = hashlib.sha256()
        for arr in (self.height.cells, self.true_height):
            for row in arr:
                h.update((",".join("nan" if np.isnan(v) else repr(float(v)) for v in row) + "\n").encode())
        return h.hexdigest()

    @cached_property
    def mean_tau(self) -> float:
        present = ~self.height.vacant
        cells = self.maps.trav.cells[present]
        return float(cells.mean()) if cells.size else 1.0


def generate_terrain(spec: TerrainSpec, assessment: AssessmentConfig | None = None) -> Terrain:
    """Build a terrain deterministically from its spec."""
    nx = int(round(spec.extent[0] / spec.resolution))
    ny = int(round(spec.extent[1] / spec.resolution))
    grid = GridSpec(ny, nx, spec.resolution, (0.0, 0.0))
    X, Y = grid.cell_centers()
    rng = np.random.default_rng(spec.seed)
    z = np.zeros(grid.shape)
    if spec.noise_amplitude > 0:
        z += spec.noise_amplitude * fractal_noise(X, Y, spec.noise_octaves, spec.noise_wavelength,
                                                  spec.noise_persistence, rng)
    if spec.inclination:
        g = math.tan(math.radians(spec.inclination))
        d = spec.incline_direction
        cx, cy = spec.extent[0] / 2, spec.extent[1] / 2
        z += g * ((X - cx) * math.cos(d) + (Y - cy) * math.sin(d))
    for sill in spec.sills:
        z += np.where(_band_mask(X, Y, sill.x, sill.y, sill.angle, sill.length, sill.width), sill.height, 0.0)
    rocks = list(spec.rocks)
    if spec.rock_density > 0:
        n = int(rng.poisson(spec.rock_density * spec.extent[0] * spec.extent[1]))
        keep_out = [spec.start[:2], spec.goal[:2]]
        for _ in range(n):
            x = rng.uniform(0, spec.extent[0])
            y = rng.uniform(0, spec.extent[1])
            r = rng.uniform(*spec.rock_radius)
            h = rng.uniform(*spec.rock_height)
            if all(math.hypot(x - kx, y - ky) > r + 0.6 for kx, ky in keep_out):
                rocks.append(Rock(x, y, r, h))
    if spec.rubble_amplitude > 0 and spec.rubble_coverage > 0:
        patches = fractal_noise(X, Y, 2, 2.5, 0.5, rng)
        inside = patches >= np.quantile(patches, 1.0 - spec.rubble_coverage)
        if spec.corridor_width > 0:
            inside &= np.abs(Y - spec.corridor_center(X)) > spec.corridor_width / 2
        for kx, ky, _ in (spec.start, spec.goal):
            inside &= np.hypot(X - kx, Y - ky) > 0.8
        rough = fractal_noise(X, Y, 2, spec.rubble_wavelength, 0.5, rng)
        z += np.where(inside, spec.rubble_amplitude * rough, 0.0)
    for rock in rocks:
        d2 = ((X - rock.x) ** 2 + (Y - rock.y) ** 2) / rock.radius ** 2
        z += rock.height * np.sqrt(np.clip(1.0 - d2, 0.0, None))
    ditch_mask = np.zeros(grid.shape, dtype=bool)
    for ditch in spec.ditches:
        inset = _band_inset(X, Y, ditch.x, ditch.y, ditch.angle, ditch.length, ditch.width)
        m = inset >= 0
        if ditch.bank > 0:
            profile = np.clip((inset + 0.5 * spec.resolution) / ditch.bank, 0.0, 1.0)
        else:
            profile = np.ones_like(inset)
        z -= np.where(m, ditch.depth * profile, 0.0)
        ditch_mask |= m
    for p in spec.pillars:
        z += np.where(np.hypot(X - p.x, Y - p.y) <= p.radius, p.height, 0.0)
    z = np.round(z / Z_QUANTUM) * Z_QUANTUM
    observed = np.where(ditch_mask, np.nan, z)
    height = HeightMap(grid, observed)
    maps = assess(height, assessment)
    true = z.copy()
    true.setflags(write=False)
    return Terrain(spec, grid, true, height, maps, tuple(rocks))


def difficulty_level(terrain, cuts: tuple = (0.15, 0.35)) -> str:
    """Level by mean tau over observed cells: easy below cuts[0], plain below cuts[1]."""
    lo, hi = cuts
    if not 0 <= lo < hi <= 1:
        raise ConfigError("difficulty cut points must satisfy 0 <= easy < plain <= 1")
    if isinstance(terrain, Terrain):
        m = terrain.mean_tau
    else:
        trav = terrain.trav.cells
        present = ~terrain.height.vacant
        m = float(trav[present].mean()) if present.any() else 1.0
    return "easy" if m < lo else "plain" if m < hi else "hard"


def sill_scenario(height: float = 0.2, seed: int = 0) -> TerrainSpec:
    """Flat ground with a raised band across the straight start-goal line."""
    return TerrainSpec(terrain_id="sill", extent=(7.0, 4.0), resolution=0.1,
                       sills=(Sill(x=3.5, y=2.0, angle=math.pi / 2, length=10.0, width=1.2, height=height),),
                       start=(1.0, 2.0, 0.0), goal=(6.0, 2.0, 0.0), seed=seed)


__all__ = ["Sill", "Rock", "Ditch", "Pillar", "TerrainSpec", "Terrain", "generate_terrain",
           "difficulty_level", "sill_scenario", "gradient_noise", "fractal_noise", "LEVELS"]
