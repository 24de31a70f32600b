"""Traversability-biased RRT* over Reeds-Shepp edges.

Nodes are proposed by rejection sampling against the weight
``rho = (1 - tau)(1 - gamma)``, connected with shortest Reeds-Shepp curves
sampled every ``delta_l`` metres, and scored per edge. An edge is rejected if
any of its sample points leaves the map, touches a blocked cell or has zero
weight, which keeps every accepted point out of constrained cells.

Edge cost forms:

* ``verbatim``: ``max(0, (1 + kappa * (1 / sum(rho) - n)) * l)``
* ``ratio``:    ``max(0, (1 + kappa * (n / sum(rho) - 1)) * l)``
* ``dem``:      ``l * (1 + kappa * mean|dz| / delta_l)`` (height-only baseline)

Because clamped costs are frequently zero, node comparisons are
lexicographic on (cost, path length).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import reeds_shepp as rs
from .errors import InvalidEdgeError, NoFeasibleSampleError, PlanningFailure
from .gridmap import GridSpec
from .traversability import TerrainMaps

PLANNER_MODES = ("tao", "dem", "tau_only", "putn_flatness")
COST_FORMS = ("verbatim", "ratio")
_MODE_CODES = {"verbatim": 0, "ratio": 1, "dem": 2}
_TIE = 1e-12


def _wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class SamplingBounds:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("sampling bounds must have positive extent")

    @classmethod
    def from_spec(cls, spec: GridSpec) -> "SamplingBounds":
        return cls(*spec.extent)


@dataclass(frozen=True)
class PlannerConfig:
    mode: str = "tao"
    cost_form: str = "verbatim"
    kappa: float = 5.0
    delta_l: float = 0.1
    turning_radius: float = 0.5
    max_extension: float = 1.5
    iterations: int = 5000
    stall_iterations: int = 500
    goal_bias: float = 0.05
    goal_tolerance: float = 0.5
    goal_heading_tolerance: float = math.radians(30.0)
    rewire_gamma: float = 10.0
    max_rejections: int = 100_000
    nominal_speed: float = 0.63
    speed_max: float = 1.0

    def __post_init__(self):
        if self.mode not in PLANNER_MODES:
            raise ValueError(f"unknown planner mode {self.mode!r}")
        if self.cost_form not in COST_FORMS:
            raise ValueError(f"unknown cost form {self.cost_form!r}")
        if self.delta_l <= 0 or self.turning_radius <= 0 or self.max_extension <= 0:
            raise ValueError("delta_l, turning_radius and max_extension must be positive")
        if self.iterations < 1 or self.stall_iterations < 1:
            raise ValueError("iteration budgets must be positive")
        if not 0 <= self.goal_bias < 1:
            raise ValueError("goal_bias must lie in [0, 1)")
        if not 0 < self.nominal_speed <= self.speed_max:
            raise ValueError("nominal_speed must lie in (0, speed_max]")


@dataclass
class Node:
    id: int
    position: np.ndarray
    heading: float
    tau: float
    gamma: int
    parent: int | None = None
    cost_from_start: float = 0.0
    length_from_start: float = 0.0


@dataclass(frozen=True)
class PathSegment:
    points: np.ndarray  # (n, 3), start pose excluded
    headings: np.ndarray
    directions: np.ndarray
    arc: np.ndarray
    length: float
    rho_values: np.ndarray
    tau_values: np.ndarray
    gamma_values: np.ndarray

    @property
    def size(self) -> int:
        return len(self.points)


@dataclass
class PlannedPath:
    positions: np.ndarray  # (N, 3)
    headings: np.ndarray
    directions: np.ndarray
    desired_speed: np.ndarray
    tau: np.ndarray
    total_cost: float = 0.0
    length: float = 0.0
    node_ids: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def xy(self) -> np.ndarray:
        return self.positions[:, :2]


def sampling_weight(tau, gamma):
    """rho = (1 - tau)(1 - gamma); works elementwise on arrays."""
    tau = np.asarray(tau, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any((tau < 0) | (tau > 1)) or np.any((gamma != 0) & (gamma != 1)):
        raise ValueError("tau must lie in [0, 1] and gamma in {0, 1}")
    rho = (1.0 - tau) * (1.0 - gamma)
    return float(rho) if rho.ndim == 0 else rho


def weight_grid(maps: TerrainMaps, mode: str = "tao") -> np.ndarray:
    """Per-cell sampling weight for a planner mode."""
    tau = maps.trav.cells
    if mode == "dem":
        return np.ones_like(tau)
    if mode == "tau_only":
        return 1.0 - tau
    return maps.rho


def rejection_sample(bounds: SamplingBounds, maps: TerrainMaps, rng: np.random.Generator,
                     weights: np.ndarray | None = None, max_iter: int = 100_000) -> Node:
    """Draw a node by accepting uniform proposals with probability rho."""
    rho = weight_grid(maps) if weights is None else weights
    spec = maps.spec
    (ox, oy), res = spec.origin, spec.resolution
    rows, cols = spec.shape
    for _ in range(max_iter):
        x = rng.uniform(bounds.x_min, bounds.x_max)
        y = rng.uniform(bounds.y_min, bounds.y_max)
        nu = rng.random()
        # Same floor as GridSpec.world_to_cell, without the array round trip.
        i = math.floor((y - oy) / res)
        j = math.floor((x - ox) / res)
        if not (0 <= i < rows and 0 <= j < cols):
            continue
        if nu < rho[i, j]:
            return Node(-1, np.array([x, y, maps.height.cells[i, j]]), 0.0,
                        float(maps.trav.cells[i, j]), int(maps.constraints.cells[i, j]))
    raise NoFeasibleSampleError(f"no sample accepted in {max_iter} proposals")


def steer(start, goal, turning_radius: float, delta_l: float, maps: TerrainMaps | None = None,
          max_extension: float = np.inf, weights: np.ndarray | None = None) -> PathSegment:
    """Shortest Reeds-Shepp curve from ``start`` toward ``goal`` sampled every ``delta_l``."""
    if turning_radius <= 0 or delta_l <= 0:
        raise ValueError("turning_radius and delta_l must be positive")
    word = rs.shortest_path(start, goal, turning_radius)
    xs, ys, hs, ds, ss = rs.sample_path(start, word, delta_l, max_extension)
    n = len(xs)
    if maps is not None and n:
        tau, gamma, z, inside = maps.lookup(xs, ys)
        rho = weight_grid(maps) if weights is None else weights
        i, j = maps.spec.world_to_cell(xs, ys)
        ic = np.clip(i, 0, maps.spec.height_cells - 1)
        jc = np.clip(j, 0, maps.spec.width_cells - 1)
        rho_v = np.where(inside, rho[ic, jc], 0.0)
    else:
        tau = np.zeros(n)
        gamma = np.zeros(n, dtype=int)
        z = np.zeros(n)
        rho_v = np.ones(n)
    points = np.column_stack([xs, ys, z]) if n else np.empty((0, 3))
    length = float(ss[-1]) if n else 0.0
    return PathSegment(points, _wrap(hs), ds, ss, length, rho_v, tau, np.asarray(gamma, dtype=int))


def edge_cost_raw(segment: PathSegment, kappa: float, form: str = "verbatim") -> float:
    if segment.size == 0:
        return 0.0
    if np.any(segment.gamma_values == 1):
        raise InvalidEdgeError("segment crosses a constrained cell")
    total = float(np.sum(segment.rho_values))
    if total <= 0:
        raise InvalidEdgeError("segment has zero sampling weight")
    n = segment.size
    if form == "verbatim":
        return (1.0 + kappa * (1.0 / total - n)) * segment.length
    if form == "ratio":
        return (1.0 + kappa * (n / total - 1.0)) * segment.length
    raise ValueError(f"unknown cost form {form!r}")


def edge_cost(segment: PathSegment, kappa: float, form: str = "verbatim") -> float:
    """Traversability edge cost, clamped at zero."""
    return max(0.0, edge_cost_raw(segment, kappa, form))


def dem_cost_baseline(segment: PathSegment, kappa: float = 5.0, delta_l: float = 0.1,
                      start_z: float | None = None) -> float:
    """Height-only baseline: ``l * (1 + kappa * mean|dz| / delta_l)``.

    Vacant elevations contribute no change.
    """
    if segment.size == 0 or segment.length == 0:
        return 0.0
    z = segment.points[:, 2]
    if start_z is not None:
        z = np.concatenate([[start_z], z])
    dz = np.abs(np.diff(z))
    steps = len(z) - 1 if start_z is not None else len(z)
    mean_dz = float(np.nansum(dz)) / max(steps, 1)
    return segment.length * (1.0 + kappa * mean_dz / delta_l)


@njit(cache=True)
def _evaluate_edge(x0, y0, th0, x1, y1, th1, radius, step, max_len,
                   rho, blocked, zmap, ox, oy, res, form, kappa):
    """Steer, sample and score one edge.

    Returns (ok, raw_cost, cost, length, end_x, end_y, end_heading, n_points).
    """
    types, lens, nseg, total = rs._shortest_word(x0, y0, th0, x1, y1, th1, radius)
    if nseg == 0 or total <= 0.0:
        return False, 0.0, 0.0, 0.0, x0, y0, th0, 0
    xs, ys, hs, ds, ss = rs._sample(x0, y0, th0, types, lens, nseg, radius, step, max_len)
    n = xs.shape[0]
    if n == 0:
        return False, 0.0, 0.0, 0.0, x0, y0, th0, 0
    height, width = rho.shape
    srho = 0.0
    sdz = 0.0
    i0 = int(math.floor((y0 - oy) / res))
    j0 = int(math.floor((x0 - ox) / res))
    prev = np.nan
    if 0 <= i0 < height and 0 <= j0 < width:
        prev = zmap[i0, j0]
    for k in range(n):
        i = int(math.floor((ys[k] - oy) / res))
        j = int(math.floor((xs[k] - ox) / res))
        if i < 0 or i >= height or j < 0 or j >= width:
            return False, 0.0, 0.0, 0.0, x0, y0, th0, 0
        if blocked[i, j]:
            return False, 0.0, 0.0, 0.0, x0, y0, th0, 0
        r = rho[i, j]
        if r <= 0.0:
            return False, 0.0, 0.0, 0.0, x0, y0, th0, 0
        srho += r
        zk = zmap[i, j]
        if not (np.isnan(zk) or np.isnan(prev)):
            sdz += abs(zk - prev)
        if not np.isnan(zk):
            prev = zk
    length = ss[n - 1]
    if form == 0:
        raw = (1.0 + kappa * (1.0 / srho - n)) * length
    elif form == 1:
        raw = (1.0 + kappa * (n / srho - 1.0)) * length
    else:
        raw = length * (1.0 + kappa * (sdz / n) / step)
    th = hs[n - 1]
    th = (th + math.pi) % (2.0 * math.pi) - math.pi
    return True, raw, max(0.0, raw), length, xs[n - 1], ys[n - 1], th, n


class SearchTree:
    """Array-backed RRT* tree with parent links and subtree cost propagation."""

    def __init__(self, pose, tau=0.0, gamma=0, z=0.0, capacity=1024):
        self.pose = np.zeros((capacity, 3))
        self.z = np.zeros(capacity)
        self.tau = np.zeros(capacity)
        self.gamma = np.zeros(capacity, dtype=np.int8)
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.cost = np.zeros(capacity)
        self.length = np.zeros(capacity)
        self.edge_cost = np.zeros(capacity)
        self.edge_raw = np.zeros(capacity)
        self.edge_length = np.zeros(capacity)
        self.children: list[set] = []
        self.size = 0
        self.add(pose, -1, 0.0, 0.0, 0.0, tau, gamma, z)

    def _grow(self):
        for name in ("pose", "z", "tau", "gamma", "parent", "cost", "length",
                     "edge_cost", "edge_raw", "edge_length"):
            arr = getattr(self, name)
            new = np.zeros((2 * len(arr),) + arr.shape[1:], dtype=arr.dtype)
            new[:len(arr)] = arr
            setattr(self, name, new)

    def add(self, pose, parent, cost, raw, length, tau, gamma, z) -> int:
        if self.size == len(self.cost):
            self._grow()
        k = self.size
        self.pose[k] = pose
        self.z[k] = z
        self.tau[k] = tau
        self.gamma[k] = gamma
        self.children.append(set())
        self.size += 1
        self._link(k, parent, cost, raw, length)
        return k

    def _link(self, k, parent, cost, raw, length):
        self.parent[k] = parent
        self.edge_cost[k] = cost
        self.edge_raw[k] = raw
        self.edge_length[k] = length
        if parent >= 0:
            self.children[parent].add(k)
            self.cost[k] = self.cost[parent] + cost
            self.length[k] = self.length[parent] + length
        else:
            self.cost[k] = 0.0
            self.length[k] = 0.0

    def rewire(self, k, parent, cost, raw, length):
        old = self.parent[k]
        if old >= 0:
            self.children[old].discard(k)
        before_c, before_l = self.cost[k], self.length[k]
        self._link(k, parent, cost, raw, length)
        dc = self.cost[k] - before_c
        dl = self.length[k] - before_l
        stack = list(self.children[k])
        while stack:
            c = stack.pop()
            self.cost[c] += dc
            self.length[c] += dl
            stack.extend(self.children[c])

    def chain(self, k) -> list[int]:
        out = []
        while k >= 0:
            out.append(int(k))
            k = self.parent[k]
        return out[::-1]

    def nodes(self) -> list[Node]:
        return [Node(k, np.array([*self.pose[k, :2], self.z[k]]), float(self.pose[k, 2]),
                     float(self.tau[k]), int(self.gamma[k]),
                     None if self.parent[k] < 0 else int(self.parent[k]),
                     float(self.cost[k]), float(self.length[k]))
                for k in range(self.size)]


def _better(c1, l1, c2, l2) -> bool:
    return c1 < c2 - _TIE or (abs(c1 - c2) <= _TIE and l1 < l2 - _TIE)


@dataclass
class PlanResult:
    path: PlannedPath
    tree: SearchTree
    stats: dict


class _Planner:
    def __init__(self, maps: TerrainMaps, config: PlannerConfig, rng, blocked=None, bounds=None):
        self.maps = maps
        self.cfg = config
        self.rng = rng
        spec = maps.spec
        self.spec = spec
        self.rho = np.ascontiguousarray(weight_grid(maps, config.mode), dtype=float)
        self.blocked = (np.zeros(spec.shape, dtype=np.bool_) if blocked is None
                        else np.ascontiguousarray(blocked, dtype=np.bool_))
        self.z = np.ascontiguousarray(maps.height.cells, dtype=float)
        self.form = _MODE_CODES["dem" if config.mode == "dem" else config.cost_form]
        self.bounds = bounds or SamplingBounds.from_spec(spec)
        # Rejection sampling uses the weight grid with blocked cells zeroed.
        self.sample_rho = np.where(self.blocked, 0.0, self.rho)

    def edge(self, a, b, max_len=np.inf):
        c = self.cfg
        return _evaluate_edge(float(a[0]), float(a[1]), float(a[2]), float(b[0]), float(b[1]), float(b[2]),
                              c.turning_radius, c.delta_l, max_len, self.rho, self.blocked, self.z,
                              self.spec.origin[0], self.spec.origin[1], self.spec.resolution,
                              self.form, c.kappa)

    def cell(self, x, y):
        i, j = self.spec.world_to_cell(x, y)
        if not self.spec.in_bounds(i, j):
            return None
        return i, j

    def draw(self):
        b = self.bounds
        spec = self.spec
        for _ in range(self.cfg.max_rejections):
            x = self.rng.uniform(b.x_min, b.x_max)
            y = self.rng.uniform(b.y_min, b.y_max)
            nu = self.rng.random()
            i, j = spec.world_to_cell(x, y)
            if spec.in_bounds(i, j) and nu < self.sample_rho[i, j]:
                return x, y
        raise NoFeasibleSampleError(f"no sample accepted in {self.cfg.max_rejections} proposals")

    def check_endpoint(self, pose, what):
        ij = self.cell(pose[0], pose[1])
        if ij is None:
            raise PlanningFailure(f"{what} lies outside the map", {"iterations": 0, "nodes": 0})
        if self.blocked[ij] or self.rho[ij] <= 0:
            raise PlanningFailure(f"{what} cell is not traversable", {"iterations": 0, "nodes": 0})
        return ij

    def run(self, start, goal) -> PlanResult:
        cfg = self.cfg
        start = np.array(start, dtype=float)
        goal = np.array(goal, dtype=float)
        si = self.check_endpoint(start, "start")
        self.check_endpoint(goal, "goal")
        tree = SearchTree(start, self.maps.trav.cells[si], self.maps.constraints.cells[si], self.z[si])
        r = cfg.turning_radius
        goal_nodes: list[int] = []
        best = -1
        best_key = (np.inf, np.inf)
        last_improve = 0
        it = 0
        rejected_edges = 0
        for it in range(1, cfg.iterations + 1):
            n = tree.size
            P = tree.pose[:n]
            if self.rng.random() < cfg.goal_bias:
                sx, sy, sth = goal
                d = np.hypot(P[:, 0] - sx, P[:, 1] - sy)
                metric = d + r * np.abs(_wrap(P[:, 2] - sth))
                near_i = int(np.argmin(metric))
                target = (sx, sy, sth)
            else:
                sx, sy = self.draw()
                d = np.hypot(P[:, 0] - sx, P[:, 1] - sy)
                bearing = np.arctan2(sy - P[:, 1], sx - P[:, 0])
                metric = d + r * np.abs(_wrap(P[:, 2] - bearing))
                near_i = int(np.argmin(metric))
                target = (sx, sy, float(bearing[near_i]))
            if d[near_i] < 1e-6:
                continue
            ok, *_, ex, ey, eth, npts = self.edge(P[near_i], target, cfg.max_extension)
            if not ok:
                rejected_edges += 1
                continue
            new = np.array([ex, ey, eth])
            dn = np.hypot(P[:, 0] - ex, P[:, 1] - ey)
            if dn.min() < 0.5 * cfg.delta_l:
                continue
            radius = cfg.rewire_gamma * math.sqrt(math.log(n + 1) / (n + 1))
            radius = min(max(radius, 2 * cfg.delta_l), cfg.max_extension)
            near = np.flatnonzero(dn <= radius)
            if near_i not in near:
                near = np.append(near, near_i)
            parent = -1
            pc = pl = np.inf
            edge = None
            for k in near:
                ok, raw, cost, length, *_ = self.edge(P[k], new)
                if not ok or length > 2 * cfg.max_extension:
                    continue
                c = tree.cost[k] + cost
                ln = tree.length[k] + length
                if parent < 0 or _better(c, ln, pc, pl):
                    parent, pc, pl, edge = int(k), c, ln, (cost, raw, length)
            if parent < 0:
                rejected_edges += 1
                continue
            ij = self.cell(ex, ey)
            k_new = tree.add(new, parent, edge[0], edge[1], edge[2],
                             self.maps.trav.cells[ij], self.maps.constraints.cells[ij], self.z[ij])
            for k in near:
                if k == parent:
                    continue
                ok, raw, cost, length, *_ = self.edge(new, tree.pose[k])
                if not ok or length > 2 * cfg.max_extension:
                    continue
                if _better(tree.cost[k_new] + cost, tree.length[k_new] + length, tree.cost[k], tree.length[k]):
                    tree.rewire(int(k), k_new, cost, raw, length)
            if (np.hypot(ex - goal[0], ey - goal[1]) <= cfg.goal_tolerance
                    and abs(_wrap(eth - goal[2])) <= cfg.goal_heading_tolerance):
                goal_nodes.append(k_new)
            if goal_nodes:
                ids = np.array(goal_nodes)
                order = np.lexsort((tree.length[ids], tree.cost[ids]))
                cand = int(ids[order[0]])
                key = (tree.cost[cand], tree.length[cand])
                if best < 0 or _better(key[0], key[1], best_key[0], best_key[1]):
                    last_improve = it
                best, best_key = cand, key
                if it - last_improve >= cfg.stall_iterations:
                    break
        stats = {"iterations": it, "nodes": tree.size, "rejected_edges": rejected_edges,
                 "goal_nodes": len(goal_nodes)}
        if best < 0:
            P = tree.pose[:tree.size]
            stats["closest_goal_distance"] = float(np.min(np.hypot(P[:, 0] - goal[0], P[:, 1] - goal[1])))
            raise PlanningFailure("no path reached the goal region within the iteration budget", stats, tree)
        stats["cost"] = float(tree.cost[best])
        stats["length"] = float(tree.length[best])
        return PlanResult(self.extract(tree, best), tree, stats)

    def extract(self, tree: SearchTree, leaf: int) -> PlannedPath:
        cfg = self.cfg
        ids = tree.chain(leaf)
        pts = [np.array([*tree.pose[ids[0], :2], tree.z[ids[0]]])]
        heads = [tree.pose[ids[0], 2]]
        dirs = [1]
        for a, b in zip(ids[:-1], ids[1:]):
            seg = steer(tree.pose[a], tree.pose[b], cfg.turning_radius, cfg.delta_l, self.maps, weights=self.rho)
            pts.extend(seg.points)
            heads.extend(seg.headings)
            dirs.extend(seg.directions)
        if len(dirs) > 1:
            dirs[0] = dirs[1]
        positions = np.array(pts)
        tau, _, _, _ = self.maps.lookup(positions[:, 0], positions[:, 1])
        path = PlannedPath(positions, np.array(heads), np.array(dirs, dtype=int),
                           np.zeros(len(positions)), np.asarray(tau, dtype=float),
                           float(tree.cost[leaf]), float(tree.length[leaf]), ids)
        return assign_desired_velocity(path, cfg.nominal_speed, cfg.speed_max)


def plan_with_tree(start, goal, maps: TerrainMaps, config: PlannerConfig = PlannerConfig(),
                   rng=None, blocked=None, bounds=None) -> PlanResult:
    """Plan and also return the search tree and run statistics."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return _Planner(maps, config, rng, blocked, bounds).run(start, goal)


def plan(start, goal, maps: TerrainMaps, config: PlannerConfig = PlannerConfig(),
         rng=None, blocked=None, bounds=None) -> PlannedPath:
    """Minimum-cost path from ``start`` to the goal region; raises PlanningFailure."""
    return plan_with_tree(start, goal, maps, config, rng, blocked, bounds).path


def assign_desired_velocity(path: PlannedPath, zeta_nominal: float, speed_max: float = 1.0) -> PlannedPath:
    if not 0 < zeta_nominal <= speed_max:
        raise ValueError("nominal speed must lie in (0, speed_max]")
    path.desired_speed = np.full(len(path), float(zeta_nominal))
    return path


PATH_FIELDS = ("x", "y", "z", "heading", "desired_speed", "tau")


def write_path_csv(path_file, path: PlannedPath) -> None:
    with open(path_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PATH_FIELDS)
        for p, h, v, t in zip(path.positions, path.headings, path.desired_speed, path.tau):
            w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])),
                        repr(float(h)), repr(float(v)), repr(float(t))])


def read_path_csv(path_file) -> PlannedPath:
    with open(path_file, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(PATH_FIELDS) - set(rows[0]):
        raise ValueError(f"{path_file}: expected columns {','.join(PATH_FIELDS)}")
    arr = np.array([[float(r[k]) for k in PATH_FIELDS] for r in rows])
    positions = arr[:, :3]
    heads = arr[:, 3]
    # Driving direction is implied by heading vs. displacement.
    step = np.diff(positions[:, :2], axis=0)
    dirs = np.ones(len(arr), dtype=int)
    if len(arr) > 1:
        along = np.cos(heads[1:]) * step[:, 0] + np.sin(heads[1:]) * step[:, 1]
        dirs[1:] = np.where(along < 0, -1, 1)
        dirs[0] = dirs[1]
    seg = np.hypot(step[:, 0], step[:, 1]) if len(arr) > 1 else np.zeros(0)
    return PlannedPath(positions, heads, dirs, arr[:, 4], arr[:, 5], 0.0, float(seg.sum()))


def write_tree_csv(path_file, tree: SearchTree) -> None:
    with open(path_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "parent", "x", "y", "heading", "edge_cost", "edge_cost_raw",
                    "edge_length", "cost_from_start"])
        for k in range(tree.size):
            w.writerow([k, int(tree.parent[k]), repr(float(tree.pose[k, 0])), repr(float(tree.pose[k, 1])),
                        repr(float(tree.pose[k, 2])), repr(float(tree.edge_cost[k])),
                        repr(float(tree.edge_raw[k])), repr(float(tree.edge_length[k])),
                        repr(float(tree.cost[k]))])


def path_is_clear(path: PlannedPath, maps: TerrainMaps) -> bool:
    """True if no waypoint sits on a constrained or off-map cell."""
    _, gamma, _, inside = maps.lookup(path.positions[:, 0], path.positions[:, 1])
    return bool(np.all(inside) and np.all(gamma == 0))


__all__ = [
    "SamplingBounds", "PlannerConfig", "Node", "PathSegment", "PlannedPath", "SearchTree", "PlanResult",
    "sampling_weight", "weight_grid", "rejection_sample", "steer", "edge_cost", "edge_cost_raw",
    "dem_cost_baseline", "plan", "plan_with_tree", "assign_desired_velocity",
    "write_path_csv", "read_path_csv", "write_tree_csv", "path_is_clear",
]
