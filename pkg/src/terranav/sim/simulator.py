"""Kinematic skid-steer simulator on a heightfield with a traction and step model.

Each tick applies the unicycle model, then scales forward progress by a
traction factor ``clip(1 - climb_grade / grade_max, 0, 1)`` taken from the
footprint-sized plane under the robot. Progress is blocked outright when the
terrain rises by more than the ground clearance between the current and the
tentative position, unless the commanded speed reaches ``zeta_surmount``.
The robot then settles on the footprint plane, which sets its height, pitch,
roll and forward axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..controller import (ControlInput, ControllerConfig, ControlMaps, RobotState, Tracker,
                          motion_step, wrap_angle)
from ..errors import PlanningFailure
from ..gridmap import HeightMap, fit_kernels
from ..planner import PlannedPath, PlannerConfig, plan
from .metrics import EpisodeResult, compute_metrics
from .terrain import Terrain

FAILURES = ("none", "stuck", "collision", "rollover", "timeout", "plan_failure")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    grade_max: float = math.tan(math.radians(25.0))
    zeta_surmount: float = 0.6
    tipover_max: float = math.radians(35.0)
    ground_clearance: float = 0.13
    footprint_radius: float = 0.4
    stuck_window: float = 30.0
    stuck_pos_eps: float = 0.05
    stuck_ang_eps: float = 0.1
    max_steps: int = 3000


@dataclass
class SimRobot:
    x: float
    y: float
    theta: float
    z: float = 0.0
    forward_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    roll: float = 0.0
    pitch: float = 0.0
    realized_speed: float = 0.0
    footprint_radius: float = 0.4
    ground_clearance: float = 0.13
    flags: tuple = ()

    @property
    def state(self) -> RobotState:
        return RobotState(self.x, self.y, self.theta)


class FootprintSurface:
    """Per-cell planes fitted over the robot footprint on the true heightfield."""

    def __init__(self, terrain: Terrain, footprint_radius: float):
        grid = terrain.grid
        side = 2 * int(round(footprint_radius / grid.resolution)) + 1
        fits = fit_kernels(HeightMap(grid, terrain.true_height), side)
        self.grid = grid
        self.height = terrain.true_height
        self.centroids = fits.centroids
        self.normals = fits.normals

    def cell(self, x, y):
        i, j = self.grid.world_to_cell(x, y)
        return (i, j) if self.grid.in_bounds(i, j) else None

    def plane(self, x, y):
        """(z, normal) of the footprint plane under (x, y), or None off the map."""
        ij = self.cell(x, y)
        if ij is None:
            return None
        n = self.normals[ij]
        c = self.centroids[ij]
        if not np.isfinite(n[0]) or abs(n[2]) < 1e-9:
            return float(self.height[ij]), np.array([0.0, 0.0, 1.0])
        z = c[2] - (n[0] * (x - c[0]) + n[1] * (y - c[1])) / n[2]
        return float(z), n

    def max_height_along(self, x0, y0, x1, y1) -> float:
        """Highest true cell elevation on the segment between two points."""
        step = 0.5 * self.grid.resolution
        n = max(int(math.ceil(math.hypot(x1 - x0, y1 - y0) / step)), 1)
        t = np.linspace(0.0, 1.0, n + 1)[1:]
        i, j = self.grid.world_to_cell(x0 + t * (x1 - x0), y0 + t * (y1 - y0))
        ok = self.grid.in_bounds(i, j)
        if not np.any(ok):
            return -np.inf
        return float(np.max(self.height[i[ok], j[ok]]))


def _attitude(theta: float, normal: np.ndarray):
    """Forward axis in the ground plane, plus pitch and roll angles."""
    h = np.array([math.cos(theta), math.sin(theta), 0.0])
    f = h - (h @ normal) * normal
    f /= np.linalg.norm(f)
    lateral = np.cross(normal, f)
    pitch = math.asin(max(-1.0, min(1.0, f[2])))
    roll = math.asin(max(-1.0, min(1.0, lateral[2])))
    return f, pitch, roll


def settle(robot: SimRobot, surface: FootprintSurface) -> SimRobot:
    got = surface.plane(robot.x, robot.y)
    if got is None:
        return robot
    z, n = got
    f, pitch, roll = _attitude(robot.theta, n)
    robot.z = z
    robot.forward_axis = f
    robot.pitch = pitch
    robot.roll = roll
    return robot


def traction_factor(normal: np.ndarray, direction_xy, grade_max: float) -> float:
    """``clip(1 - climb_grade / grade_max, 0, 1)`` for motion along ``direction_xy``."""
    if abs(normal[2]) < 1e-9:
        return 0.0
    gx = -normal[0] / normal[2]
    gy = -normal[1] / normal[2]
    climb = gx * direction_xy[0] + gy * direction_xy[1]
    return float(min(1.0, max(0.0, 1.0 - climb / grade_max)))


def sim_step(robot: SimRobot, u: ControlInput, terrain: Terrain, dt: float,
             config: SimConfig = SimConfig(), surface: FootprintSurface | None = None) -> SimRobot:
    """Advance one tick; failures are reported through ``robot.flags``."""
    surface = surface or FootprintSurface(terrain, robot.footprint_radius)
    tentative = motion_step(robot.state, u, dt)
    dx = tentative.x - robot.x
    dy = tentative.y - robot.y
    factor = 1.0
    if u.zeta != 0.0:
        sign = 1.0 if u.zeta > 0 else -1.0
        direction = (sign * math.cos(robot.theta), sign * math.sin(robot.theta))
        got = surface.plane(robot.x, robot.y)
        if got is not None:
            factor = traction_factor(got[1], direction, config.grade_max)
        here = surface.cell(robot.x, robot.y)
        if here is not None:
            rise = surface.max_height_along(robot.x, robot.y, tentative.x, tentative.y) - surface.height[here]
            if rise > robot.ground_clearance and abs(u.zeta) < config.zeta_surmount:
                factor = 0.0
    new = replace(robot, x=robot.x + factor * dx, y=robot.y + factor * dy, theta=tentative.theta,
                  realized_speed=factor * u.zeta, flags=())
    flags = []
    if surface.cell(new.x, new.y) is None:
        flags.append("collision")
    elif terrain.collides(new.x, new.y, robot.footprint_radius):
        flags.append("collision")
    else:
        settle(new, surface)
        if abs(new.pitch) > config.tipover_max or abs(new.roll) > config.tipover_max:
            flags.append("rollover")
    new.flags = tuple(flags)
    return new


def detect_stuck(positions, headings, window: float = 30.0, pos_eps: float = 0.05,
                 ang_eps: float = 0.1, dt: float = 0.1) -> bool:
    """True when the trailing ``window`` seconds show negligible motion.

    Position change is the diameter of the trailing point set and heading
    change the range of the unwrapped headings.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    n = int(round(window / dt)) + 1
    if len(positions) < n:
        return False
    P = np.asarray(positions[-n:], dtype=float)
    last = P[-1]
    # Any point far from the latest one already rules stuck out.
    if np.max(np.hypot(P[:, 0] - last[0], P[:, 1] - last[1])) >= pos_eps:
        return False
    H = np.unwrap(np.asarray(headings[-n:], dtype=float))
    if H.max() - H.min() >= ang_eps:
        return False
    d = P[:, None, :] - P[None, :, :]
    return bool(np.sqrt(np.max(np.einsum("ijk,ijk->ij", d, d))) < pos_eps)


def straight_path(terrain: Terrain, start=None, goal=None, speed: float = 0.63,
                  spacing: float = 0.1) -> PlannedPath:
    """Forward-driving straight-line path with a constant desired speed.

    Used by scenarios that fix the route so only the controller differs.
    """
    start = np.asarray(terrain.spec.start if start is None else start, dtype=float)
    goal = np.asarray(terrain.spec.goal if goal is None else goal, dtype=float)
    length = float(math.hypot(*(goal[:2] - start[:2])))
    n = max(int(math.ceil(length / spacing)), 1) + 1
    xy = start[:2] + np.linspace(0.0, 1.0, n)[:, None] * (goal[:2] - start[:2])
    tau, _, z, _ = terrain.maps.lookup(xy[:, 0], xy[:, 1])
    heading = math.atan2(goal[1] - start[1], goal[0] - start[0])
    return PlannedPath(np.column_stack([xy, np.nan_to_num(z)]), np.full(n, heading), np.ones(n, dtype=int),
                       np.full(n, float(speed)), np.asarray(tau, dtype=float), length=length)


def run_episode(terrain: Terrain, start=None, goal=None, planner_config: PlannerConfig = PlannerConfig(),
                controller_config: ControllerConfig = ControllerConfig(), seed: int = 0, *,
                path=None, sim_config: SimConfig = SimConfig(), blocked=None,
                keep_log: bool = True) -> EpisodeResult:
    """Plan once (unless ``path`` is given), then track until done or failed."""
    start = terrain.spec.start if start is None else start
    goal = terrain.spec.goal if goal is None else goal
    ss = np.random.SeedSequence(seed)
    plan_rng, ctrl_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    if path is None:
        if blocked is None:
            blocked = terrain.obstacle_mask(sim_config.footprint_radius)
        try:
            path = plan(start, goal, terrain.maps, planner_config, plan_rng, blocked=blocked)
        except PlanningFailure as exc:
            return EpisodeResult.plan_failure(str(exc))
    surface = FootprintSurface(terrain, sim_config.footprint_radius)
    robot = settle(SimRobot(float(start[0]), float(start[1]), wrap_angle(float(start[2])),
                            footprint_radius=sim_config.footprint_radius,
                            ground_clearance=sim_config.ground_clearance), surface)
    cmaps = ControlMaps.from_terrain(terrain.maps, controller_config.kernel_side)
    tracker = Tracker(path, terrain.maps, controller_config, ctrl_rng, cmaps)
    dt = sim_config.dt
    traj = [(0.0, robot.x, robot.y, robot.theta, robot.z, 0.0)]
    positions = [(robot.x, robot.y)]
    headings = [robot.theta]
    gaps = []
    reason = "timeout"
    success = False
    steps = 0
    while steps < sim_config.max_steps:
        out = tracker.step(robot.state, robot.forward_axis)
        if out.done:
            success, reason = True, "none"
            break
        predicted = motion_step(robot.state, out.control, dt)
        robot = sim_step(robot, out.control, terrain, dt, sim_config, surface)
        steps += 1
        gaps.append(math.hypot(predicted.x - robot.x, predicted.y - robot.y))
        traj.append((steps * dt, robot.x, robot.y, robot.theta, robot.z, robot.realized_speed))
        positions.append((robot.x, robot.y))
        headings.append(robot.theta)
        if robot.flags:
            reason = robot.flags[0]
            break
        if detect_stuck(positions, headings, sim_config.stuck_window, sim_config.stuck_pos_eps,
                        sim_config.stuck_ang_eps, dt):
            reason = "stuck"
            break
    trajectory = np.array(traj)
    metrics = compute_metrics(trajectory, path, terrain, np.array(gaps))
    if success and metrics["progress"] < 0.99:
        success, reason = False, "timeout"
    return EpisodeResult(success=success, steps=steps, failure_reason=reason, trajectory=trajectory,
                         control_log=tracker.log if keep_log else [], path=path, **metrics)


__all__ = ["SimConfig", "SimRobot", "FootprintSurface", "sim_step", "settle", "traction_factor",
           "detect_stuck", "run_episode", "straight_path", "FAILURES"]
