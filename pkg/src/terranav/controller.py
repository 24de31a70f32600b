"""Receding-horizon path tracking over the skid-steer kinematic model.

Per-step objective::

    ||s_{k+1} - s^d||_Q^2 + ||u_k||^2_{R_k} + W_k (zeta_k - v^d_k)^2

summed over the horizon, plus ``lambda * C_tau``. ``R_k`` grows as
``(1 - mean kernel tau)^-2`` at the state where ``u_k`` is applied and
``W_k = (1 + k_q * max(0, tan psi_k)) * W_v``. The vanilla mode pins both at
their base values.

The state error is measured either to the nearest point on the reference
polyline (``contour``, the default) or to time-indexed reference states
(``time``). Contouring leaves speed to the velocity and control terms, which
is what lets the adaptive weights change how fast the robot drives.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.ndimage import uniform_filter

from .errors import SaturatedTerrainError
from .traversability import TerrainMaps, relative_traversability_batch

# Cap on the (1 - tau)^-2 scale so saturated kernels stay finite inside rollouts.
_R_SCALE_CAP = 1e6


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.theta)):
            raise ValueError("state must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class ControlInput:
    zeta: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.zeta, self.omega])


@dataclass(frozen=True)
class ControlBounds:
    zeta_min: float = -0.3
    zeta_max: float = 1.0
    omega_max: float = 1.5

    def __post_init__(self):
        if not (self.zeta_min <= 0 < self.zeta_max and self.omega_max > 0):
            raise ValueError("invalid control bounds")

    def clip(self, u: np.ndarray) -> np.ndarray:
        out = np.array(u, dtype=float, copy=True)
        out[..., 0] = np.clip(out[..., 0], self.zeta_min, self.zeta_max)
        out[..., 1] = np.clip(out[..., 1], -self.omega_max, self.omega_max)
        return out

    def contains(self, u: ControlInput) -> bool:
        return self.zeta_min <= u.zeta <= self.zeta_max and abs(u.omega) <= self.omega_max


@dataclass(frozen=True)
class ObjectiveWeights:
    Q: tuple = (10.0, 10.0, 1.0)
    R: tuple = (0.5, 0.5)
    W_v: float = 3.0
    k_q: float = 5.0
    lambda_open: float = 1.0
    horizon: int = 20
    dt: float = 0.1

    def __post_init__(self):
        if len(self.Q) != 3 or len(self.R) != 2:
            raise ValueError("Q needs 3 and R needs 2 diagonal entries")
        if min(self.Q) <= 0 or min(self.R) <= 0 or self.W_v <= 0:
            raise ValueError("Q, R and W_v must be positive")
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon must be >= 1 and dt > 0")
        if self.lambda_open < 0 or self.k_q < 0:
            raise ValueError("lambda_open and k_q must be non-negative")


@dataclass(frozen=True)
class MPPIConfig:
    n_rollouts: int = 256
    noise_std: tuple = (0.15, 0.3)
    temperature: float = 1.0
    iterations: int = 3  # sample-and-average passes per control tick

    def __post_init__(self):
        if self.n_rollouts < 1 or self.temperature <= 0 or min(self.noise_std) < 0 or self.iterations < 1:
            raise ValueError("invalid MPPI settings")


@dataclass(frozen=True)
class MPCConfig:
    iterations: int = 15
    step_size: float = 0.05
    fd_step: float = 1e-5
    max_backtracks: int = 12

    def __post_init__(self):
        if self.iterations < 0 or self.step_size <= 0 or self.fd_step <= 0:
            raise ValueError("invalid MPC settings")


@dataclass(frozen=True)
class ControllerConfig:
    solver: str = "mppi"
    adaptive: bool = True
    state_error: str = "contour"
    weights: ObjectiveWeights = ObjectiveWeights()
    bounds: ControlBounds = ControlBounds()
    mppi: MPPIConfig = MPPIConfig()
    mpc: MPCConfig = MPCConfig()
    open_samples: int = 16
    open_radius: float = 0.3
    kernel_side: int = 5
    goal_tolerance: float = 0.3
    lookbehind: float = 0.3
    lookahead: float = 2.5
    completion: float = 0.995

    def __post_init__(self):
        if self.solver not in ("mppi", "mpc"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.state_error not in ("contour", "time"):
            raise ValueError(f"unknown state_error {self.state_error!r}")
        if self.open_samples < 1 or self.open_radius <= 0:
            raise ValueError("open-space sampling needs n >= 1 and radius > 0")


# ---------------------------------------------------------------- model

def motion_step(s: RobotState, u: ControlInput, dt: float) -> RobotState:
    return RobotState(s.x + u.zeta * math.cos(s.theta) * dt,
                      s.y + u.zeta * math.sin(s.theta) * dt,
                      wrap_angle(s.theta + u.omega * dt))


@njit(cache=True)
def _wrap(a):
    return math.pi - ((math.pi - a) % (2.0 * math.pi))


@njit(cache=True)
def _rollout(s0, U, dt):
    T = U.shape[0]
    out = np.empty((T + 1, 3))
    out[0] = s0
    x, y, th = s0[0], s0[1], s0[2]
    for k in range(T):
        x = x + U[k, 0] * math.cos(th) * dt
        y = y + U[k, 0] * math.sin(th) * dt
        th = _wrap(th + U[k, 1] * dt)
        out[k + 1, 0] = x
        out[k + 1, 1] = y
        out[k + 1, 2] = th
    return out


def rollout(s0: RobotState, controls, dt: float) -> list[RobotState]:
    """Apply ``motion_step`` sequentially; returns T + 1 states including ``s0``."""
    states = [s0]
    for u in controls:
        if not isinstance(u, ControlInput):
            u = ControlInput(float(u[0]), float(u[1]))
        states.append(motion_step(states[-1], u, dt))
    return states


def rollout_array(s0, U, dt) -> np.ndarray:
    return _rollout(np.asarray(s0, dtype=float), np.asarray(U, dtype=float).reshape(-1, 2), float(dt))


# ---------------------------------------------------------------- adaptive weights

def adaptive_R(kernel_taus, R) -> np.ndarray:
    taus = np.asarray(kernel_taus, dtype=float)
    if taus.size == 0:
        raise ValueError("kernel_taus must be non-empty")
    m = float(taus.mean())
    if m >= 1.0:
        raise SaturatedTerrainError("mean kernel traversability is 1; control weight unbounded")
    return np.asarray(R, dtype=float) / (1.0 - m) ** 2


def adaptive_W(psi: float, k_q: float, W_v: float) -> float:
    if not abs(psi) < math.pi / 2:
        raise ValueError("|psi| must be below pi/2")
    return (1.0 + k_q * max(0.0, math.tan(psi))) * W_v


def r_scale_map(maps: TerrainMaps, kernel_side: int = 5) -> np.ndarray:
    """(1 - mean kernel tau)^-2 per cell, capped for saturated kernels."""
    mean = uniform_filter(maps.trav.cells.astype(float), size=kernel_side, mode="nearest")
    gap = np.maximum(1.0 - mean, 0.0)
    with np.errstate(divide="ignore"):
        scale = np.where(gap > 0, 1.0 / np.maximum(gap, 1e-300) ** 2, _R_SCALE_CAP)
    return np.minimum(scale, _R_SCALE_CAP)


@dataclass(frozen=True)
class ControlMaps:
    """Grids the controller reads: tau, R scale, heights and normals."""

    tau: np.ndarray
    r_scale: np.ndarray
    height: np.ndarray
    normals: np.ndarray
    origin: tuple
    resolution: float

    @classmethod
    def from_terrain(cls, maps: TerrainMaps, kernel_side: int = 5) -> "ControlMaps":
        spec = maps.spec
        return cls(np.ascontiguousarray(maps.trav.cells, dtype=float),
                   np.ascontiguousarray(r_scale_map(maps, kernel_side)),
                   np.ascontiguousarray(maps.height.cells, dtype=float),
                   np.ascontiguousarray(maps.normals.cells, dtype=float),
                   spec.origin, spec.resolution)

    def cell(self, x, y):
        j = np.floor((np.asarray(x) - self.origin[0]) / self.resolution).astype(np.int64)
        i = np.floor((np.asarray(y) - self.origin[1]) / self.resolution).astype(np.int64)
        h, w = self.tau.shape
        inside = (i >= 0) & (i < h) & (j >= 0) & (j < w)
        return np.clip(i, 0, h - 1), np.clip(j, 0, w - 1), inside

    def tau_at(self, x, y):
        i, j, inside = self.cell(x, y)
        return np.where(inside, self.tau[i, j], 1.0)

    def r_scale_at(self, x, y):
        i, j, inside = self.cell(x, y)
        return np.where(inside, self.r_scale[i, j], _R_SCALE_CAP)


def open_space_offsets(n_states: int, n_samples: int, radius: float, rng) -> np.ndarray:
    """Uniform points in a disc, (n_states, n_samples, 2)."""
    if n_samples < 1 or radius <= 0:
        raise ValueError("need n_samples >= 1 and radius > 0")
    r = radius * np.sqrt(rng.random((n_states, n_samples)))
    a = rng.uniform(-np.pi, np.pi, (n_states, n_samples))
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)


def open_space_cost(predicted_states, trav, n_samples: int = 16, radius: float = 0.3, rng=None,
                    offsets: np.ndarray | None = None) -> float:
    """Mean tau over random points in a disc around each state; off-map reads 1."""
    states = np.asarray([s.as_array() if isinstance(s, RobotState) else s for s in predicted_states],
                        dtype=float).reshape(-1, 3)
    if offsets is None:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        offsets = open_space_offsets(len(states), n_samples, radius, rng)
    pts = states[:, None, :2] + offsets
    if isinstance(trav, ControlMaps):
        tau = trav.tau_at(pts[..., 0], pts[..., 1])
    else:
        tau, _, _, _ = trav.lookup(pts[..., 0].ravel(), pts[..., 1].ravel())
    return float(np.mean(tau))


# ---------------------------------------------------------------- references

@dataclass
class ReferenceWindow:
    """Horizon references for one solve.

    ``states[k]`` is the desired state for ``s_{k+1}``; ``speeds[k]`` and
    ``psi[k]`` go with control ``u_k``; ``polyline`` is the local path
    (x, y, heading) used for contouring errors.
    """

    states: np.ndarray
    speeds: np.ndarray
    psi: np.ndarray
    polyline: np.ndarray
    start_index: int = 0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 3)
        self.speeds = np.asarray(self.speeds, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        T = len(self.states)
        if len(self.speeds) != T or len(self.psi) != T:
            raise ValueError("reference window arrays must all have length T")
        if self.polyline is None:
            self.polyline = self.states
        self.polyline = np.ascontiguousarray(np.asarray(self.polyline, dtype=float).reshape(-1, 3))

    @property
    def horizon(self) -> int:
        return len(self.states)


def step_weights(refs: ReferenceWindow, weights: ObjectiveWeights, adaptive: bool = True) -> np.ndarray:
    if not adaptive:
        return np.full(refs.horizon, weights.W_v)
    return np.array([adaptive_W(float(p), weights.k_q, weights.W_v) for p in refs.psi])


# ---------------------------------------------------------------- cost kernel

@njit(cache=True)
def _closest(px, py, poly, lo, hi):
    """Closest point on polyline segments lo..hi-1; returns (dx, dy, heading, segment)."""
    best = 1e300
    bx = by = bh = 0.0
    bi = lo
    m = poly.shape[0]
    if m == 1:
        return px - poly[0, 0], py - poly[0, 1], poly[0, 2], 0
    for s in range(lo, hi):
        ax, ay = poly[s, 0], poly[s, 1]
        vx, vy = poly[s + 1, 0] - ax, poly[s + 1, 1] - ay
        vv = vx * vx + vy * vy
        t = 0.0
        if vv > 0.0:
            t = ((px - ax) * vx + (py - ay) * vy) / vv
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
        cx = ax + t * vx
        cy = ay + t * vy
        d = (px - cx) * (px - cx) + (py - cy) * (py - cy)
        if d < best:
            best = d
            bx = px - cx
            by = py - cy
            h0 = poly[s, 2]
            bh = h0 + t * _wrap(poly[s + 1, 2] - h0)
            bi = s
    return bx, by, bh, bi


@njit(cache=True)
def _sequence_cost(s0, U, dt, contour, refs, poly, start_idx, Q, Rb, Wk, vd,
                   adapt_r, rscale, tau, offsets, lam, ox, oy, res, parts):
    """Objective of one control sequence; fills ``parts`` with the term breakdown."""
    T = U.shape[0]
    h, w = tau.shape
    x, y, th = s0[0], s0[1], s0[2]
    idx = start_idx
    nseg = poly.shape[0] - 1
    state_c = 0.0
    ctrl_c = 0.0
    vel_c = 0.0
    open_c = 0.0
    n_open = 0
    for k in range(T):
        z = U[k, 0]
        om = U[k, 1]
        scale = 1.0
        if adapt_r:
            i = int(math.floor((y - oy) / res))
            j = int(math.floor((x - ox) / res))
            if 0 <= i < h and 0 <= j < w:
                scale = rscale[i, j]
            else:
                scale = 1e6
        ctrl_c += scale * (Rb[0] * z * z + Rb[1] * om * om)
        dv = z - vd[k]
        vel_c += Wk[k] * dv * dv
        x = x + z * math.cos(th) * dt
        y = y + z * math.sin(th) * dt
        th = _wrap(th + om * dt)
        if contour:
            if nseg <= 0:
                dx, dy, hr, idx = _closest(x, y, poly, 0, 0)
            else:
                lo = max(idx - 2, 0)
                hi = min(idx + 4, nseg)
                dx, dy, hr, idx = _closest(x, y, poly, lo, hi)
        else:
            dx = x - refs[k, 0]
            dy = y - refs[k, 1]
            hr = refs[k, 2]
        dth = _wrap(th - hr)
        state_c += Q[0] * dx * dx + Q[1] * dy * dy + Q[2] * dth * dth
        if lam != 0.0:
            for m in range(offsets.shape[1]):
                qx = x + offsets[k, m, 0]
                qy = y + offsets[k, m, 1]
                i = int(math.floor((qy - oy) / res))
                j = int(math.floor((qx - ox) / res))
                if 0 <= i < h and 0 <= j < w:
                    open_c += tau[i, j]
                else:
                    open_c += 1.0
                n_open += 1
    c_tau = open_c / n_open if n_open > 0 else 0.0
    parts[0] = state_c
    parts[1] = ctrl_c
    parts[2] = vel_c
    parts[3] = c_tau
    return state_c + ctrl_c + vel_c + lam * c_tau


@njit(cache=True)
def _batch_cost(s0, Us, dt, contour, refs, poly, start_idx, Q, Rb, Wk, vd,
                adapt_r, rscale, tau, offsets, lam, ox, oy, res):
    n = Us.shape[0]
    out = np.empty(n)
    parts = np.empty(4)
    for r in range(n):
        out[r] = _sequence_cost(s0, Us[r], dt, contour, refs, poly, start_idx, Q, Rb, Wk, vd,
                                adapt_r, rscale, tau, offsets, lam, ox, oy, res, parts)
    return out


class _Problem:
    """Everything fixed during one solve, packed for the numba kernels."""

    def __init__(self, s0, refs: ReferenceWindow, cmaps: ControlMaps, weights: ObjectiveWeights,
                 offsets, adaptive=True, contour=True):
        self.s0 = np.asarray(s0.as_array() if isinstance(s0, RobotState) else s0, dtype=float)
        self.refs = refs
        self.weights = weights
        self.cmaps = cmaps
        self.offsets = np.ascontiguousarray(offsets, dtype=float)
        self.adaptive = adaptive
        self.contour = contour
        self.Wk = step_weights(refs, weights, adaptive)
        self.Q = np.asarray(weights.Q, dtype=float)
        self.Rb = np.asarray(weights.R, dtype=float)

    def costs(self, Us, lam=None):
        lam = self.weights.lambda_open if lam is None else lam
        m = self.cmaps
        return _batch_cost(self.s0, np.ascontiguousarray(Us, dtype=float), self.weights.dt, self.contour,
                           self.refs.states, self.refs.polyline, int(self.refs.start_index), self.Q, self.Rb,
                           self.Wk, self.refs.speeds, self.adaptive, m.r_scale, m.tau, self.offsets,
                           float(lam), m.origin[0], m.origin[1], m.resolution)

    def cost(self, U, lam=None):
        return float(self.costs(np.asarray(U, dtype=float)[None], lam)[0])

    def breakdown(self, U) -> dict:
        m = self.cmaps
        parts = np.empty(4)
        total = _sequence_cost(self.s0, np.ascontiguousarray(U, dtype=float), self.weights.dt, self.contour,
                               self.refs.states, self.refs.polyline, int(self.refs.start_index), self.Q,
                               self.Rb, self.Wk, self.refs.speeds, self.adaptive, m.r_scale, m.tau,
                               self.offsets, float(self.weights.lambda_open), m.origin[0], m.origin[1],
                               m.resolution, parts)
        return {"state": parts[0], "control": parts[1], "velocity": parts[2], "open_space": parts[3],
                "total": total}


# ---------------------------------------------------------------- objective (reference form)

def _closest_py(p, poly):
    best = None
    for s in range(max(len(poly) - 1, 1)):
        a = poly[s]
        b = poly[min(s + 1, len(poly) - 1)]
        v = b[:2] - a[:2]
        vv = float(v @ v)
        t = 0.0 if vv == 0 else min(max(float((p[:2] - a[:2]) @ v) / vv, 0.0), 1.0)
        c = a[:2] + t * v
        d = float((p[:2] - c) @ (p[:2] - c))
        if best is None or d < best[0]:
            best = (d, p[:2] - c, a[2] + t * wrap_angle(b[2] - a[2]))
    return best[1], best[2]


def objective(states, controls, refs: ReferenceWindow, weights: ObjectiveWeights, maps,
              rng=None, *, adaptive: bool = True, state_error: str = "time",
              offsets: np.ndarray | None = None, n_samples: int = 16, radius: float = 0.3,
              breakdown: bool = False):
    """Evaluate the tracking objective on explicit state and control sequences.

    ``states`` holds T + 1 states starting at the current one. ``maps`` is a
    :class:`ControlMaps` or :class:`TerrainMaps`. With ``state_error="contour"``
    the state error is taken to the nearest point of ``refs.polyline`` (the
    whole polyline, unlike the windowed search used inside rollouts).
    """
    S = np.asarray([s.as_array() if isinstance(s, RobotState) else s for s in states], dtype=float)
    U = np.asarray([u.as_array() if isinstance(u, ControlInput) else u for u in controls], dtype=float)
    T = len(U)
    if S.shape != (T + 1, 3) or refs.horizon != T:
        raise ValueError("states must have T + 1 rows and refs T rows")
    cm = maps if isinstance(maps, ControlMaps) else ControlMaps.from_terrain(maps)
    Q = np.asarray(weights.Q)
    R = np.asarray(weights.R)
    Wk = step_weights(refs, weights, adaptive)
    state_c = ctrl_c = vel_c = 0.0
    for k in range(T):
        if state_error == "contour":
            d, href = _closest_py(S[k + 1], refs.polyline)
        else:
            d, href = S[k + 1, :2] - refs.states[k, :2], refs.states[k, 2]
        dth = wrap_angle(S[k + 1, 2] - href)
        state_c += Q[0] * d[0] ** 2 + Q[1] * d[1] ** 2 + Q[2] * dth ** 2
        scale = float(cm.r_scale_at(S[k, 0], S[k, 1])) if adaptive else 1.0
        ctrl_c += scale * float(R @ U[k] ** 2)
        vel_c += Wk[k] * (U[k, 0] - refs.speeds[k]) ** 2
    c_tau = 0.0
    if weights.lambda_open != 0:
        if offsets is None:
            rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
            offsets = open_space_offsets(T, n_samples, radius, rng)
        c_tau = open_space_cost(S[1:], cm, offsets=offsets)
    total = state_c + ctrl_c + vel_c + weights.lambda_open * c_tau
    if breakdown:
        return {"state": state_c, "control": ctrl_c, "velocity": vel_c, "open_space": c_tau, "total": total}
    return total


# ---------------------------------------------------------------- solvers

def _as_generator(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _nominal(refs: ReferenceWindow, nominal):
    if nominal is None:
        return np.column_stack([refs.speeds, np.zeros(refs.horizon)])
    U = np.array(nominal, dtype=float).reshape(-1, 2)
    if len(U) != refs.horizon:
        raise ValueError("nominal sequence length must equal the horizon")
    return U


def solve_mppi(s0, refs: ReferenceWindow, maps, weights: ObjectiveWeights = ObjectiveWeights(),
               mppi_config: MPPIConfig = MPPIConfig(), rng=None, *, nominal=None,
               bounds: ControlBounds = ControlBounds(), adaptive: bool = True,
               state_error: str = "contour", open_samples: int = 16, open_radius: float = 0.3,
               return_info: bool = False):
    """One MPPI update of the nominal control sequence.

    Sample 0 is the nominal itself; the rest add clipped Gaussian noise.
    Returns ``(U, predicted_states)`` and optionally a diagnostics dict.
    """
    rng = _as_generator(rng)
    cm = maps if isinstance(maps, ControlMaps) else ControlMaps.from_terrain(maps)
    U0 = bounds.clip(_nominal(refs, nominal))
    T = refs.horizon
    offsets = open_space_offsets(T, open_samples, open_radius, rng)
    prob = _Problem(s0, refs, cm, weights, offsets, adaptive, state_error == "contour")
    n = mppi_config.n_rollouts
    sigma = np.asarray(mppi_config.noise_std, dtype=float)
    U = U0
    for _ in range(mppi_config.iterations):
        noise = rng.standard_normal((n, T, 2)) * sigma
        noise[0] = 0.0
        samples = bounds.clip(U[None] + noise)
        costs = prob.costs(samples)
        shifted = costs - costs.min()
        w = np.exp(-shifted / mppi_config.temperature)
        w /= w.sum()
        U = bounds.clip(np.tensordot(w, samples, axes=1))
    states = rollout_array(prob.s0, U, weights.dt)
    if return_info:
        info = {"cost_nominal": prob.cost(U0), "cost": prob.cost(U), "prob": prob,
                "breakdown": prob.breakdown(U), "weights_k": prob.Wk}
        return U, states, info
    return U, states


def solve_mpc_gradient(s0, refs: ReferenceWindow, maps, weights: ObjectiveWeights = ObjectiveWeights(),
                       mpc_config: MPCConfig = MPCConfig(), rng=None, *, nominal=None,
                       bounds: ControlBounds = ControlBounds(), adaptive: bool = True,
                       state_error: str = "contour", open_samples: int = 16, open_radius: float = 0.3,
                       return_info: bool = False):
    """Projected gradient descent with backtracking on the full objective.

    Gradients come from central differences of the smooth terms (the
    open-space term is excluded); all 4T perturbed sequences are costed in one
    batch.
    """
    rng = _as_generator(rng)
    cm = maps if isinstance(maps, ControlMaps) else ControlMaps.from_terrain(maps)
    U = bounds.clip(_nominal(refs, nominal))
    T = refs.horizon
    offsets = open_space_offsets(T, open_samples, open_radius, rng)
    prob = _Problem(s0, refs, cm, weights, offsets, adaptive, state_error == "contour")
    J = prob.cost(U)
    history = [J]
    step = mpc_config.step_size
    for _ in range(mpc_config.iterations):
        g = finite_difference_gradient(prob, U, mpc_config.fd_step)
        improved = False
        alpha = step
        for _ in range(mpc_config.max_backtracks):
            cand = bounds.clip(U - alpha * g)
            Jc = prob.cost(cand)
            if Jc <= J:
                improved = Jc < J
                U, J = cand, Jc
                break
            alpha *= 0.5
        history.append(J)
        if not improved:
            break
        step = min(alpha * 2.0, 1.0)
    states = rollout_array(prob.s0, U, weights.dt)
    if return_info:
        return U, states, {"history": history, "cost": J, "prob": prob, "weights_k": prob.Wk}
    return U, states


def finite_difference_gradient(prob: _Problem, U, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the smooth objective terms (lambda = 0)."""
    U = np.asarray(U, dtype=float)
    T = len(U)
    n = 2 * T
    eye = np.eye(n).reshape(n, T, 2) * h
    batch = np.concatenate([U[None] + eye, U[None] - eye])
    c = prob.costs(batch, lam=0.0)
    return ((c[:n] - c[n:]) / (2 * h)).reshape(T, 2)


# ---------------------------------------------------------------- tracker

@dataclass
class TrackStep:
    control: ControlInput
    done: bool
    psi: float = 0.0
    r_scale: float = 1.0
    w_k: float = 0.0
    objective: float = 0.0
    predicted: np.ndarray | None = None
    progress: float = 0.0


LOG_FIELDS = ("t", "x", "y", "theta", "zeta", "omega", "psi", "Rk_scale", "Wk", "objective")


class Tracker:
    """Receding-horizon tracker for a planned path.

    Keeps an arc-length watermark so the projection stays local on paths
    that fold back at cusps, and warm-starts each solve from the previous
    sequence shifted by one step.
    """

    def __init__(self, path, maps: TerrainMaps, config: ControllerConfig = ControllerConfig(),
                 rng=None, cmaps: ControlMaps | None = None):
        if len(path) == 0:
            raise ValueError("cannot track an empty path")
        self.path = path
        self.maps = maps
        self.cfg = config
        self.rng = _as_generator(rng)
        self.cmaps = cmaps or ControlMaps.from_terrain(maps, config.kernel_side)
        xy = np.asarray(path.positions, dtype=float)[:, :2]
        self.xy = xy
        self.heads = np.asarray(path.headings, dtype=float)
        self.dirs = np.asarray(getattr(path, "directions", np.ones(len(xy))), dtype=float)
        self.speeds = np.asarray(path.desired_speed, dtype=float)
        seg = np.hypot(*np.diff(xy, axis=0).T) if len(xy) > 1 else np.zeros(0)
        self.arc = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self.arc[-1])
        self.progress = 0.0
        self.nominal = None
        self.log: list[tuple] = []
        self.t = 0.0

    # -- geometry
    def project(self, x, y):
        """Arc position of the nearest path point within a window around the watermark."""
        if len(self.xy) == 1:
            return 0.0
        lo = np.searchsorted(self.arc, self.progress - self.cfg.lookbehind, side="right") - 1
        hi = np.searchsorted(self.arc, self.progress + 1.0, side="left") + 1
        lo = max(lo, 0)
        hi = min(max(hi, lo + 2), len(self.xy))
        a = self.xy[lo:hi - 1]
        b = self.xy[lo + 1:hi]
        v = b - a
        vv = np.einsum("ij,ij->i", v, v)
        p = np.array([x, y])
        t = np.where(vv > 0, np.einsum("ij,ij->i", p - a, v) / np.where(vv > 0, vv, 1), 0.0)
        t = np.clip(t, 0, 1)
        c = a + t[:, None] * v
        d = np.einsum("ij,ij->i", p - c, p - c)
        k = int(np.argmin(d))
        return float(self.arc[lo + k] + t[k] * (self.arc[lo + k + 1] - self.arc[lo + k]))

    def _interp(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0, self.length)
        if len(self.xy) == 1:
            n = np.size(s)
            return (np.repeat(self.xy[:1], n, axis=0), np.repeat(self.heads[:1], n),
                    np.repeat(self.dirs[:1], n), np.repeat(self.speeds[:1], n))
        idx = np.clip(np.searchsorted(self.arc, s, side="right") - 1, 0, len(self.arc) - 2)
        span = self.arc[idx + 1] - self.arc[idx]
        t = np.where(span > 0, (s - self.arc[idx]) / np.where(span > 0, span, 1), 0.0)
        xy = self.xy[idx] + t[:, None] * (self.xy[idx + 1] - self.xy[idx])
        h = self.heads[idx] + t * wrap_angle(self.heads[idx + 1] - self.heads[idx])
        near = np.where(t < 0.5, idx, idx + 1)
        return xy, wrap_angle(h), self.dirs[np.minimum(idx + 1, len(self.dirs) - 1)], self.speeds[near]

    def reference(self, state: RobotState, forward=None) -> ReferenceWindow:
        cfg = self.cfg
        T = cfg.weights.horizon
        dt = cfg.weights.dt
        s_proj = self.project(state.x, state.y)
        self.progress = s_proj
        _, _, _, v0 = self._interp(np.array([s_proj]))
        v = float(v0[0])
        arcs = s_proj + np.arange(T + 1) * v * dt
        xy, hd, dr, sp = self._interp(arcs)
        states = np.column_stack([xy[1:], hd[1:]])
        speeds = sp[:T] * dr[1:]
        psi = self._psi(xy, dr, state, forward)
        lo = max(np.searchsorted(self.arc, s_proj - cfg.lookbehind, side="right") - 1, 0)
        hi = min(np.searchsorted(self.arc, s_proj + cfg.lookahead, side="left") + 1, len(self.xy))
        hi = max(hi, min(lo + 2, len(self.xy)))
        poly = np.column_stack([self.xy[lo:hi], self.heads[lo:hi]])
        seg_idx = int(np.clip(np.searchsorted(self.arc, s_proj, side="right") - 1 - lo, 0, max(len(poly) - 2, 0)))
        return ReferenceWindow(states, speeds, psi, poly, seg_idx)

    def _psi(self, xy, dirs, state: RobotState, forward):
        cm = self.cmaps
        i, j, inside = cm.cell(xy[:, 0], xy[:, 1])
        z = np.where(inside, cm.height[i, j], np.nan)
        if forward is None:
            forward = np.array([math.cos(state.theta), math.sin(state.theta), 0.0])
        forward = np.asarray(forward, dtype=float)
        p = np.column_stack([np.diff(xy, axis=0), np.diff(z)])
        normals = np.where(inside[:-1, None], cm.normals[i[:-1], j[:-1]], np.nan)
        sign = np.where(dirs[1:] >= 0, 1.0, -1.0)
        psi = np.zeros(len(p))
        for d in (1.0, -1.0):
            rows = sign == d
            if rows.any():
                psi[rows] = relative_traversability_batch(d * forward, normals[rows], p[rows])
        # Unknown frames fall back to zero; clipping keeps tan finite for W_k.
        return np.clip(np.nan_to_num(psi, nan=0.0), -1.5, 1.5)

    def at_goal(self, state: RobotState) -> bool:
        end = self.xy[-1]
        near_end = math.hypot(state.x - end[0], state.y - end[1]) <= self.cfg.goal_tolerance
        return near_end and self.progress >= self.cfg.completion * self.length

    def step(self, state: RobotState, forward=None) -> TrackStep:
        cfg = self.cfg
        refs = self.reference(state, forward)
        if self.at_goal(state):
            out = TrackStep(ControlInput(0.0, 0.0), True, progress=self.progress)
            self._record(state, out)
            return out
        solve = solve_mppi if cfg.solver == "mppi" else solve_mpc_gradient
        sub = cfg.mppi if cfg.solver == "mppi" else cfg.mpc
        U, states, info = solve(state, refs, self.cmaps, cfg.weights, sub, self.rng, nominal=self.nominal,
                                bounds=cfg.bounds, adaptive=cfg.adaptive, state_error=cfg.state_error,
                                open_samples=cfg.open_samples, open_radius=cfg.open_radius,
                                return_info=True)
        self.nominal = np.vstack([U[1:], U[-1:]])
        scale = float(self.cmaps.r_scale_at(state.x, state.y)) if cfg.adaptive else 1.0
        out = TrackStep(ControlInput(float(U[0, 0]), float(U[0, 1])), False, float(refs.psi[0]),
                        scale, float(info["weights_k"][0]), float(info["cost"]), states, self.progress)
        self._record(state, out)
        return out

    def _record(self, state: RobotState, out: TrackStep):
        self.log.append((self.t, state.x, state.y, state.theta, out.control.zeta, out.control.omega,
                         out.psi, out.r_scale, out.w_k, out.objective))
        self.t = round(self.t + self.cfg.weights.dt, 10)


def track(path, s0: RobotState, maps: TerrainMaps, config: ControllerConfig = ControllerConfig(),
          rng=None, max_steps: int = 3000):
    """Closed-loop tracking on the nominal model; yields one TrackStep per tick."""
    tracker = Tracker(path, maps, config, rng)
    s = s0
    for _ in range(max_steps):
        out = tracker.step(s)
        yield out
        if out.done:
            return
        s = motion_step(s, out.control, config.weights.dt)


def write_control_log(path_file, rows) -> None:
    with open(path_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_FIELDS)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


__all__ = [
    "RobotState", "ControlInput", "ControlBounds", "ObjectiveWeights", "MPPIConfig", "MPCConfig",
    "ControllerConfig", "ReferenceWindow", "ControlMaps", "Tracker", "TrackStep",
    "motion_step", "rollout", "rollout_array", "adaptive_R", "adaptive_W", "r_scale_map",
    "open_space_cost", "open_space_offsets", "objective", "solve_mppi", "solve_mpc_gradient",
    "finite_difference_gradient", "track", "write_control_log", "wrap_angle",
]
