"""Episode metrics and the per-episode result record."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

SUMMARY_FIELDS = ("terrain_id", "level", "planner", "controller", "adaptive", "seed", "success", "steps",
                  "progress", "aeg_mm", "trav_pct", "cte_cm", "incons_cm", "failure_reason")
TRAJECTORY_FIELDS = ("t", "x", "y", "theta", "z", "speed")


def _segments(path_xy: np.ndarray):
    a = path_xy[:-1]
    b = path_xy[1:]
    v = b - a
    vv = np.einsum("ij,ij->i", v, v)
    return a, v, vv


def distance_to_path(points, path_xy) -> np.ndarray:
    """Distance from each point to the nearest segment of a polyline."""
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    path_xy = np.asarray(path_xy, dtype=float).reshape(-1, 2)
    if len(path_xy) == 1:
        return np.hypot(*(P - path_xy[0]).T)
    a, v, vv = _segments(path_xy)
    d = P[:, None, :] - a[None]
    t = np.where(vv > 0, np.einsum("pij,ij->pi", d, v) / np.where(vv > 0, vv, 1), 0.0)
    t = np.clip(t, 0, 1)
    c = a[None] + t[..., None] * v[None]
    return np.sqrt(np.min(np.sum((P[:, None, :] - c) ** 2, axis=-1), axis=1))


def progress_watermark(points, path_xy, lookbehind: float = 0.3, lookahead: float = 1.0) -> float:
    """Furthest arc length reached, projecting each point near the running watermark."""
    path_xy = np.asarray(path_xy, dtype=float).reshape(-1, 2)
    if len(path_xy) < 2:
        return 0.0
    a, v, vv = _segments(path_xy)
    arc = np.concatenate([[0.0], np.cumsum(np.sqrt(vv))])
    mark = 0.0
    current = 0.0
    for p in np.asarray(points, dtype=float).reshape(-1, 2):
        lo = max(np.searchsorted(arc, current - lookbehind, side="right") - 1, 0)
        hi = min(np.searchsorted(arc, current + lookahead, side="left") + 1, len(a))
        hi = max(hi, lo + 1)
        d = p - a[lo:hi]
        t = np.where(vv[lo:hi] > 0, np.einsum("ij,ij->i", d, v[lo:hi]) / np.where(vv[lo:hi] > 0, vv[lo:hi], 1), 0)
        t = np.clip(t, 0, 1)
        c = a[lo:hi] + t[:, None] * v[lo:hi]
        k = int(np.argmin(np.sum((p - c) ** 2, axis=1)))
        current = arc[lo + k] + t[k] * (arc[lo + k + 1] - arc[lo + k])
        mark = max(mark, current)
    return float(mark)


def compute_metrics(trajectory, path, terrain, gaps=None) -> dict:
    """Metric bundle for one run.

    ``trajectory`` rows are (t, x, y, theta, z, speed); ``gaps`` holds the
    per-tick distance between the one-step model prediction and the realized
    position.
    """
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim != 2 or len(traj) == 0:
        raise ValueError("trajectory must be non-empty")
    xy = traj[:, 1:3]
    path_xy = np.asarray(path.positions, dtype=float)[:, :2]
    length = float(np.sum(np.hypot(*np.diff(path_xy, axis=0).T))) if len(path_xy) > 1 else 0.0
    z = traj[:, 4]
    aeg = float(np.mean(np.abs(np.diff(z)))) * 1000.0 if len(z) > 1 else 0.0
    tau = np.asarray(path.tau, dtype=float)
    trav_sum = float(tau.sum())
    trav_pct = 100.0 * trav_sum / len(tau) if len(tau) else 0.0
    cte = float(np.mean(distance_to_path(xy, path_xy))) * 100.0
    gaps = np.zeros(0) if gaps is None else np.asarray(gaps, dtype=float)
    incons = float(np.mean(gaps)) * 100.0 if len(gaps) else 0.0
    progress = min(1.0, progress_watermark(xy, path_xy) / length) if length > 0 else 1.0
    return {"progress": progress, "aeg": aeg, "path_traversability": trav_pct, "trav_sum": trav_sum,
            "cte": cte, "inconsistency": incons}


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    progress: float
    aeg: float
    path_traversability: float
    cte: float
    inconsistency: float
    failure_reason: str = "none"
    trav_sum: float = 0.0
    trajectory: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)), repr=False)
    control_log: list = field(default_factory=list, repr=False)
    path: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.success and (self.failure_reason != "none" or self.steps > 3000):
            raise ValueError("a successful episode has no failure reason and at most 3000 steps")

    @classmethod
    def plan_failure(cls, message: str = "") -> "EpisodeResult":
        r = cls(False, 0, 0.0, 0.0, 0.0, 0.0, 0.0, "plan_failure")
        r.message = message
        return r

    def summary(self) -> dict:
        return {"success": int(self.success), "steps": self.steps, "progress": round(self.progress, 6),
                "aeg_mm": round(self.aeg, 6), "trav_pct": round(self.path_traversability, 6),
                "cte_cm": round(self.cte, 6), "incons_cm": round(self.inconsistency, 6),
                "failure_reason": self.failure_reason}

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.summary()).encode())
        h.update(np.ascontiguousarray(self.trajectory).tobytes())
        return h.hexdigest()


__all__ = ["EpisodeResult", "compute_metrics", "distance_to_path", "progress_watermark",
           "SUMMARY_FIELDS", "TRAJECTORY_FIELDS"]
