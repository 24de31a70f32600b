"""Shortest Reeds-Shepp curves by word enumeration.

Poses are expressed in the start frame and scaled to a unit turning radius;
every candidate word family (CSC, CCC, CCCC, CCSC, CCSCC) is tried under the
time-flip / reflection / backwards symmetries and the shortest feasible word
wins. Segment codes: ``1`` left arc, ``-1`` right arc, ``0`` straight. Signed
segment lengths are in radians (arcs) or radius units (straights); the sign
gives the driving direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

_PI = math.pi
_HALF_PI = 0.5 * math.pi
_ZERO = 10 * np.finfo(float).eps
_MAX_WORDS = 64

L, S, R = 1, 0, -1


@njit(cache=True)
def _mod2pi(x):
    v = np.fmod(x, 2.0 * _PI)
    if v < -_PI:
        v += 2.0 * _PI
    elif v > _PI:
        v -= 2.0 * _PI
    return v


@njit(cache=True)
def _polar(x, y):
    return math.sqrt(x * x + y * y), math.atan2(y, x)


@njit(cache=True)
def _tau_omega(u, v, xi, eta, phi):
    delta = _mod2pi(u - v)
    a = math.sin(u) - math.sin(delta)
    b = math.cos(u) - math.cos(delta) - 1.0
    t1 = math.atan2(eta * a - xi * b, xi * a + eta * b)
    t2 = 2.0 * (math.cos(delta) - math.cos(v) - math.cos(u)) + 3.0
    tau = _mod2pi(t1 + _PI) if t2 < 0 else _mod2pi(t1)
    omega = _mod2pi(tau - u + v - phi)
    return tau, omega


@njit(cache=True)
def _lp_sp_lp(x, y, phi):
    u, t = _polar(x - math.sin(phi), y - 1.0 + math.cos(phi))
    if t >= -_ZERO:
        v = _mod2pi(phi - t)
        if v >= -_ZERO:
            return True, t, u, v
    return False, 0.0, 0.0, 0.0


@njit(cache=True)
def _lp_sp_rp(x, y, phi):
    u1, t1 = _polar(x + math.sin(phi), y - 1.0 - math.cos(phi))
    u1 = u1 * u1
    if u1 >= 4.0:
        u = math.sqrt(u1 - 4.0)
        theta = math.atan2(2.0, u)
        t = _mod2pi(t1 + theta)
        v = _mod2pi(t - phi)
        if t >= -_ZERO and v >= -_ZERO:
            return True, t, u, v
    return False, 0.0, 0.0, 0.0


@njit(cache=True)
def _lp_rm_l(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    u1, theta = _polar(xi, eta)
    if u1 <= 4.0:
        u = -2.0 * math.asin(0.25 * u1)
        t = _mod2pi(theta + 0.5 * u + _PI)
        v = _mod2pi(phi - t + u)
        if t >= -_ZERO and u <= _ZERO:
            return True, t, u, v
    return False, 0.0, 0.0, 0.0


@njit(cache=True)
def _lp_rup_lum_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = 0.25 * (2.0 + math.sqrt(xi * xi + eta * eta))
    if rho <= 1.0:
        u = math.acos(rho)
        t, v = _tau_omega(u, -u, xi, eta, phi)
        if t >= -_ZERO and v <= _ZERO:
            return True, t, u, v
    return False, 0.0, 0.0, 0.0


@njit(cache=True)
def _lp_rum_lum_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = (20.0 - xi * xi - eta * eta) / 16.0
    if 0.0 <= rho <= 1.0:
        u = -math.acos(rho)
        if u >= -_HALF_PI:
            t, v = _tau_omega(u, u, xi, eta, phi)
            if t >= -_ZERO and v >= -_ZERO:
                return True, t, u, v
    return False, 0.0, 0.0, 0.0


@njit(cache=True)
def _lp_rm_sm_lm(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    rho, theta = _polar(xi, eta)
    if rho >= 2.0:
        r = math.sqrt(rho * rho - 4.0)
        u = 2.0 - r
        t = _mod2pi(theta + math.atan2(r, -2.0))
        v = _mod2pi(phi - _HALF_PI - t)
        if t >= -_ZERO and u <= _ZERO and v <= _ZERO:
            return True, t, u, v
    return False, 0.0, 0.0, 0.0


@njit(cache=True)
def _lp_rm_sm_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, theta = _polar(-eta, xi)
    if rho >= 2.0:
        t = theta
        u = 2.0 - rho
        v = _mod2pi(t + _HALF_PI - phi)
        if t >= -_ZERO and u <= _ZERO and v <= _ZERO:
            return True, t, u, v
    return False, 0.0, 0.0, 0.0


@njit(cache=True)
def _lp_rm_s_lm_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, theta = _polar(xi, eta)
    if rho >= 2.0:
        u = 4.0 - math.sqrt(rho * rho - 4.0)
        if u <= _ZERO:
            t = _mod2pi(math.atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta))
            v = _mod2pi(t - phi)
            if t >= -_ZERO and v >= -_ZERO:
                return True, t, u, v
    return False, 0.0, 0.0, 0.0


@njit(cache=True)
def _push(types, lens, counts, n, t0, t1, t2, t3, t4, l0, l1, l2, l3, l4, k):
    types[n, 0] = t0
    types[n, 1] = t1
    types[n, 2] = t2
    types[n, 3] = t3
    types[n, 4] = t4
    lens[n, 0] = l0
    lens[n, 1] = l1
    lens[n, 2] = l2
    lens[n, 3] = l3
    lens[n, 4] = l4
    counts[n] = k
    return n + 1


@njit(cache=True)
def _enumerate(x, y, phi):
    """All feasible words for a unit-radius goal pose (x, y, phi) in the start frame."""
    types = np.zeros((_MAX_WORDS, 5), dtype=np.int64)
    lens = np.zeros((_MAX_WORDS, 5))
    counts = np.zeros(_MAX_WORDS, dtype=np.int64)
    n = 0
    h = _HALF_PI

    # CSC
    ok, t, u, v = _lp_sp_lp(x, y, phi)
    if ok:
        n = _push(types, lens, counts, n, 1, 0, 1, 0, 0, t, u, v, 0.0, 0.0, 3)
    ok, t, u, v = _lp_sp_lp(-x, y, -phi)
    if ok:
        n = _push(types, lens, counts, n, 1, 0, 1, 0, 0, -t, -u, -v, 0.0, 0.0, 3)
    ok, t, u, v = _lp_sp_lp(x, -y, -phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 0, -1, 0, 0, t, u, v, 0.0, 0.0, 3)
    ok, t, u, v = _lp_sp_lp(-x, -y, phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 0, -1, 0, 0, -t, -u, -v, 0.0, 0.0, 3)
    ok, t, u, v = _lp_sp_rp(x, y, phi)
    if ok:
        n = _push(types, lens, counts, n, 1, 0, -1, 0, 0, t, u, v, 0.0, 0.0, 3)
    ok, t, u, v = _lp_sp_rp(-x, y, -phi)
    if ok:
        n = _push(types, lens, counts, n, 1, 0, -1, 0, 0, -t, -u, -v, 0.0, 0.0, 3)
    ok, t, u, v = _lp_sp_rp(x, -y, -phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 0, 1, 0, 0, t, u, v, 0.0, 0.0, 3)
    ok, t, u, v = _lp_sp_rp(-x, -y, phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 0, 1, 0, 0, -t, -u, -v, 0.0, 0.0, 3)

    # CCC, forwards and backwards
    xb = x * math.cos(phi) + y * math.sin(phi)
    yb = x * math.sin(phi) - y * math.cos(phi)
    ok, t, u, v = _lp_rm_l(x, y, phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 1, 0, 0, t, u, v, 0.0, 0.0, 3)
    ok, t, u, v = _lp_rm_l(-x, y, -phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 1, 0, 0, -t, -u, -v, 0.0, 0.0, 3)
    ok, t, u, v = _lp_rm_l(x, -y, -phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, -1, 0, 0, t, u, v, 0.0, 0.0, 3)
    ok, t, u, v = _lp_rm_l(-x, -y, phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, -1, 0, 0, -t, -u, -v, 0.0, 0.0, 3)
    ok, t, u, v = _lp_rm_l(xb, yb, phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 1, 0, 0, v, u, t, 0.0, 0.0, 3)
    ok, t, u, v = _lp_rm_l(-xb, yb, -phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 1, 0, 0, -v, -u, -t, 0.0, 0.0, 3)
    ok, t, u, v = _lp_rm_l(xb, -yb, -phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, -1, 0, 0, v, u, t, 0.0, 0.0, 3)
    ok, t, u, v = _lp_rm_l(-xb, -yb, phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, -1, 0, 0, -v, -u, -t, 0.0, 0.0, 3)

    # CCCC
    ok, t, u, v = _lp_rup_lum_rm(x, y, phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 1, -1, 0, t, u, -u, v, 0.0, 4)
    ok, t, u, v = _lp_rup_lum_rm(-x, y, -phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 1, -1, 0, -t, -u, u, -v, 0.0, 4)
    ok, t, u, v = _lp_rup_lum_rm(x, -y, -phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, -1, 1, 0, t, u, -u, v, 0.0, 4)
    ok, t, u, v = _lp_rup_lum_rm(-x, -y, phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, -1, 1, 0, -t, -u, u, -v, 0.0, 4)
    ok, t, u, v = _lp_rum_lum_rp(x, y, phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 1, -1, 0, t, u, u, v, 0.0, 4)
    ok, t, u, v = _lp_rum_lum_rp(-x, y, -phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 1, -1, 0, -t, -u, -u, -v, 0.0, 4)
    ok, t, u, v = _lp_rum_lum_rp(x, -y, -phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, -1, 1, 0, t, u, u, v, 0.0, 4)
    ok, t, u, v = _lp_rum_lum_rp(-x, -y, phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, -1, 1, 0, -t, -u, -u, -v, 0.0, 4)

    # CCSC
    ok, t, u, v = _lp_rm_sm_lm(x, y, phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 0, 1, 0, t, -h, u, v, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_lm(-x, y, -phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 0, 1, 0, -t, h, -u, -v, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_lm(x, -y, -phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, 0, -1, 0, t, -h, u, v, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_lm(-x, -y, phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, 0, -1, 0, -t, h, -u, -v, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_rm(x, y, phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 0, -1, 0, t, -h, u, v, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_rm(-x, y, -phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 0, -1, 0, -t, h, -u, -v, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_rm(x, -y, -phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, 0, 1, 0, t, -h, u, v, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_rm(-x, -y, phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, 0, 1, 0, -t, h, -u, -v, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_lm(xb, yb, phi)
    if ok:
        n = _push(types, lens, counts, n, 1, 0, -1, 1, 0, v, u, -h, t, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_lm(-xb, yb, -phi)
    if ok:
        n = _push(types, lens, counts, n, 1, 0, -1, 1, 0, -v, -u, h, -t, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_lm(xb, -yb, -phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 0, 1, -1, 0, v, u, -h, t, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_lm(-xb, -yb, phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 0, 1, -1, 0, -v, -u, h, -t, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_rm(xb, yb, phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 0, -1, 1, 0, v, u, -h, t, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_rm(-xb, yb, -phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 0, -1, 1, 0, -v, -u, h, -t, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_rm(xb, -yb, -phi)
    if ok:
        n = _push(types, lens, counts, n, 1, 0, 1, -1, 0, v, u, -h, t, 0.0, 4)
    ok, t, u, v = _lp_rm_sm_rm(-xb, -yb, phi)
    if ok:
        n = _push(types, lens, counts, n, 1, 0, 1, -1, 0, -v, -u, h, -t, 0.0, 4)

    # CCSCC
    ok, t, u, v = _lp_rm_s_lm_rp(x, y, phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 0, 1, -1, t, -h, u, -h, v, 5)
    ok, t, u, v = _lp_rm_s_lm_rp(-x, y, -phi)
    if ok:
        n = _push(types, lens, counts, n, 1, -1, 0, 1, -1, -t, h, -u, h, -v, 5)
    ok, t, u, v = _lp_rm_s_lm_rp(x, -y, -phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, 0, -1, 1, t, -h, u, -h, v, 5)
    ok, t, u, v = _lp_rm_s_lm_rp(-x, -y, phi)
    if ok:
        n = _push(types, lens, counts, n, -1, 1, 0, -1, 1, -t, h, -u, h, -v, 5)
    return types[:n], lens[:n], counts[:n]


@njit(cache=True)
def _shortest_word(x0, y0, th0, x1, y1, th1, radius):
    dx = (x1 - x0) / radius
    dy = (y1 - y0) / radius
    c = math.cos(th0)
    s = math.sin(th0)
    x = c * dx + s * dy
    y = -s * dx + c * dy
    phi = _mod2pi(th1 - th0)
    types, lens, counts = _enumerate(x, y, phi)
    best = -1
    best_len = np.inf
    for k in range(types.shape[0]):
        total = 0.0
        for m in range(counts[k]):
            total += abs(lens[k, m])
        if total < best_len:
            best_len = total
            best = k
    out_t = np.zeros(5, dtype=np.int64)
    out_l = np.zeros(5)
    if best < 0:
        return out_t, out_l, 0, np.inf
    for m in range(counts[best]):
        out_t[m] = types[best, m]
        out_l[m] = lens[best, m]
    return out_t, out_l, counts[best], best_len * radius


@njit(cache=True)
def _advance(x, y, th, kind, ds, radius):
    """Pose after travelling signed arc length ``ds`` (metres) on one segment."""
    if kind == 0:
        return x + ds * math.cos(th), y + ds * math.sin(th), th
    a = ds / radius
    if kind == 1:
        return (x + radius * (math.sin(th + a) - math.sin(th)),
                y + radius * (-math.cos(th + a) + math.cos(th)), th + a)
    return (x + radius * (-math.sin(th - a) + math.sin(th)),
            y + radius * (math.cos(th - a) - math.cos(th)), th - a)


@njit(cache=True)
def _sample(x0, y0, th0, types, lens, nseg, radius, step, max_len):
    """Points every ``step`` metres of arc along a word, the endpoint included.

    Stops at ``max_len`` metres. Returns arrays (x, y, heading, direction, s).
    """
    total = 0.0
    for m in range(nseg):
        total += abs(lens[m]) * radius
    limit = min(total, max_len)
    n_full = int(math.floor(limit / step + 1e-9))
    n = n_full
    if limit - n_full * step > 1e-9 and limit >= total - 1e-12:
        n += 1
    xs = np.empty(n)
    ys = np.empty(n)
    hs = np.empty(n)
    ds = np.empty(n, dtype=np.int64)
    ss = np.empty(n)
    seg = 0
    seg_start = 0.0
    px, py, pth = x0, y0, th0
    for k in range(n):
        target = (k + 1) * step
        if k == n - 1 and n > n_full:
            target = total
        if target > limit:
            target = limit
        while seg < nseg - 1 and target > seg_start + abs(lens[seg]) * radius + 1e-12:
            seg_len = abs(lens[seg]) * radius
            sign = 1.0 if lens[seg] >= 0 else -1.0
            px, py, pth = _advance(px, py, pth, types[seg], sign * seg_len, radius)
            seg_start += seg_len
            seg += 1
        sign = 1.0 if lens[seg] >= 0 else -1.0
        x, y, th = _advance(px, py, pth, types[seg], sign * (target - seg_start), radius)
        xs[k] = x
        ys[k] = y
        hs[k] = th
        ds[k] = 1 if sign > 0 else -1
        ss[k] = target
    return xs, ys, hs, ds, ss


@dataclass(frozen=True)
class RSPath:
    """A Reeds-Shepp word: segment kinds, signed lengths (metres) and total length."""

    kinds: tuple
    lengths: tuple
    length: float
    radius: float

    @property
    def word(self) -> str:
        names = {1: "L", 0: "S", -1: "R"}
        return "".join(names[k] + ("+" if ln >= 0 else "-")
                       for k, ln in zip(self.kinds, self.lengths) if abs(ln) > 1e-12)


def shortest_path(start, goal, radius: float) -> RSPath:
    """Shortest Reeds-Shepp word between two (x, y, heading) poses."""
    if not radius > 0:
        raise ValueError("turning radius must be positive")
    t, ln, k, total = _shortest_word(float(start[0]), float(start[1]), float(start[2]),
                                     float(goal[0]), float(goal[1]), float(goal[2]), float(radius))
    k = int(k)
    if k == 0:
        # Identical poses: every word collapses, the empty path is optimal.
        return RSPath((), (), 0.0, radius)
    return RSPath(tuple(int(v) for v in t[:k]), tuple(float(v) * radius for v in ln[:k]),
                  float(total), radius)


def path_length(start, goal, radius: float) -> float:
    return shortest_path(start, goal, radius).length


def sample_path(start, path: RSPath, step: float, max_len: float = np.inf):
    """Discretize a word every ``step`` metres of arc from ``start``.

    Returns ``(x, y, heading, direction, s)`` arrays excluding the start pose;
    the final point lands exactly on the (possibly truncated) endpoint.
    """
    n = len(path.kinds)
    if n == 0 or path.length <= 0:
        empty = np.empty(0)
        return empty, empty, empty, np.empty(0, dtype=np.int64), empty
    kinds = np.zeros(5, dtype=np.int64)
    lens = np.zeros(5)
    kinds[:n] = path.kinds
    lens[:n] = np.asarray(path.lengths) / path.radius
    return _sample(float(start[0]), float(start[1]), float(start[2]), kinds, lens, n,
                   float(path.radius), float(step), float(max_len))


def end_pose(start, path: RSPath):
    """Integrate a word exactly (no discretization) from ``start``."""
    x, y, th = (float(v) for v in start)
    for kind, ln in zip(path.kinds, path.lengths):
        x, y, th = _advance(x, y, th, kind, ln, path.radius)
    return x, y, th
