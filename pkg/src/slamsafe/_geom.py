"""Compiled geometry kernels shared by the world model and the planner.

Walls are passed as an ``(m, 4)`` float array of ``x1, y1, x2, y2`` rows and
landmarks as two parallel coordinate arrays.  Everything here is a pure
function of its arguments.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def wrap_angle(a):
    """Map an angle into (-pi, pi]."""
    if a > 64.0 or a < -64.0:
        a = a - TWO_PI * math.floor(a / TWO_PI)
    while a > math.pi:
        a -= TWO_PI
    while a <= -math.pi:
        a += TWO_PI
    return a


@njit(cache=True)
def point_segment_distance(px, py, ax, ay, bx, by):
    sx = bx - ax
    sy = by - ay
    l2 = sx * sx + sy * sy
    if l2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * sx + (py - ay) * sy) / l2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return math.hypot(px - (ax + t * sx), py - (ay + t * sy))


@njit(cache=True)
def sight_blocked(px, py, qx, qy, ax, ay, bx, by, eps):
    """True if the open segment p-q crosses the closed segment a-b.

    Contacts within ``eps`` metres of p or q do not count, so a point lying on
    a wall is not occluded by that wall.  Collinear overlaps are ignored.
    """
    rx = qx - px
    ry = qy - py
    sx = bx - ax
    sy = by - ay
    denom = rx * sy - ry * sx
    if abs(denom) < 1e-15:
        return False
    wx = ax - px
    wy = ay - py
    t = (wx * sy - wy * sx) / denom
    u = (wx * ry - wy * rx) / denom
    length = math.sqrt(rx * rx + ry * ry)
    if t * length <= eps or (1.0 - t) * length <= eps:
        return False
    wl = math.sqrt(sx * sx + sy * sy)
    if u * wl < -eps or (1.0 - u) * wl < -eps:
        return False
    return True


@njit(cache=True)
def segments_touch(px, py, qx, qy, ax, ay, bx, by):
    """Closed segment-segment intersection test (touching counts)."""
    d1 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    d2 = (bx - ax) * (qy - ay) - (by - ay) * (qx - ax)
    d3 = (qx - px) * (ay - py) - (qy - py) * (ax - px)
    d4 = (qx - px) * (by - py) - (qy - py) * (bx - px)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and \
            ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(ax, ay, bx, by, px, py):
        return True
    if d2 == 0 and _on_segment(ax, ay, bx, by, qx, qy):
        return True
    if d3 == 0 and _on_segment(px, py, qx, qy, ax, ay):
        return True
    if d4 == 0 and _on_segment(px, py, qx, qy, bx, by):
        return True
    return False


@njit(cache=True)
def _on_segment(ax, ay, bx, by, cx, cy):
    return min(ax, bx) <= cx <= max(ax, bx) and min(ay, by) <= cy <= max(ay, by)


@njit(cache=True)
def _near_walls(px, py, walls, rmax, eps):
    m = walls.shape[0]
    keep = np.empty(m, dtype=np.int64)
    k = 0
    for j in range(m):
        if point_segment_distance(px, py, walls[j, 0], walls[j, 1],
                                  walls[j, 2], walls[j, 3]) <= rmax + eps:
            keep[k] = j
            k += 1
    return keep[:k]


@njit(cache=True)
def _sees(px, py, c, s, cos_lim, lo2, hi2, x, y, walls, keep, eps):
    dx = x - px
    dy = y - py
    d2 = dx * dx + dy * dy
    if d2 > hi2 or d2 < lo2:
        return False
    # |bearing - heading| <= half_fov + eps  <=>  cos(angle) >= cos(half_fov + eps)
    if c * dx + s * dy < math.sqrt(d2) * cos_lim:
        return False
    for jj in range(keep.shape[0]):
        j = keep[jj]
        if sight_blocked(px, py, x, y, walls[j, 0], walls[j, 1],
                         walls[j, 2], walls[j, 3], eps):
            return False
    return True


@njit(cache=True)
def _limits(half_fov, rmin, rmax, eps):
    hi = rmax + eps
    lo = rmin - eps
    return math.cos(half_fov + eps), (lo * lo if lo > 0.0 else 0.0), hi * hi


@njit(cache=True)
def visible_mask(px, py, th, lx, ly, walls, half_fov, rmin, rmax, eps):
    n = lx.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    keep = _near_walls(px, py, walls, rmax, eps)
    cos_lim, lo2, hi2 = _limits(half_fov, rmin, rmax, eps)
    c = math.cos(th)
    s = math.sin(th)
    for i in range(n):
        out[i] = _sees(px, py, c, s, cos_lim, lo2, hi2, lx[i], ly[i], walls, keep, eps)
    return out


@njit(cache=True)
def step_blocked(px, py, qx, qy, walls, clearance):
    """Swept segment p-q touches a wall, or q ends closer than ``clearance``."""
    for j in range(walls.shape[0]):
        ax = walls[j, 0]
        ay = walls[j, 1]
        bx = walls[j, 2]
        by = walls[j, 3]
        if segments_touch(px, py, qx, qy, ax, ay, bx, by):
            return True
        if clearance > 0.0 and point_segment_distance(qx, qy, ax, ay, bx, by) < clearance:
            return True
    return False


@njit(cache=True)
def path_blocked(xs, ys, walls, clearance):
    """Any consecutive pair of the polyline xs/ys is blocked."""
    for i in range(xs.shape[0] - 1):
        if step_blocked(xs[i], ys[i], xs[i + 1], ys[i + 1], walls, clearance):
            return True
    return False


@njit(cache=True)
def candidate_batch(px, py, th, signs, dths, dists, lx, ly, walls,
                    half_fov, rmin, rmax, clearance, eps, cap):
    """Evaluate a batch of (direction sign, heading change, length) steps.

    Returns end poses, an admissibility mask and the capped co-visible
    landmark count of every admissible step.  Only landmarks seen from the
    start pose can be co-visible, so candidates are tested against that
    subset alone.
    """
    kk = signs.shape[0]
    nx = np.empty(kk)
    ny = np.empty(kk)
    nth = np.empty(kk)
    ok = np.zeros(kk, dtype=np.bool_)
    overlap = np.zeros(kk, dtype=np.int64)
    base = visible_mask(px, py, th, lx, ly, walls, half_fov, rmin, rmax, eps)
    idx = np.nonzero(base)[0]
    cos_lim, lo2, hi2 = _limits(half_fov, rmin, rmax, eps)
    for k in range(kk):
        t2 = wrap_angle(th + dths[k])
        x2 = px + signs[k] * dists[k] * math.cos(t2)
        y2 = py + signs[k] * dists[k] * math.sin(t2)
        nx[k] = x2
        ny[k] = y2
        nth[k] = t2
        if step_blocked(px, py, x2, y2, walls, clearance):
            continue
        ok[k] = True
        keep = _near_walls(x2, y2, walls, rmax, eps)
        c = math.cos(t2)
        s = math.sin(t2)
        cnt = 0
        for ii in range(idx.shape[0]):
            i = idx[ii]
            if _sees(x2, y2, c, s, cos_lim, lo2, hi2, lx[i], ly[i], walls, keep, eps):
                cnt += 1
        overlap[k] = cnt if cnt < cap else cap
    return nx, ny, nth, ok, overlap
