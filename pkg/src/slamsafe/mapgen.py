"""Seeded procedural map generator.

Four styles are available:

``corridor``
    a straight corridor, goal at the far end (no turns on the nominal route);
``corner``
    an L-shaped corridor with one or two right-angle turns and a textureless
    stretch on the outer wall of each turn;
``room``
    a rectangular room with free-standing partitions;
``mixed``
    a room joined to a corridor, with partitions and randomly textureless walls.

Landmarks are scattered along wall surfaces at ``density`` points per metre
and sit 5 mm in front of the surface they belong to.  Corridor and corner maps
record their nominal centreline route in ``meta["route"]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .world import Landmark, Pose, WorldMap

STYLES = ("corridor", "corner", "room", "mixed")
SURFACE_OFFSET = 0.005


@dataclass(frozen=True)
class TextureProfile:
    density: float = 40.0
    low_density: float = 0.0
    low_fraction: float = 0.15


TEXTURES = {
    "rich": TextureProfile(density=60.0, low_fraction=0.0),
    "default": TextureProfile(),
    "dense": TextureProfile(density=80.0),
    "sparse": TextureProfile(density=15.0, low_fraction=0.3),
}


class _Builder:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.walls: list[tuple[float, float, float, float]] = []
        self.landmarks: list[Landmark] = []

    def wall(self, x1, y1, x2, y2, density, sides=(1,)):
        """Add a wall; ``sides`` lists which normals (+1 left, -1 right) carry landmarks."""
        self.walls.append((float(x1), float(y1), float(x2), float(y2)))
        length = math.hypot(x2 - x1, y2 - y1)
        ux, uy = (x2 - x1) / length, (y2 - y1) / length
        for side in sides:
            nx, ny = -uy * side, ux * side
            count = int(round(density * length))
            if count == 0:
                continue
            ts = np.sort(self.rng.uniform(0.0, 1.0, count))
            scales = self.rng.uniform(0.5, 2.0, count)
            for t, sc in zip(ts, scales):
                self.landmarks.append(Landmark(
                    id=len(self.landmarks),
                    x=round(x1 + t * (x2 - x1) + SURFACE_OFFSET * nx, 6),
                    y=round(y1 + t * (y2 - y1) + SURFACE_OFFSET * ny, 6),
                    nx=nx, ny=ny, scale=round(float(sc), 6),
                ))

    def polyline(self, pts, density_fn, sides=(1,)):
        for (x1, y1), (x2, y2) in zip(pts[:-1], pts[1:]):
            self.wall(x1, y1, x2, y2, density_fn(), sides)


def _transform(wmap_parts, flip_y: bool):
    if not flip_y:
        return wmap_parts
    walls, landmarks, start, goal, bounds = wmap_parts
    walls = [(x1, -y1, x2, -y2) for x1, y1, x2, y2 in walls]
    landmarks = [Landmark(lm.id, lm.x, -lm.y, lm.nx, -lm.ny if lm.ny else 0.0, lm.scale) for lm in landmarks]
    start = Pose(start.x, -start.y, -start.theta)
    goal = (goal[0], -goal[1])
    xmin, ymin, xmax, ymax = bounds
    return walls, landmarks, start, goal, (xmin, -ymax, xmax, -ymin)


def _corridor(b: _Builder, tex: TextureProfile):
    rng = b.rng
    length = rng.uniform(14.0, 18.0)
    w = rng.uniform(2.6, 3.4)
    d = tex.density
    b.wall(0, 0, length, 0, d, sides=(1,))
    b.wall(length, 0, length, w, d, sides=(1,))
    b.wall(length, w, 0, w, d, sides=(1,))
    b.wall(0, w, 0, 0, d, sides=(1,))
    start = Pose(1.5, w / 2, 0.0)
    goal = (length - 1.5, w / 2)
    route = [start.xy, goal]
    return start, goal, (-1.0, -1.0, length + 1.0, w + 1.0), {"turns": 0, "route": route}


def _corner(b: _Builder, tex: TextureProfile):
    """L (or Z) corridor traced counter-clockwise; outer walls of turns are bare."""
    rng = b.rng
    w = rng.uniform(2.6, 3.2)
    a = rng.uniform(7.0, 9.0)
    c = rng.uniform(7.0, 9.0)
    turns = 1 + int(rng.integers(0, 2))
    d, low = tex.density, tex.low_density
    bare = rng.uniform(2.0, 3.0)
    if turns == 1:
        # leg 1 along +x: y in [0, w]; leg 2 along +y: x in [a, a + w]
        b.wall(0, 0, a - bare, 0, d)
        b.wall(a - bare, 0, a + w, 0, low)
        b.wall(a + w, 0, a + w, w + bare, low)
        b.wall(a + w, w + bare, a + w, w + c, d)
        b.wall(a + w, w + c, a, w + c, d)
        b.wall(a, w + c, a, w, d)
        b.wall(a, w, 0, w, d)
        b.wall(0, w, 0, 0, d)
        goal = (a + w / 2, w + c - 1.5)
        bounds = (-1.0, -1.0, a + w + 1.0, w + c + 1.0)
        route = [(1.5, w / 2), (a + w / 2, w / 2), goal]
    else:
        # third leg runs along +x again above leg 2
        e = rng.uniform(6.0, 8.0)
        top = w + c
        b.wall(0, 0, a - bare, 0, d)
        b.wall(a - bare, 0, a + w, 0, low)
        b.wall(a + w, 0, a + w, w + bare, low)
        b.wall(a + w, w + bare, a + w, top, d)
        b.wall(a + w, top, a + w + e, top, d)
        b.wall(a + w + e, top, a + w + e, top + w, d)
        bare2 = 0.6 * w
        b.wall(a + w + e, top + w, a + bare2, top + w, d)
        b.wall(a + bare2, top + w, a, top + w, low)
        b.wall(a, top + w, a, top + w - bare, low)
        b.wall(a, top + w - bare, a, w, d)
        b.wall(a, w, 0, w, d)
        b.wall(0, w, 0, 0, d)
        goal = (a + w + e - 1.5, top + w / 2)
        bounds = (-1.0, -1.0, a + w + e + 1.0, top + w + 1.0)
        route = [(1.5, w / 2), (a + w / 2, w / 2), (a + w / 2, top + w / 2), goal]
    start = Pose(1.5, w / 2, 0.0)
    return start, goal, bounds, {"turns": turns, "route": route}


def _room(b: _Builder, tex: TextureProfile):
    rng = b.rng
    wx = rng.uniform(12.0, 15.0)
    wy = rng.uniform(10.0, 13.0)

    def dens():
        return tex.low_density if rng.uniform() < tex.low_fraction else tex.density

    b.polyline([(0, 0), (wx, 0), (wx, wy), (0, wy), (0, 0)], dens)
    # free-standing partitions, both faces textured
    n_part = 1 + int(rng.integers(0, 3))
    for k in range(n_part):
        cx = (k + 1) * wx / (n_part + 1)
        if rng.uniform() < 0.5:
            y0 = rng.uniform(0.3, 0.5) * wy
            b.wall(cx, y0 - 2.0, cx, y0 + 2.0, dens(), sides=(1, -1))
        else:
            y0 = rng.uniform(0.55, 0.75) * wy
            b.wall(cx - 1.5, y0, cx + 1.5, y0, dens(), sides=(1, -1))
    start = Pose(1.2, 1.2, math.pi / 4)
    goal = (wx - 1.2, wy - 1.2)
    return start, goal, (-1.0, -1.0, wx + 1.0, wy + 1.0), {"partitions": n_part}


def _mixed(b: _Builder, tex: TextureProfile):
    rng = b.rng
    wx = rng.uniform(9.0, 11.0)
    wy = rng.uniform(8.0, 10.0)
    w = rng.uniform(2.6, 3.2)
    clen = rng.uniform(7.0, 9.0)
    y0 = rng.uniform(1.5, wy - w - 1.5)

    def dens():
        return tex.low_density if rng.uniform() < tex.low_fraction else tex.density

    # room with an opening on its right wall leading into a corridor
    # both polylines run clockwise, so the free side is on the right
    b.polyline([(wx, y0), (wx, 0), (0, 0), (0, wy), (wx, wy), (wx, y0 + w)], dens, sides=(-1,))
    b.polyline([(wx, y0 + w), (wx + clen, y0 + w), (wx + clen, y0), (wx, y0)], dens, sides=(-1,))
    cx = rng.uniform(0.4, 0.6) * wx
    cy = rng.uniform(0.35, 0.65) * wy
    half = rng.uniform(0.5, 0.9)
    b.polyline([(cx - half, cy - half), (cx + half, cy - half), (cx + half, cy + half),
                (cx - half, cy + half), (cx - half, cy - half)], dens, sides=(-1,))
    start = Pose(1.2, 1.2, math.pi / 4)
    goal = (wx + clen - 1.2, y0 + w / 2)
    bounds = (-1.0, -1.0, wx + clen + 1.0, wy + 1.0)
    return start, goal, bounds, {"pillar": [cx, cy, half]}


_STYLE_FNS = {"corridor": _corridor, "corner": _corner, "room": _room, "mixed": _mixed}


def generate_map(seed: int, style: str = "mixed", texture: str | TextureProfile = "default",
                 name: str | None = None) -> WorldMap:
    """Build a valid map deterministically from ``seed``."""
    if style not in _STYLE_FNS:
        raise ValueError(f"unknown map style {style!r}; choose from {STYLES}")
    tex = TEXTURES[texture] if isinstance(texture, str) else texture
    b = _Builder(rngmod.stream(seed, "genmap", style))
    start, goal, bounds, meta = _STYLE_FNS[style](b, tex)
    flip = style == "corner" and bool(b.rng.integers(0, 2))
    walls, landmarks, start, goal, bounds = _transform((b.walls, b.landmarks, start, goal, bounds), flip)
    if flip and "route" in meta:
        meta["route"] = [(x, -y) for x, y in meta["route"]]
    if "route" in meta:
        meta["route"] = [[round(float(x), 9), round(float(y), 9)] for x, y in meta["route"]]
    meta = dict(meta, style=style, seed=int(seed), density=tex.density,
                low_density=tex.low_density, low_fraction=tex.low_fraction, mirrored=flip)
    wmap = WorldMap(name=name or f"{style}-{seed}", bounds=bounds, walls=tuple(walls),
                    landmarks=tuple(landmarks), start=start, goal=goal, meta=meta)
    wmap.validate()
    return wmap
