"""Planar world model: poses, maps, the camera cone and co-visibility.

A map is a set of wall segments (which both block motion and occlude sight)
with point landmarks placed on the wall surfaces.  The camera sees a landmark
when it lies inside the view cone, within the depth range, and no wall
crosses the line of sight.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _geom
from .errors import CollisionError, FormatError

MAP_SCHEMA_VERSION = 1
OVERLAP_CAP = 600
GEOM_EPS = 1e-9
WALL_EPS = 0.01

FORWARD = "forward"
BACKWARD = "backward"
DIRECTIONS = (FORWARD, BACKWARD)


def wrap_angle(a: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    return _geom.wrap_angle.py_func(a)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def distance_to(self, other) -> float:
        ox, oy = other.xy if isinstance(other, Pose) else other
        return math.hypot(ox - self.x, oy - self.y)


@dataclass(frozen=True)
class Landmark:
    id: int
    x: float
    y: float
    nx: float
    ny: float
    scale: float = 1.0

    def __post_init__(self):
        if abs(math.hypot(self.nx, self.ny) - 1.0) > 1e-9:
            raise ValueError(f"landmark {self.id}: normal is not unit length")
        if not self.scale > 0:
            raise ValueError(f"landmark {self.id}: scale must be positive")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def normal(self) -> tuple[float, float]:
        return (self.nx, self.ny)


@dataclass(frozen=True)
class CameraModel:
    half_fov: float = math.radians(31.0)
    max_range: float = 8.0
    min_range: float = 0.3

    def __post_init__(self):
        if not 0 < self.half_fov < math.pi / 2:
            raise ValueError("half_fov must lie in (0, pi/2)")
        if not 0 < self.min_range < self.max_range:
            raise ValueError("need 0 < min_range < max_range")


@dataclass(frozen=True, eq=False)
class WorldMap:
    """Walls, landmarks, and a start/goal pair.

    ``bounds`` is ``(xmin, ymin, xmax, ymax)``; walls are ``(x1, y1, x2, y2)``.
    """

    name: str
    bounds: tuple[float, float, float, float]
    walls: tuple[tuple[float, float, float, float], ...]
    landmarks: tuple[Landmark, ...]
    start: Pose
    goal: tuple[float, float]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        object.__setattr__(self, "walls", tuple(tuple(float(v) for v in w) for w in self.walls))
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))

    @cached_property
    def wall_array(self) -> np.ndarray:
        if not self.walls:
            return np.zeros((0, 4))
        return np.ascontiguousarray(np.array(self.walls, dtype=float))

    @cached_property
    def landmark_xy(self) -> tuple[np.ndarray, np.ndarray]:
        xs = np.array([lm.x for lm in self.landmarks], dtype=float)
        ys = np.array([lm.y for lm in self.landmarks], dtype=float)
        return xs, ys

    @cached_property
    def landmark_ids(self) -> np.ndarray:
        return np.array([lm.id for lm in self.landmarks], dtype=np.int64)

    def in_bounds(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    def wall_distance(self, x: float, y: float) -> float:
        if not self.walls:
            return math.inf
        return min(_geom.point_segment_distance(x, y, *w) for w in self.walls)

    def validate(self) -> None:
        """Raise ``ValueError`` if a map invariant is violated."""
        for label, (x, y) in (("start", self.start.xy), ("goal", self.goal)):
            if not self.in_bounds(x, y):
                raise ValueError(f"{label} {x, y} lies outside the map bounds")
            if self.wall_distance(x, y) <= GEOM_EPS:
                raise ValueError(f"{label} {x, y} lies on a wall")
        for lm in self.landmarks:
            if self.wall_distance(lm.x, lm.y) > WALL_EPS + GEOM_EPS:
                raise ValueError(f"landmark {lm.id} is not on a wall surface")

    def to_dict(self) -> dict:
        return {
            "version": MAP_SCHEMA_VERSION,
            "name": self.name,
            "bounds": list(self.bounds),
            "walls": [list(w) for w in self.walls],
            "landmarks": [
                {"id": lm.id, "x": lm.x, "y": lm.y, "nx": lm.nx, "ny": lm.ny, "scale": lm.scale}
                for lm in self.landmarks
            ],
            "start": {"x": self.start.x, "y": self.start.y, "theta": self.start.theta},
            "goal": {"x": self.goal[0], "y": self.goal[1]},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldMap":
        try:
            return cls(
                name=d["name"],
                bounds=tuple(d["bounds"]),
                walls=tuple(tuple(w) for w in d["walls"]),
                landmarks=tuple(
                    Landmark(int(lm["id"]), lm["x"], lm["y"], lm["nx"], lm["ny"], lm.get("scale", 1.0))
                    for lm in d["landmarks"]
                ),
                start=Pose(d["start"]["x"], d["start"]["y"], d["start"].get("theta", 0.0)),
                goal=(d["goal"]["x"], d["goal"]["y"]),
                meta=d.get("meta", {}),
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed map document: {exc}") from exc


def save_map(wmap: WorldMap, path) -> None:
    Path(path).write_text(json.dumps(wmap.to_dict(), indent=1) + "\n")


def load_map(path) -> WorldMap:
    doc = json.loads(Path(path).read_text())
    version = doc.get("version")
    if version != MAP_SCHEMA_VERSION:
        raise FormatError(f"{path}: unsupported map schema version {version!r}")
    wmap = WorldMap.from_dict(doc)
    wmap.validate()
    return wmap


def visible_mask(wmap: WorldMap, cam: CameraModel, p: Pose) -> np.ndarray:
    """Boolean mask over ``wmap.landmarks`` of the landmarks seen from ``p``."""
    xs, ys = wmap.landmark_xy
    return _geom.visible_mask(p.x, p.y, p.theta, xs, ys, wmap.wall_array,
                              cam.half_fov, cam.min_range, cam.max_range, GEOM_EPS)


def visible_set(wmap: WorldMap, cam: CameraModel, p: Pose) -> set[int]:
    """Ids of the landmarks inside the view cone, in range and unoccluded."""
    return set(wmap.landmark_ids[visible_mask(wmap, cam, p)].tolist())


def fov_overlap(wmap: WorldMap, cam: CameraModel, p1: Pose, p2: Pose) -> int:
    """Number of landmarks seen from both poses, capped at 600."""
    both = visible_mask(wmap, cam, p1) & visible_mask(wmap, cam, p2)
    return min(OVERLAP_CAP, int(both.sum()))


def step_kinematics(p: Pose, direction: str, dtheta: float, dist: float,
                    wmap: WorldMap | None = None) -> Pose:
    """Rotate by ``dtheta`` then translate ``dist`` along (or against) the new heading.

    With a map, raises :class:`CollisionError` if the swept segment touches a wall.
    """
    if not dist > 0:
        raise ValueError("step length must be positive")
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    theta = wrap_angle(p.theta + dtheta)
    sign = 1.0 if direction == FORWARD else -1.0
    q = Pose(p.x + sign * dist * math.cos(theta), p.y + sign * dist * math.sin(theta), theta)
    if wmap is not None and _geom.step_blocked(p.x, p.y, q.x, q.y, wmap.wall_array, 0.0):
        raise CollisionError(f"step from {p.xy} to {q.xy} crosses a wall")
    return q


def step_is_free(wmap: WorldMap, p: Pose, q: Pose, clearance: float = 0.0) -> bool:
    return not _geom.step_blocked(p.x, p.y, q.x, q.y, wmap.wall_array, clearance)


def segment_is_free(wmap: WorldMap, a: Sequence[float], b: Sequence[float], clearance: float = 0.0) -> bool:
    return not _geom.step_blocked(a[0], a[1], b[0], b[1], wmap.wall_array, clearance)


def polyline_is_free(wmap: WorldMap, pts: Iterable[Sequence[float]], clearance: float = 0.0) -> bool:
    arr = np.asarray(list(pts), dtype=float)
    return not _geom.path_blocked(np.ascontiguousarray(arr[:, 0]), np.ascontiguousarray(arr[:, 1]),
                                  wmap.wall_array, clearance)
