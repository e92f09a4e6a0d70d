"""State-action parametrization and its lookup-table discretization.

A step is described by its direction of travel, the absolute heading change
in degrees, and the number of landmarks seen from both ends of the step.
The triple is binned into 2 x 20 x 20 = 800 cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _geom
from .world import (BACKWARD, DIRECTIONS, FORWARD, GEOM_EPS, OVERLAP_CAP, CameraModel,
                    Pose, WorldMap, fov_overlap, wrap_angle)

MAX_DTHETA_DEG = 30.0
PROPOSAL_CAP_DEG = 27.0
N_ETA = 2
N_ANGLE = 20
N_OVERLAP = 20
N_CELLS = N_ETA * N_ANGLE * N_OVERLAP
ANGLE_BIN_DEG = MAX_DTHETA_DEG / N_ANGLE
OVERLAP_BIN = OVERLAP_CAP // N_OVERLAP
# values within this distance below a bin edge are snapped onto it
EDGE_TOL = 1e-9

# heading changes proposed for every step, in the order candidates are listed
DTHETA_GRID_DEG = (0.0, 4.5, -4.5, 9.0, -9.0, 13.5, -13.5, 18.0, -18.0,
                   22.5, -22.5, 27.0, -27.0)


@dataclass(frozen=True)
class StateActionFeatures:
    eta: str
    dtheta_deg: float
    overlap: int

    def __post_init__(self):
        if self.eta not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.eta!r}")
        if not 0.0 <= self.dtheta_deg <= MAX_DTHETA_DEG:
            raise ValueError(f"dtheta_deg {self.dtheta_deg} outside [0, 30]")
        if not 0 <= self.overlap <= OVERLAP_CAP:
            raise ValueError(f"overlap {self.overlap} outside [0, 600]")


@dataclass(frozen=True, order=True)
class CellIndex:
    eta_bin: int
    angle_bin: int
    overlap_bin: int

    @property
    def flat(self) -> int:
        return (self.eta_bin * N_ANGLE + self.angle_bin) * N_OVERLAP + self.overlap_bin

    @classmethod
    def from_flat(cls, k: int) -> "CellIndex":
        eta, rest = divmod(int(k), N_ANGLE * N_OVERLAP)
        ang, ov = divmod(rest, N_OVERLAP)
        return cls(eta, ang, ov)


def heading_change_deg(p_from: Pose, p_to: Pose) -> float:
    """Absolute heading change in degrees, clamped to 30."""
    return min(MAX_DTHETA_DEG, abs(math.degrees(wrap_angle(p_to.theta - p_from.theta))))


def featurize(wmap: WorldMap, cam: CameraModel, p_from: Pose, p_to: Pose,
              direction: str) -> StateActionFeatures:
    if p_from.distance_to(p_to) <= 0:
        raise ValueError("step has zero length")
    return StateActionFeatures(direction, heading_change_deg(p_from, p_to),
                               fov_overlap(wmap, cam, p_from, p_to))


def angle_bins(dtheta_deg):
    a = np.floor(np.abs(np.asarray(dtheta_deg, dtype=float)) / ANGLE_BIN_DEG + EDGE_TOL)
    return np.minimum(N_ANGLE - 1, a.astype(np.int64))


def overlap_bins(overlap):
    return np.minimum(N_OVERLAP - 1, np.asarray(overlap, dtype=np.int64) // OVERLAP_BIN)


def flat_cells(eta_bin, dtheta_deg, overlap) -> np.ndarray:
    """Vectorized discretization straight to flat cell indices."""
    return (np.asarray(eta_bin, dtype=np.int64) * N_ANGLE + angle_bins(dtheta_deg)) * N_OVERLAP \
        + overlap_bins(overlap)


def discretize(f: StateActionFeatures) -> CellIndex:
    return CellIndex(0 if f.eta == FORWARD else 1,
                     int(angle_bins(f.dtheta_deg)), int(overlap_bins(f.overlap)))


@dataclass
class CandidateSet:
    """Every proposed step out of one pose, featurized in one pass."""

    pose: Pose
    directions: np.ndarray     # +1 forward / -1 backward
    dtheta_deg: np.ndarray     # signed proposal
    end_x: np.ndarray
    end_y: np.ndarray
    end_theta: np.ndarray
    admissible: np.ndarray
    overlap: np.ndarray
    cells: np.ndarray          # flat cell index per candidate
    lengths: np.ndarray | None = None

    def __len__(self):
        return len(self.directions)

    def end_pose(self, k: int) -> Pose:
        return Pose(self.end_x[k], self.end_y[k], self.end_theta[k])

    def direction(self, k: int) -> str:
        return FORWARD if self.directions[k] > 0 else BACKWARD

    def features(self, k: int) -> StateActionFeatures:
        return StateActionFeatures(self.direction(k), abs(float(self.dtheta_deg[k])),
                                   int(self.overlap[k]))

    @property
    def admissible_idx(self) -> np.ndarray:
        return np.flatnonzero(self.admissible)


def proposal_grid(dtheta_grid=DTHETA_GRID_DEG):
    dirs = np.array([1.0] * len(dtheta_grid) + [-1.0] * len(dtheta_grid))
    dths = np.array(list(dtheta_grid) * 2, dtype=float)
    return dirs, dths


_DEFAULT_GRID = proposal_grid()


def evaluate_candidates(wmap: WorldMap, cam: CameraModel, pose: Pose, step_len=1.0,
                        clearance: float = 0.25, grid=None) -> CandidateSet:
    """Featurize the direction x heading-change proposal grid from ``pose``.

    ``grid`` is a ``(directions, dtheta_deg)`` pair of arrays and ``step_len``
    either a scalar or one length per candidate.  A candidate is admissible
    when its swept segment touches no wall and its end point keeps
    ``clearance`` metres from every wall.
    """
    dirs, dths = _DEFAULT_GRID if grid is None else grid
    dirs = np.asarray(dirs, dtype=float)
    dths = np.asarray(dths, dtype=float)
    xs, ys = wmap.landmark_xy
    lens = np.broadcast_to(np.asarray(step_len, dtype=float), dirs.shape).copy()
    nx, ny, nth, ok, ov = _geom.candidate_batch(
        pose.x, pose.y, pose.theta, dirs, np.radians(dths), lens, xs, ys, wmap.wall_array,
        cam.half_fov, cam.min_range, cam.max_range, clearance, GEOM_EPS, OVERLAP_CAP)
    cells = flat_cells((dirs < 0).astype(np.int64), np.minimum(np.abs(dths), MAX_DTHETA_DEG), ov)
    return CandidateSet(pose, dirs, dths, nx, ny, nth, ok, ov, cells, lens)
