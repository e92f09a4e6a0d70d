"""Localization-quality score in the spirit of next-best-view planners.

For every landmark seen from the next pose, a geometric quality term rewards
wide triangulation angles between the two views and a recognition term
rewards an unchanged viewing angle (w.r.t. the surface normal) and an
unchanged apparent scale.  The score is the mean of their product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..world import CameraModel, Pose, WorldMap, visible_mask


@dataclass(frozen=True)
class NBVQualityModel:
    min_triangulation_angle: float = math.radians(5.0)
    view_falloff: float = math.radians(20.0)
    scale_tolerance: float = 1.5

    def __post_init__(self):
        if min(self.min_triangulation_angle, self.view_falloff) <= 0 or self.scale_tolerance <= 0:
            raise ValueError("NBV parameters must be positive")


def _ray_angle(ax, ay, bx, by):
    """Unsigned angle between 2D vectors a and b (arrays)."""
    return np.abs(np.arctan2(ax * by - ay * bx, ax * bx + ay * by))


def point_quality(model: NBVQualityModel, lx, ly, nx, ny, scale, p_prev: Pose, p_next: Pose) -> np.ndarray:
    """Per-landmark geometric quality times recognition probability."""
    vpx, vpy = p_prev.x - lx, p_prev.y - ly
    vnx, vny = p_next.x - lx, p_next.y - ly
    tri = _ray_angle(vpx, vpy, vnx, vny)
    gpq = np.clip(tri / model.min_triangulation_angle, 0.0, 1.0)
    inc_prev = _ray_angle(nx, ny, vpx, vpy)
    inc_next = _ray_angle(nx, ny, vnx, vny)
    prp_view = np.exp(-((inc_next - inc_prev) ** 2) / (2.0 * model.view_falloff ** 2))
    d_prev = np.hypot(vpx, vpy)
    d_next = np.hypot(vnx, vny)
    # apparent size scale / distance; the landmark's own scale cancels in the ratio
    ratio = (scale / np.maximum(d_next, 1e-12)) / (scale / np.maximum(d_prev, 1e-12))
    spread = np.maximum(ratio, 1.0 / ratio)
    prp_scale = np.minimum(1.0, model.scale_tolerance / spread)
    return gpq * prp_view * prp_scale


def nbv_quality(wmap: WorldMap, cam: CameraModel, p_prev: Pose, p_next: Pose,
                model: NBVQualityModel = NBVQualityModel()) -> float:
    """Mean point quality over the landmarks visible from ``p_next``; 0 for an empty view."""
    mask = visible_mask(wmap, cam, p_next)
    if not mask.any():
        return 0.0
    arr = _landmark_arrays(wmap)
    q = point_quality(model, *(a[mask] for a in arr), p_prev, p_next)
    return float(q.mean())


def _landmark_arrays(wmap: WorldMap):
    cached = wmap.__dict__.get("_nbv_arrays")
    if cached is None:
        lms = wmap.landmarks
        cached = tuple(np.array([getattr(lm, k) for lm in lms], dtype=float)
                       for k in ("x", "y", "nx", "ny", "scale"))
        wmap.__dict__["_nbv_arrays"] = cached
    return cached
