"""Synthetic SLAM breakage oracle.

Stands in for a running monocular SLAM system.  Each executed step breaks
tracking with a logistic probability that falls with the co-visible landmark
count and rises with the heading change::

    P(break) = logistic(b0 + b_overlap * (1 - overlap / 600) + b_angle * |dtheta| / 27deg)
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import rng as rngmod
from .errors import RangeError

ANGLE_SCALE_DEG = 27.0
OVERLAP_SCALE = 600
MAX_DTHETA_DEG = 30.0
DEFAULT_TARGETS = (0.02, 0.5)


def logistic(z):
    return 1.0 / (1.0 + np.exp(-z)) if isinstance(z, np.ndarray) else 1.0 / (1.0 + math.exp(-z))


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class BreakageModel:
    b0: float
    b_overlap: float
    b_angle: float
    rng_seed: int = 0

    def probability(self, overlap, dtheta_deg):
        """Breakage probability; accepts scalars or numpy arrays."""
        z = (self.b0 + self.b_overlap * (1.0 - np.asarray(overlap) / OVERLAP_SCALE)
             + self.b_angle * (np.abs(dtheta_deg) / ANGLE_SCALE_DEG))
        if np.ndim(z) == 0:
            return logistic(float(z))
        return logistic(z)

    def stream(self, *names) -> np.random.Generator:
        """Private random stream for one consumer (a training run, a trial...)."""
        return rngmod.stream(self.rng_seed, "oracle", *names)

    def to_dict(self) -> dict:
        return asdict(self)


def _check(overlap, dtheta_deg):
    if not 0 <= overlap <= OVERLAP_SCALE:
        raise RangeError(f"overlap {overlap} outside [0, {OVERLAP_SCALE}]")
    if not 0 <= abs(dtheta_deg) <= MAX_DTHETA_DEG:
        raise RangeError(f"heading change {dtheta_deg} deg outside [0, {MAX_DTHETA_DEG}]")


def breakage(model: BreakageModel, feats, stream: np.random.Generator) -> bool:
    """Draw the SLAM status after executing a step described by ``feats``.

    Exactly one uniform is consumed from ``stream`` per call.
    """
    _check(feats.overlap, feats.dtheta_deg)
    p = model.probability(feats.overlap, feats.dtheta_deg)
    return bool(stream.random() < p)


def calibrate(target_low: float, target_high: float, ratio: float = 1.0,
              rng_seed: int = 0) -> BreakageModel:
    """Fit coefficients so the two corner cases hit the requested probabilities.

    ``target_low`` is the probability at full overlap and no turn,
    ``target_high`` the probability at zero overlap and a 27 degree turn.
    ``ratio`` is ``b_overlap / b_angle``.  Equal targets give a flat model.
    """
    if not 0 < target_low <= target_high < 1:
        raise ValueError("need 0 < target_low <= target_high < 1")
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    b0 = logit(target_low)
    spread = logit(target_high) - b0
    if spread <= 0:
        return BreakageModel(b0, 0.0, 0.0, rng_seed)
    b_angle = spread / (1.0 + ratio)
    return BreakageModel(b0, spread - b_angle, b_angle, rng_seed)


def default_model(rng_seed: int = 0) -> BreakageModel:
    return calibrate(*DEFAULT_TARGETS, rng_seed=rng_seed)
