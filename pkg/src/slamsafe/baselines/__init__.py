"""Comparison policies and the common safety-policy interface.

Every policy answers the same question for a batch of candidate steps out of
one pose: which are safe, and how good is each (higher is better).  The
planner and the free-roaming evaluation only talk to this interface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..action_filter import FilterConfig, safe_mask
from ..features import CandidateSet, StateActionFeatures
from ..qlearn import QTable
from ..world import CameraModel, Pose, WorldMap
from .nbv import NBVQualityModel, nbv_quality, point_quality
from .svm import KernelClassifier, load_svm, save_svm, svm_train

POLICIES = ("naive", "rl", "svm", "overlap", "nbv")


def overlap_only_safe(f: StateActionFeatures, cutoff: int) -> bool:
    return f.overlap >= cutoff


class SafetyPolicy(Protocol):
    name: str

    def assess(self, wmap: WorldMap, cam: CameraModel, cand: CandidateSet) -> tuple[np.ndarray, np.ndarray]:
        """(safe verdicts, scores) for every entry of ``cand``."""


@dataclass
class NaivePolicy:
    """No filtering: every step is safe and scores zero."""

    name: str = "naive"

    def assess(self, wmap, cam, cand):
        return np.ones(len(cand), dtype=bool), np.zeros(len(cand))


@dataclass
class RLPolicy:
    q: QTable
    cfg: FilterConfig = FilterConfig()
    name: str = "rl"

    def assess(self, wmap, cam, cand):
        cells = np.asarray(cand.cells, dtype=np.int64)
        return safe_mask(self.q, self.cfg, cells), self.q.values[cells].copy()


@dataclass
class SVMPolicy:
    clf: KernelClassifier
    name: str = "svm"

    def assess(self, wmap, cam, cand):
        X = np.column_stack([(cand.directions < 0).astype(float), np.abs(cand.dtheta_deg),
                             cand.overlap.astype(float)])
        margin = self.clf.decision_function(X)
        return margin >= 0, margin


@dataclass
class OverlapPolicy:
    cutoff: int = 150
    name: str = "overlap"

    def assess(self, wmap, cam, cand):
        ov = np.asarray(cand.overlap)
        return ov >= self.cutoff, ov.astype(float)


@dataclass
class NBVPolicy:
    q_min: float = 0.2
    model: NBVQualityModel = NBVQualityModel()
    name: str = "nbv"

    def assess(self, wmap, cam, cand):
        scores = np.zeros(len(cand))
        for k in range(len(cand)):
            if cand.admissible[k]:
                scores[k] = nbv_quality(wmap, cam, cand.pose, cand.end_pose(k), self.model)
        return scores >= self.q_min, scores


def policy_adapter(policy: SafetyPolicy, wmap: WorldMap, cam: CameraModel,
                   cand: CandidateSet, k: int = 0) -> tuple[bool, float]:
    """Verdict and score of a single candidate."""
    safe, score = policy.assess(wmap, cam, cand)
    return bool(safe[k]), float(score[k])


__all__ = [
    "POLICIES", "KernelClassifier", "NBVPolicy", "NBVQualityModel", "NaivePolicy", "OverlapPolicy",
    "RLPolicy", "SVMPolicy", "SafetyPolicy", "load_svm", "nbv_quality", "overlap_only_safe",
    "point_quality", "policy_adapter", "save_svm", "svm_train",
]
