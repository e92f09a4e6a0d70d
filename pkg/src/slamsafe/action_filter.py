"""Q-value safety gate for candidate steps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateError
from .features import StateActionFeatures, discretize
from .qlearn import QTable


@dataclass(frozen=True)
class FilterConfig:
    threshold: float = -10.0
    min_visits: int = 3

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")


def is_safe(q: QTable, cfg: FilterConfig, f: StateActionFeatures) -> bool:
    """True when the step's cell value reaches the threshold (ties are safe).

    Cells visited fewer than ``cfg.min_visits`` times are treated as unsafe.
    """
    cell = discretize(f)
    return q.visit_count(cell) >= cfg.min_visits and q[cell] >= cfg.threshold


def safe_mask(q: QTable, cfg: FilterConfig, cells: np.ndarray) -> np.ndarray:
    """Vectorized :func:`is_safe` over flat cell indices."""
    cells = np.asarray(cells, dtype=np.int64)
    return (q.visits[cells] >= cfg.min_visits) & (q.values[cells] >= cfg.threshold)


def _confusion(qv: np.ndarray, phi: np.ndarray, thr: float) -> tuple[int, int]:
    safe = qv >= thr
    return int(np.sum(safe & phi)), int(np.sum(~safe & ~phi))


def choose_threshold(q: QTable, labeled_log: Sequence[tuple[object, bool]]) -> float:
    """Threshold minimizing false positives first, then false negatives.

    A false positive is a breaking step judged safe; a false negative a
    non-breaking step judged unsafe.  Candidate cut points sit between
    consecutive distinct observed Q values (plus one below the minimum and
    one above the maximum); the midpoint of the winning gap is returned.
    """
    if not labeled_log:
        raise DegenerateError("empty log")
    qv = np.array([q[c] for c, _ in labeled_log])
    phi = np.array([bool(p) for _, p in labeled_log])
    if phi.all() or not phi.any():
        raise DegenerateError("log holds a single class")
    levels = np.unique(qv)
    # cut between levels[i-1] and levels[i]; the outer cuts sit one unit outside
    cuts = np.concatenate(([levels[0] - 1.0], (levels[:-1] + levels[1:]) / 2.0, [levels[-1] + 1.0]))
    scores = [_confusion(qv, phi, t) for t in cuts]
    best = min(range(len(cuts)), key=lambda i: (scores[i], i))
    return float(cuts[best])
