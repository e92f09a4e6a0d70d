"""Tabular Q-learning of the SLAM-safety action values.

The table has one entry per discretized (direction, heading change, overlap)
cell.  Training runs episodic random walks from each map's start pose; an
episode ends when the oracle reports breakage or a step cap is hit.  The
walk is epsilon-greedy in the exploit-with-probability-epsilon sense, with
epsilon raised in blocks of episodes up to a ceiling.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, FormatError
from .features import (ANGLE_BIN_DEG, N_ANGLE, N_CELLS, N_ETA, N_OVERLAP, OVERLAP_BIN,
                       PROPOSAL_CAP_DEG, StateActionFeatures, discretize, evaluate_candidates,
                       proposal_grid)
from .oracle import BreakageModel, breakage
from .world import OVERLAP_CAP, CameraModel, WorldMap

log = logging.getLogger(__name__)

QTABLE_SCHEMA = "slamsafe.qtable"
QTABLE_VERSION = 1
DEFAULT_ALPHA = 0.2
DEFAULT_GAMMA = 0.1
EPISODE_STEP_CAP = 500
TRAIN_JITTER_DEG = 2.25


@dataclass(frozen=True)
class RewardWeights:
    overlap: float = 0.167
    angle: float = -0.1
    breakage: float = -10.0
    constant: float = -10.0
    raw_overlap: bool = False


@dataclass(frozen=True)
class EpsilonSchedule:
    initial: float = 0.0
    increment: float = 0.05
    block_size: int = 20
    ceiling: float = 0.9

    def value(self, episode: int) -> float:
        return min(self.ceiling, self.initial + self.increment * (episode // self.block_size))


def reward(w: RewardWeights, f: StateActionFeatures, phi: bool) -> float:
    """Per-step reward; overlap enters as a fraction of the 600-point cap unless ``raw_overlap``."""
    ov = f.overlap if w.raw_overlap else f.overlap / OVERLAP_CAP
    return w.overlap * ov + w.angle * f.dtheta_deg + w.breakage * float(phi) + w.constant


def reward_bounds(w: RewardWeights, max_dtheta_deg: float = 27.0) -> tuple[float, float]:
    """(min, max) reward over in-range features."""
    ov_max = OVERLAP_CAP if w.raw_overlap else 1.0
    terms = [(0.0, w.overlap * ov_max), (0.0, w.angle * max_dtheta_deg), (0.0, w.breakage)]
    lo = sum(min(t) for t in terms) + w.constant
    hi = sum(max(t) for t in terms) + w.constant
    return lo, hi


ALPHA_SCHEDULES = ("constant", "harmonic")


class QTable:
    """Action values over the 800 discretized cells, with per-cell visit counts.

    With ``alpha_schedule="harmonic"`` the step size of an update is
    ``max(alpha, 1 / (n + 1))`` for a cell already updated ``n`` times, so
    early estimates are plain sample means and later ones an exponential
    average with rate ``alpha``.
    """

    def __init__(self, alpha: float = DEFAULT_ALPHA, gamma: float = DEFAULT_GAMMA,
                 values=None, visits=None, meta: dict | None = None,
                 alpha_schedule: str = "constant"):
        if not 0 <= alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0 <= gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if alpha_schedule not in ALPHA_SCHEDULES:
            raise ValueError(f"alpha_schedule must be one of {ALPHA_SCHEDULES}")
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.alpha_schedule = alpha_schedule
        self.values = np.zeros(N_CELLS) if values is None else np.array(values, dtype=float)
        self.visits = np.zeros(N_CELLS, dtype=np.int64) if visits is None else np.array(visits, dtype=np.int64)
        if self.values.shape != (N_CELLS,) or self.visits.shape != (N_CELLS,):
            raise ValueError(f"tables must hold {N_CELLS} entries")
        self.meta = dict(meta or {})

    def __getitem__(self, cell) -> float:
        return float(self.values[_flat(cell)])

    def visit_count(self, cell) -> int:
        return int(self.visits[_flat(cell)])

    def copy(self) -> "QTable":
        return QTable(self.alpha, self.gamma, self.values.copy(), self.visits.copy(), dict(self.meta),
                      self.alpha_schedule)

    def step_size(self, cell) -> float:
        if self.alpha_schedule == "harmonic":
            return max(self.alpha, 1.0 / (self.visits[_flat(cell)] + 1))
        return self.alpha


def _flat(cell) -> int:
    return int(cell) if isinstance(cell, (int, np.integer)) else cell.flat


def q_update(q: QTable, s_cell, r: float, next_state_cells: Sequence = ()) -> float:
    """One temporal-difference update; an empty successor set means a terminal step."""
    k = _flat(s_cell)
    nxt = [_flat(c) for c in next_state_cells]
    best_next = float(q.values[nxt].max()) if nxt else 0.0
    old = q.values[k]
    q.values[k] = old + q.step_size(k) * (r + q.gamma * best_next - old)
    q.visits[k] += 1
    return float(q.values[k])


@dataclass
class EpisodeRecord:
    episode: int
    steps: int
    epsilon: float
    terminal_reason: str   # breakage | cap | dead_end | budget
    map_name: str = ""


@dataclass
class TrainingResult:
    qtable: QTable
    episodes: list[EpisodeRecord] = field(default_factory=list)
    # one row per executed step: eta_bin, dtheta_deg, overlap, phi, cell
    samples: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))

    def episode_lengths(self, include_truncated: bool = False) -> np.ndarray:
        return np.array([e.steps for e in self.episodes
                         if include_truncated or e.terminal_reason != "budget"], dtype=float)


def greedy_choice(values: np.ndarray, cells: np.ndarray, rng: np.random.Generator) -> int:
    """Index into ``cells`` of the argmax-Q candidate.

    Ties are broken by lowest cell index, then uniformly among candidates
    sharing that cell.
    """
    qv = values[cells]
    best = qv.max()
    top_cell = cells[qv == best].min()
    pool = np.flatnonzero(cells == top_cell)
    return int(pool[0] if len(pool) == 1 else pool[rng.integers(len(pool))])


def train(maps: Sequence[WorldMap], oracle: BreakageModel, sched: EpsilonSchedule = EpsilonSchedule(),
          steps_budget: int = 20000, seed: int = 0, *, cam: CameraModel = CameraModel(),
          weights: RewardWeights = RewardWeights(), alpha: float = DEFAULT_ALPHA,
          gamma: float = DEFAULT_GAMMA, step_len: float = 1.0, clearance: float = 0.25,
          episode_cap: int = EPISODE_STEP_CAP, alpha_schedule: str = "constant",
          jitter_deg: float = TRAIN_JITTER_DEG) -> TrainingResult:
    """Learn a Q-table by epsilon-greedy random walks over ``maps``.

    Maps are visited round-robin, one per episode.  Every executed step is
    scored by the oracle and rewarded; breakage ends the episode.  Each
    proposal's heading change is drawn uniformly within ``jitter_deg`` of its
    grid value (clipped to the proposal cap) so that every angle bin of the
    table is reachable, not only those holding grid points.
    """
    if not maps:
        raise ConfigError("training needs at least one map")
    if steps_budget < 0:
        raise ConfigError("steps_budget must be non-negative")
    q = QTable(alpha, gamma, alpha_schedule=alpha_schedule)
    q.meta = {
        "seed": int(seed), "steps": int(steps_budget), "oracle": oracle.to_dict(),
        "weights": asdict(weights), "schedule": asdict(sched), "maps": [m.name for m in maps],
        "step_len": step_len, "clearance": clearance, "episode_cap": episode_cap,
        "jitter_deg": jitter_deg, "alpha_schedule": alpha_schedule,
    }
    result = TrainingResult(q)
    if steps_budget == 0:
        return result
    policy_rng = rngmod.stream(seed, "train", "policy")
    jitter_rng = rngmod.stream(seed, "train", "jitter")
    dirs, base = proposal_grid()

    def candidates(wmap, pose):
        dths = base
        if jitter_deg > 0:
            dths = np.clip(base + jitter_rng.uniform(-jitter_deg, jitter_deg, len(base)),
                           -PROPOSAL_CAP_DEG, PROPOSAL_CAP_DEG)
        return evaluate_candidates(wmap, cam, pose, step_len, clearance, (dirs, dths))

    oracle_rng = oracle.stream("train", seed)
    samples = []
    total = 0
    episode = 0
    while total < steps_budget:
        wmap = maps[episode % len(maps)]
        eps = sched.value(episode)
        cand = candidates(wmap, wmap.start)
        if not cand.admissible.any():
            raise ConfigError(f"no admissible action at the start pose of map {wmap.name!r}")
        steps = 0
        reason = "budget"
        while total < steps_budget:
            adm = cand.admissible_idx
            if len(adm) == 0:
                reason = "dead_end"
                break
            if policy_rng.random() < eps:
                k = int(adm[greedy_choice(q.values, cand.cells[adm], policy_rng)])
            else:
                k = int(adm[policy_rng.integers(len(adm))])
            feats = cand.features(k)
            cell = int(cand.cells[k])
            phi = breakage(oracle, feats, oracle_rng)
            r = reward(weights, feats, phi)
            steps += 1
            total += 1
            samples.append((0 if feats.eta == "forward" else 1, feats.dtheta_deg, feats.overlap, phi, cell))
            if phi:
                q_update(q, cell, r, ())
                reason = "breakage"
                break
            cand = candidates(wmap, cand.end_pose(k))
            q_update(q, cell, r, cand.cells[cand.admissible])
            if steps >= episode_cap:
                reason = "cap"
                break
        result.episodes.append(EpisodeRecord(episode, steps, eps, reason, wmap.name))
        episode += 1
    result.samples = np.array(samples, dtype=float).reshape(-1, 5)
    log.info("trained %d steps over %d episodes", total, episode)
    return result


def discretization_meta() -> dict:
    return {"n_eta": N_ETA, "n_angle": N_ANGLE, "n_overlap": N_OVERLAP,
            "angle_bin_deg": ANGLE_BIN_DEG, "overlap_bin": OVERLAP_BIN,
            "overlap_cap": OVERLAP_CAP, "eta_order": ["forward", "backward"]}


def save_qtable(q: QTable, path) -> None:
    meta = dict(q.meta)
    doc = {
        "schema": QTABLE_SCHEMA,
        "version": QTABLE_VERSION,
        "hyperparams": {"alpha": q.alpha, "gamma": q.gamma, "alpha_schedule": q.alpha_schedule},
        "weights": meta.pop("weights", asdict(RewardWeights())),
        "schedule": meta.pop("schedule", None),
        "oracle": meta.pop("oracle", None),
        "seed": meta.pop("seed", None),
        "steps": meta.pop("steps", None),
        "discretization": discretization_meta(),
        "provenance": meta,
        "values": q.values.tolist(),
        "visits": q.visits.tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_qtable(path) -> QTable:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != QTABLE_SCHEMA:
        raise FormatError(f"{path}: not a Q-table file")
    if doc.get("version") != QTABLE_VERSION:
        raise FormatError(f"{path}: unsupported Q-table version {doc.get('version')!r}")
    if doc.get("discretization") != discretization_meta():
        raise FormatError(f"{path}: discretization does not match this build")
    meta = dict(doc.get("provenance") or {})
    for key in ("weights", "schedule", "oracle", "seed", "steps"):
        meta[key] = doc.get(key)
    hp = doc["hyperparams"]
    return QTable(hp["alpha"], hp["gamma"], doc["values"], doc["visits"], meta,
                  hp.get("alpha_schedule", "constant"))


TRAINING_LOG_COLUMNS = ("episode", "steps", "epsilon", "terminal_reason")


def write_training_log(episodes: Sequence[EpisodeRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAINING_LOG_COLUMNS)
        for e in episodes:
            w.writerow((e.episode, e.steps, repr(e.epsilon), e.terminal_reason))


SAMPLE_COLUMNS = ("eta_bin", "dtheta_deg", "overlap", "phi", "cell")


def write_samples(samples: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for eta, dth, ov, phi, cell in samples:
            w.writerow((int(eta), repr(float(dth)), int(ov), int(phi), int(cell)))


def read_samples(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r[c]) for c in SAMPLE_COLUMNS] for r in rows]).reshape(-1, 5)


def labeled_log(samples: np.ndarray) -> list[tuple[int, bool]]:
    """(cell, phi) pairs for threshold selection."""
    return [(int(c), bool(p)) for c, p in zip(samples[:, 4], samples[:, 3])]
