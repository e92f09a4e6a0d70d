"""Waypoint planner with a per-step safety gate and recovery maneuvers.

A global route (straight line or RRT with shortcutting) supplies waypoints.
Each leg is smoothed by a quintic Bernstein curve which a pure-pursuit
rollout samples into roughly one-metre steps.  Before a planned step is
executed the safety policy is consulted; a rejected step triggers the
recovery search over the direction x heading-change grid, and the route is
recomputed from wherever the robot ends up.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .errors import NoPathError, RangeError, StuckError
from .features import (PROPOSAL_CAP_DEG, CandidateSet, StateActionFeatures,
                       evaluate_candidates, proposal_grid)
from .oracle import BreakageModel, breakage
from .world import (BACKWARD, FORWARD, CameraModel, Pose, WorldMap, polyline_is_free,
                    segment_is_free, wrap_angle)

_BINOM5 = np.array([1.0, 5.0, 10.0, 10.0, 5.0, 1.0])

STEP_LOG_COLUMNS = ("step_idx", "x", "y", "theta", "direction", "dtheta_deg", "overlap",
                    "q_value", "safe_verdict", "recovery_flag", "phi")
OUTCOMES = ("success", "breakage", "stuck", "timeout")


@dataclass(frozen=True)
class TrajectorySegment:
    control_points: np.ndarray   # (6, 2)
    sample_spacing: float = 1.0

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=float)
        if cp.shape != (6, 2):
            raise ValueError("a quintic segment needs 6 planar control points")
        object.__setattr__(self, "control_points", cp)

    def sample(self, n: int = 200) -> np.ndarray:
        return bernstein_eval_many(self, np.linspace(0.0, 1.0, n))


def bernstein_eval_many(seg: TrajectorySegment, t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any((t < 0.0) | (t > 1.0)) or np.any(np.isnan(t)):
        raise RangeError("curve parameter must lie in [0, 1]")
    i = np.arange(6)
    basis = _BINOM5 * t[:, None] ** i * (1.0 - t[:, None]) ** (5 - i)
    return basis @ seg.control_points


def bernstein_eval(seg: TrajectorySegment, t: float) -> np.ndarray:
    """Point of the quintic curve at parameter ``t``."""
    return bernstein_eval_many(seg, t)[0]


@dataclass(frozen=True)
class PlanStep:
    start: Pose
    end: Pose
    direction: str
    dtheta_deg: float     # signed heading change
    length: float
    features: StateActionFeatures | None = None


@dataclass(frozen=True)
class RecoveryCandidate:
    step: PlanStep
    alignment_score: float


@dataclass(frozen=True)
class PlannerConfig:
    step_len: float = 1.0
    min_step: float = 0.5
    max_step: float = 1.5
    goal_tol: float = 0.5
    waypoint_tol: float = 0.75
    budget: int = 400
    max_attempts: int = 5
    clearance: float = 0.25
    route_clearance: float = 0.6
    replan_every: int | None = None
    rrt_iters: int = 4000
    rrt_step: float = 0.5


# --- global route ---------------------------------------------------------

def _rrt(wmap: WorldMap, a, b, cfg: PlannerConfig, rng: np.random.Generator) -> list:
    xmin, ymin, xmax, ymax = wmap.bounds
    nodes = [np.asarray(a, dtype=float)]
    parent = [-1]
    goal = np.asarray(b, dtype=float)
    for _ in range(cfg.rrt_iters):
        target = goal if rng.random() < 0.1 else np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
        pts = np.array(nodes)
        j = int(np.argmin(np.sum((pts - target) ** 2, axis=1)))
        d = target - nodes[j]
        dist = math.hypot(d[0], d[1])
        if dist < 1e-9:
            continue
        new = nodes[j] + d * min(1.0, cfg.rrt_step / dist)
        if not segment_is_free(wmap, nodes[j], new, cfg.clearance):
            continue
        nodes.append(new)
        parent.append(j)
        if segment_is_free(wmap, new, goal, cfg.clearance):
            path = [goal]
            k = len(nodes) - 1
            while k >= 0:
                path.append(nodes[k])
                k = parent[k]
            return path[::-1]
    raise NoPathError("RRT found no route to the goal")


def _shortcut(wmap: WorldMap, path: list, clearance: float) -> list:
    out = [path[0]]
    i = 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not segment_is_free(wmap, path[i], path[j], clearance):
            j -= 1
        out.append(path[j])
        i = j
    return out


def global_route(wmap: WorldMap, start, goal, cfg: PlannerConfig = PlannerConfig(),
                 seed: int = 0) -> list[np.ndarray]:
    """Waypoints from ``start`` to ``goal`` (start excluded, goal last)."""
    gx, gy = float(goal[0]), float(goal[1])
    if not wmap.in_bounds(gx, gy) or wmap.wall_distance(gx, gy) < cfg.clearance:
        raise NoPathError("goal lies outside the map or inside a wall")
    a = np.array([float(start[0]), float(start[1])])
    b = np.array([gx, gy])
    if segment_is_free(wmap, a, b, cfg.clearance):
        return [b]
    # prefer routes that keep well off the walls; fall back to the step clearance
    for clear in dict.fromkeys((max(cfg.route_clearance, cfg.clearance), cfg.clearance)):
        wide = PlannerConfig(**{**cfg.__dict__, "clearance": clear})
        try:
            path = _rrt(wmap, a, b, wide, rngmod.stream(seed, "rrt", clear))
        except NoPathError:
            continue
        return _shortcut(wmap, path, clear)[1:]
    raise NoPathError("RRT found no route to the goal")


# --- local trajectory -----------------------------------------------------

def _segment_for_leg(wmap: WorldMap, pose: Pose, target, after, cfg: PlannerConfig) -> TrajectorySegment:
    p0 = np.array(pose.xy)
    t = np.asarray(target, dtype=float)
    span = float(np.hypot(*(t - p0)))
    h = np.array([math.cos(pose.theta), math.sin(pose.theta)])
    u = np.asarray(after, dtype=float) - t if after is not None else t - p0
    nu = float(np.hypot(*u))
    u = u / nu if nu > 1e-12 else (t - p0) / max(span, 1e-12)
    a = 0.3 * span
    for _ in range(6):
        cp = np.array([p0, p0 + 0.5 * a * h, p0 + a * h, t - a * u, t - 0.5 * a * u, t])
        seg = TrajectorySegment(cp, cfg.step_len)
        if polyline_is_free(wmap, seg.sample(60), cfg.clearance):
            return seg
        a *= 0.5
    # straight quintic; the leg itself is collision-free
    return TrajectorySegment(np.linspace(p0, t, 6), cfg.step_len)


def _rollout(seg: TrajectorySegment, pose: Pose, final: bool, cfg: PlannerConfig) -> list[tuple[float, float]]:
    """Pure-pursuit (signed dtheta_deg, length) steps along ``seg``."""
    pts = seg.sample(400)
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    end = pts[-1]
    tol = cfg.goal_tol if final else cfg.waypoint_tol
    cap = math.radians(PROPOSAL_CAP_DEG)
    x, y, th = pose.x, pose.y, pose.theta
    out = []
    near = 0
    for _ in range(int(arc[-1] / cfg.min_step) + 20):
        d_end = math.hypot(end[0] - x, end[1] - y)
        if d_end <= tol:
            break
        window = pts[near:]
        near += int(np.argmin(np.sum((window - (x, y)) ** 2, axis=1)))
        if d_end <= cfg.max_step:
            target, length = end, max(cfg.min_step, d_end)
        else:
            length = cfg.step_len
            k = int(np.searchsorted(arc, arc[near] + length))
            target = pts[min(k, len(pts) - 1)]
        want = math.atan2(target[1] - y, target[0] - x)
        dth = max(-cap, min(cap, wrap_angle(want - th)))
        th = wrap_angle(th + dth)
        x += length * math.cos(th)
        y += length * math.sin(th)
        out.append((math.degrees(dth), length))
    return out


def plan_to_goal(wmap: WorldMap, cam: CameraModel, pose: Pose, goal,
                 cfg: PlannerConfig = PlannerConfig(), seed: int = 0,
                 route: Sequence | None = None) -> tuple[TrajectorySegment, list[PlanStep]]:
    """Quintic segment to the next route waypoint, sampled into featurized steps."""
    if route is None:
        route = global_route(wmap, pose.xy, goal, cfg, seed)
    target = route[0]
    after = route[1] if len(route) > 1 else None
    seg = _segment_for_leg(wmap, pose, target, after, cfg)
    raw = _rollout(seg, pose, after is None, cfg)
    steps = []
    p = pose
    for dth, length in raw:
        cand = evaluate_candidates(wmap, cam, p, length, cfg.clearance,
                                   (np.array([1.0]), np.array([dth])))
        steps.append(_candidate_step(cand, 0))
        p = steps[-1].end
    return seg, steps


def _candidate_step(cand: CandidateSet, k: int) -> PlanStep:
    return PlanStep(cand.pose, cand.end_pose(k), cand.direction(k), float(cand.dtheta_deg[k]),
                    float(cand.lengths[k]), cand.features(k))


# --- execution ------------------------------------------------------------

@dataclass
class RunOutcome:
    outcome: str
    steps: int
    recoveries: int
    path: list[Pose]
    log: list[dict] = field(default_factory=list)
    detail: str = ""

    @property
    def success(self) -> bool:
        return self.outcome == "success"


def _alignment(cand: CandidateSet, waypoint) -> np.ndarray:
    """Cosine between each post-step heading and the bearing from the current pose to ``waypoint``."""
    bearing = math.atan2(waypoint[1] - cand.pose.y, waypoint[0] - cand.pose.x)
    return np.clip(np.cos(np.asarray(cand.end_theta) - bearing), -1.0, 1.0)


def recovery_candidates(wmap: WorldMap, cam: CameraModel, policy, pose: Pose, waypoint,
                        lengths=1.0, clearance: float = 0.25) -> list[RecoveryCandidate]:
    """Safe, collision-free grid candidates, best aligned first."""
    cand = evaluate_candidates(wmap, cam, pose, lengths, clearance)
    safe, score = policy.assess(wmap, cam, cand)
    ok = np.flatnonzero(safe & cand.admissible)
    align = _alignment(cand, waypoint)
    order = sorted(ok, key=lambda k: (-align[k], -score[k], k))
    return [RecoveryCandidate(_candidate_step(cand, k), float(align[k])) for k in order]


def _run(wmap, cam, oracle, policy, goal, seed, oracle_seed, cfg, filtered, strict):
    try:
        return _loop(wmap, cam, oracle, policy, goal, seed, oracle_seed, cfg, filtered)
    except _Halt as h:
        if strict and h.exc is not None:
            raise h.exc
        return h.result


class _Halt(Exception):
    def __init__(self, result, exc=None):
        self.result, self.exc = result, exc


def _loop(wmap, cam, oracle, policy, goal, seed, oracle_seed, cfg, filtered):
    oracle_rng = oracle.stream("run", oracle_seed)
    jitter = rngmod.stream(seed, "recovery")
    pose = wmap.start
    path = [pose]
    log = []
    recoveries = 0
    executed = 0
    attempts = 0
    replans = 0
    plan: list[PlanStep] = []
    route: list = []
    since_replan = 0
    n_grid = len(proposal_grid()[0])

    def execute(cand, k, score, verdict, recovery):
        nonlocal pose, executed
        feats = cand.features(k)
        phi = breakage(oracle, feats, oracle_rng)
        pose = cand.end_pose(k)
        path.append(pose)
        log.append({"step_idx": executed, "x": pose.x, "y": pose.y, "theta": pose.theta,
                    "direction": feats.eta, "dtheta_deg": float(cand.dtheta_deg[k]),
                    "overlap": feats.overlap, "q_value": float(score), "safe_verdict": int(bool(verdict)),
                    "recovery_flag": int(recovery), "phi": int(phi)})
        executed += 1
        return phi

    def outcome(kind, detail=""):
        return RunOutcome(kind, executed, recoveries, path, log, detail)

    def reroute():
        nonlocal replans
        try:
            r = global_route(wmap, pose.xy, goal, cfg, rngmod.derive_seed(seed, "route", replans))
        except NoPathError as exc:
            raise _Halt(outcome("stuck", str(exc)), exc)
        replans += 1
        return r

    route = reroute()
    while True:
        if math.hypot(pose.x - goal[0], pose.y - goal[1]) <= cfg.goal_tol:
            return outcome("success")
        if executed >= cfg.budget:
            return outcome("timeout")
        # the next unreached waypoint: skip those already reached or already bypassed
        while len(route) > 1 and (
                math.hypot(pose.x - route[0][0], pose.y - route[0][1]) <= cfg.waypoint_tol
                or segment_is_free(wmap, pose.xy, route[1], cfg.route_clearance)):
            route.pop(0)
            plan = []
        if cfg.replan_every and since_replan >= cfg.replan_every:
            plan = []
        if not plan:
            if not segment_is_free(wmap, pose.xy, route[0], cfg.clearance):
                route = reroute()
            _, plan = plan_to_goal(wmap, cam, pose, goal, cfg, route=route)
            since_replan = 0
        if plan:
            step = plan[0]
            cand = evaluate_candidates(wmap, cam, pose, step.length, cfg.clearance,
                                       (np.array([1.0 if step.direction == FORWARD else -1.0]),
                                        np.array([step.dtheta_deg])))
            safe, score = policy.assess(wmap, cam, cand)
            if cand.admissible[0] and (safe[0] or not filtered):
                attempts = 0
                phi = execute(cand, 0, score[0], safe[0], False)
                plan.pop(0)
                since_replan += 1
                if phi:
                    return outcome("breakage")
                continue
        # recovery: the lengths jitter on retries so repeated attempts differ
        lengths = cfg.step_len if attempts == 0 else jitter.uniform(cfg.min_step, cfg.max_step, n_grid)
        rc = evaluate_candidates(wmap, cam, pose, lengths, cfg.clearance)
        rsafe, rscore = policy.assess(wmap, cam, rc)
        good = np.flatnonzero((rsafe | (not filtered)) & rc.admissible)
        if len(good) == 0:
            attempts += 1
            if attempts >= cfg.max_attempts:
                msg = f"no safe recovery after {attempts} attempts at {pose}"
                raise _Halt(outcome("stuck", msg), StuckError(msg))
            continue
        align = _alignment(rc, route[0])
        k = min(good, key=lambda j: (-align[j], -rscore[j], j))
        attempts = 0
        recoveries += 1
        phi = execute(rc, k, rscore[k], rsafe[k], True)
        if phi:
            return outcome("breakage")
        plan = []


def run_safe_planner(wmap: WorldMap, cam: CameraModel, oracle: BreakageModel, policy,
                     goal=None, seed: int = 0, *, oracle_seed: int | None = None,
                     cfg: PlannerConfig = PlannerConfig(), strict: bool = False) -> RunOutcome:
    """Follow the planned route, gating each step with ``policy``.

    Rejected steps trigger a recovery maneuver followed by a replan.  Running
    out of safe recoveries ends the run as ``stuck`` (or raises
    :class:`StuckError` when ``strict``).  The oracle draws come from a
    stream keyed by ``oracle_seed`` (default ``seed``) so that runs of
    different policies can share world randomness.
    """
    goal = wmap.goal if goal is None else goal
    oracle_seed = seed if oracle_seed is None else oracle_seed
    return _run(wmap, cam, oracle, policy, goal, seed, oracle_seed, cfg, True, strict)


def run_naive_planner(wmap: WorldMap, cam: CameraModel, oracle: BreakageModel, goal=None,
                      seed: int = 0, *, oracle_seed: int | None = None,
                      cfg: PlannerConfig = PlannerConfig(), strict: bool = False) -> RunOutcome:
    """Same loop with the filter disabled: every admissible planned step executes."""
    from .baselines import NaivePolicy

    goal = wmap.goal if goal is None else goal
    oracle_seed = seed if oracle_seed is None else oracle_seed
    return _run(wmap, cam, oracle, NaivePolicy(), goal, seed, oracle_seed, cfg, False, strict)


def write_step_log(rows: Sequence[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEP_LOG_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in STEP_LOG_COLUMNS])


def _fmt(v):
    return repr(round(v, 9)) if isinstance(v, float) else v
