"""Experiment orchestration: map generation, training, evaluation and export.

Every results file is a CSV whose first lines are ``# key=value`` comments
recording the oracle coefficients, thresholds and seeds that produced it,
followed by a header row with a fixed column order.  All randomness flows
from the ``seed`` arguments through named streams, so a rerun with the same
inputs writes byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import rng as rngmod
from .action_filter import FilterConfig
from .baselines import (POLICIES, NaivePolicy, NBVPolicy, OverlapPolicy, RLPolicy, SVMPolicy,
                        load_svm, save_svm, svm_train)
from .errors import ConfigError, MissingArtifactError
from .features import N_ANGLE, N_OVERLAP, angle_bins, evaluate_candidates, overlap_bins
from .mapgen import STYLES, TEXTURES, generate_map
from .oracle import BreakageModel, breakage, calibrate
from .planner import PlannerConfig, run_naive_planner, run_safe_planner, write_step_log
from .qlearn import (EpsilonSchedule, QTable, load_qtable, read_samples, save_qtable, train,
                     write_samples, write_training_log)
from .world import CameraModel, WorldMap, load_map, save_map

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "SLAMSAFE_OUTPUT_ROOT"
FREE_ROAM_CAP = 500
OUTCOMES = ("success", "breakage", "stuck", "timeout")

RESULT_COLUMNS = ("map", "policy", "trial", "outcome", "steps", "recoveries", "seed")
SUMMARY_COLUMNS = ("map", "policy", "trials", "success", "failures", "breakage", "stuck",
                   "timeout", "success_pct")
EPISODE_COLUMNS = ("map", "policy", "episode", "steps", "terminal_reason", "seed")
BREAKAGE_SUMMARY_COLUMNS = ("policy", "episodes", "mean_steps", "stderr", "breakage", "cap",
                            "dead_end")


# --- experiment parameters ------------------------------------------------

@dataclass(frozen=True)
class OracleProfile:
    """Corner-probability targets of a calibrated breakage oracle."""

    low: float = 0.002
    high: float = 0.5
    ratio: float = 0.25

    def model(self, rng_seed: int = 0) -> BreakageModel:
        return calibrate(self.low, self.high, self.ratio, rng_seed)


@dataclass(frozen=True)
class PolicyParams:
    rl_threshold: float = -12.7
    min_visits: int = 3
    overlap_cutoff: int = 150
    nbv_q_min: float = 0.2


@dataclass
class ExperimentConfig:
    maps: list[str]
    policies: list[str] = field(default_factory=lambda: list(POLICIES))
    trials_per_cell: int = 10
    seed: int = 0
    oracle: OracleProfile = OracleProfile()
    params: PolicyParams = PolicyParams()
    texture: str = "dense"
    qtable: str | None = None
    svm: str | None = None
    out: str = "goal"
    budget: int = 400
    workers: int = 1
    step_logs: bool = False

    def __post_init__(self):
        if self.trials_per_cell < 1:
            raise ConfigError("trials_per_cell must be at least 1")
        unknown = set(self.policies) - set(POLICIES)
        if unknown:
            raise ConfigError(f"unknown policies {sorted(unknown)}; choose from {POLICIES}")
        if not self.maps:
            raise ConfigError("at least one map is required")
        for spec in self.maps:
            if _parse_generated(spec) is None and not input_path(spec).exists():
                raise MissingArtifactError(f"map file {spec!r} not found")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "oracle" in d:
            d["oracle"] = OracleProfile(**d["oracle"])
        if "params" in d:
            d["params"] = PolicyParams(**d["params"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> ExperimentConfig:
    p = input_path(path)
    if not p.exists():
        raise MissingArtifactError(f"config {path!r} not found")
    return ExperimentConfig.from_dict(json.loads(p.read_text()))


@dataclass(frozen=True)
class ResultRow:
    map: str
    policy: str
    trial: int
    outcome: str
    steps: int
    recoveries: int
    seed: int


# --- paths and files ------------------------------------------------------

def output_path(p) -> Path:
    """Resolve a relative path against ``$SLAMSAFE_OUTPUT_ROOT`` (default: cwd)."""
    p = Path(p)
    if p.is_absolute():
        return p
    return Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / p


def input_path(p) -> Path:
    """An existing artifact path as given, else resolved like :func:`output_path`."""
    p = Path(p)
    return p if p.exists() else output_path(p)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], header: dict | None = None) -> Path:
    """CSV with ``# key=value`` provenance lines before the column header."""
    path = output_path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}={json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else _fmt(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())
    return path


def read_csv(path) -> tuple[dict, list[dict]]:
    """(header comments, rows) of a file written by :func:`write_csv`."""
    path = input_path(path)
    if not path.exists():
        raise MissingArtifactError(f"{path} not found")
    lines = path.read_text().splitlines()
    header = {}
    body = []
    for line in lines:
        if line.startswith("# ") and not body:
            k, _, v = line[2:].partition("=")
            header[k] = v
        else:
            body.append(line)
    return header, list(csv.DictReader(body))


_GEN_RE = re.compile(r"^(?P<style>[a-z]+):(?P<seed>-?\d+)(?::(?P<texture>[a-z]+))?$")


def _parse_generated(spec: str):
    m = _GEN_RE.match(spec)
    if m and m["style"] in STYLES:
        return m["style"], int(m["seed"]), m["texture"]
    return None


def resolve_map(spec: str, texture: str = "dense") -> WorldMap:
    """Load a map file, or generate one from a ``style:seed[:texture]`` spec."""
    gen = _parse_generated(spec)
    if gen is not None:
        style, seed, tex = gen
        return generate_map(seed, style, tex or texture)
    p = input_path(spec)
    if not p.exists():
        raise MissingArtifactError(f"map {spec!r} not found")
    return load_map(p)


def _require(path, what: str) -> Path:
    if path is None:
        raise MissingArtifactError(f"{what} is required for this policy set")
    p = input_path(path)
    if not p.exists():
        raise MissingArtifactError(f"{what} {str(path)!r} not found")
    return p


def build_policy(name: str, params: PolicyParams, q: QTable | None = None, svm=None):
    if name == "naive":
        return NaivePolicy()
    if name == "rl":
        if q is None:
            raise MissingArtifactError("rl policy needs a Q-table")
        return RLPolicy(q, FilterConfig(params.rl_threshold, params.min_visits))
    if name == "svm":
        if svm is None:
            raise MissingArtifactError("svm policy needs a trained classifier")
        return SVMPolicy(svm)
    if name == "overlap":
        return OverlapPolicy(params.overlap_cutoff)
    if name == "nbv":
        return NBVPolicy(params.nbv_q_min)
    raise ConfigError(f"unknown policy {name!r}")


def _load_policies(names, params, qtable, svm_path):
    q = load_qtable(_require(qtable, "Q-table")) if "rl" in names else None
    svm = load_svm(_require(svm_path, "SVM model")) if "svm" in names else None
    return {n: build_policy(n, params, q, svm) for n in names}


def _oracle_header(model: BreakageModel, params: PolicyParams | None = None, **extra) -> dict:
    h = {"oracle": model.to_dict()}
    if params is not None:
        h["thresholds"] = asdict(params)
    h.update(extra)
    return h


# --- commands -------------------------------------------------------------

def cmd_genmap(seed: int, style: str, texture: str = "dense", out=None) -> Path:
    wmap = generate_map(seed, style, texture)
    path = output_path(out or f"{wmap.name}.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_map(wmap, path)
    return path


def cmd_train(maps: Sequence[str], steps: int, out, *, seed: int = 0, alpha: float = 0.01,
              gamma: float = 0.1, eps_incr: float = 0.05, alpha_schedule: str = "harmonic",
              oracle: OracleProfile = OracleProfile(), texture: str = "dense",
              svm: bool = True, svm_max_samples: int = 4000) -> dict[str, Path]:
    """Train a Q-table (and optionally the SVM baseline) and write all artifacts to ``out``."""
    wmaps = [resolve_map(s, texture) for s in maps]
    model = oracle.model(seed)
    res = train(wmaps, model, EpsilonSchedule(increment=eps_incr), steps, seed,
                alpha=alpha, gamma=gamma, alpha_schedule=alpha_schedule)
    out = output_path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"qtable": out / "qtable.json", "log": out / "training_log.csv",
             "samples": out / "samples.csv"}
    res.qtable.meta["maps"] = list(maps)
    save_qtable(res.qtable, paths["qtable"])
    write_training_log(res.episodes, paths["log"])
    write_samples(res.samples, paths["samples"])
    if svm:
        clf = svm_train(res.samples, max_samples=svm_max_samples, seed=seed)
        paths["svm"] = out / "svm.json"
        save_svm(clf, paths["svm"])
    return paths


def free_roam_episode(wmap: WorldMap, cam: CameraModel, oracle: BreakageModel, policy,
                      policy_rng: np.random.Generator, oracle_rng: np.random.Generator,
                      cap: int = FREE_ROAM_CAP, clearance: float = 0.25) -> tuple[int, str]:
    """Policy-filtered random walk from the map start until breakage or ``cap`` steps.

    Each step picks uniformly among the safe admissible candidates; when
    none is safe, the admissible candidate with the best score is taken.
    """
    pose = wmap.start
    for step in range(cap):
        cand = evaluate_candidates(wmap, cam, pose, 1.0, clearance)
        adm = cand.admissible_idx
        if len(adm) == 0:
            return step, "dead_end"
        safe, score = policy.assess(wmap, cam, cand)
        ok = adm[safe[adm]]
        if len(ok):
            k = int(ok[policy_rng.integers(len(ok))])
        else:
            k = int(adm[np.argmax(score[adm])])
        if breakage(oracle, cand.features(k), oracle_rng):
            return step + 1, "breakage"
        pose = cand.end_pose(k)
    return cap, "cap"


def _roam_job(args):
    wmap, cam, model, policy, name, episode, seed, cap = args
    prng = rngmod.stream(seed, "roam", "policy", name, wmap.name, episode)
    orng = model.stream("roam", seed, wmap.name, episode)
    steps, reason = free_roam_episode(wmap, cam, model, policy, prng, orng, cap)
    return (wmap.name, name, episode, steps, reason, rngmod.derive_seed(seed, "roam", wmap.name, episode))


def _pool_map(fn, jobs: list, workers: int) -> list:
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def cmd_eval_breakage(policies: Sequence[str], episodes: int, maps: Sequence[str], out, *,
                      qtable=None, svm=None, seed: int = 0, oracle: OracleProfile = OracleProfile(),
                      params: PolicyParams = PolicyParams(), texture: str = "dense",
                      cap: int = FREE_ROAM_CAP, workers: int = 1,
                      oracle_model: BreakageModel | None = None) -> dict[str, Path]:
    """Mean steps to breakage per policy over ``episodes`` free-roaming episodes.

    Episodes cycle through ``maps``.  Oracle draws are keyed by (seed, map,
    episode) only, so every policy faces the same per-episode randomness.
    """
    pols = _load_policies(policies, params, qtable, svm)
    wmaps = [resolve_map(s, texture) for s in maps]
    model = oracle_model or oracle.model(seed)
    cam = CameraModel()
    jobs = [(wmaps[e % len(wmaps)], cam, model, pols[name], name, e, seed, cap)
            for name in policies for e in range(episodes)]
    rows = _pool_map(_roam_job, jobs, workers)
    header = _oracle_header(model, params, seed=seed, cap=cap)
    out = output_path(out)
    paths = {"episodes": write_csv(out / "breakage_episodes.csv", EPISODE_COLUMNS, rows, header)}
    summary = []
    for name in policies:
        mine = [r for r in rows if r[1] == name]
        steps = np.array([r[3] for r in mine], dtype=float)
        se = float(steps.std(ddof=1) / math.sqrt(len(steps))) if len(steps) > 1 else 0.0
        reasons = [r[4] for r in mine]
        summary.append((name, len(mine), float(steps.mean()), se, reasons.count("breakage"),
                        reasons.count("cap"), reasons.count("dead_end")))
    paths["summary"] = write_csv(out / "breakage_summary.csv", BREAKAGE_SUMMARY_COLUMNS, summary, header)
    return paths


def trial_seeds(base: int, map_name: str, policy: str, trial: int) -> tuple[int, int]:
    """(run seed, oracle seed): the oracle seed ignores the policy so trials are paired."""
    return (rngmod.derive_seed(base, "goal", map_name, policy, trial),
            rngmod.derive_seed(base, "goal", map_name, trial))


def _goal_job(args):
    wmap, cam, model, policy, name, trial, base, pcfg, log_dir = args
    seed, oseed = trial_seeds(base, wmap.name, name, trial)
    if name == "naive":
        res = run_naive_planner(wmap, cam, model, seed=seed, oracle_seed=oseed, cfg=pcfg)
    else:
        res = run_safe_planner(wmap, cam, model, policy, seed=seed, oracle_seed=oseed, cfg=pcfg)
    if log_dir is not None:
        write_step_log(res.log, Path(log_dir) / f"{wmap.name}__{name}__{trial}.csv")
    return ResultRow(wmap.name, name, trial, res.outcome, res.steps, res.recoveries, seed)


def summarize(rows: Sequence[ResultRow]) -> list[tuple]:
    """Per (map, policy) outcome counts and Success %, in first-seen order."""
    keys = list(dict.fromkeys((r.map, r.policy) for r in rows))
    out = []
    for m, p in keys:
        mine = [r.outcome for r in rows if r.map == m and r.policy == p]
        c = {o: mine.count(o) for o in OUTCOMES}
        n = len(mine)
        out.append((m, p, n, c["success"], n - c["success"], c["breakage"], c["stuck"],
                    c["timeout"], success_pct(c["success"], n)))
    return out


def success_pct(successes: int, trials: int) -> float:
    return round(100.0 * successes / trials, 2) if trials else 0.0


def cmd_eval_goal(config: ExperimentConfig | str) -> dict[str, Path]:
    """Run the (map x policy x trial) goal-reaching matrix."""
    cfg = load_config(config) if isinstance(config, (str, Path)) else config
    pols = _load_policies(cfg.policies, cfg.params, cfg.qtable, cfg.svm)
    wmaps = [resolve_map(s, cfg.texture) for s in cfg.maps]
    model = cfg.oracle.model(cfg.seed)
    cam = CameraModel()
    pcfg = PlannerConfig(budget=cfg.budget)
    out = output_path(cfg.out)
    log_dir = None
    if cfg.step_logs:
        log_dir = out / "step_logs"
        log_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(m, cam, model, pols[p], p, t, cfg.seed, pcfg, log_dir)
            for m in wmaps for p in cfg.policies for t in range(cfg.trials_per_cell)]
    rows = _pool_map(_goal_job, jobs, cfg.workers)
    header = _oracle_header(model, cfg.params, seed=cfg.seed, trials_per_cell=cfg.trials_per_cell,
                            budget=cfg.budget)
    return {
        "results": write_csv(out / "results.csv", RESULT_COLUMNS,
                             [tuple(asdict(r).values()) for r in rows], header),
        "summary": write_csv(out / "summary.csv", SUMMARY_COLUMNS, summarize(rows), header),
    }


def cmd_tune_threshold(qtable, maps: Sequence[str], thresholds: Sequence[float], out, *,
                       trials: int = 10, seed: int = 0, oracle: OracleProfile = OracleProfile(),
                       params: PolicyParams = PolicyParams(), texture: str = "dense",
                       workers: int = 1) -> tuple[float, Path]:
    """Success rate of the RL gate per candidate threshold; returns the best one.

    Meant for training maps only: the chosen value is then frozen for
    evaluation.  Ties go to the higher (stricter) threshold.
    """
    q = load_qtable(_require(qtable, "Q-table"))
    wmaps = [resolve_map(s, texture) for s in maps]
    model = oracle.model(seed)
    cam = CameraModel()
    pcfg = PlannerConfig()
    rows = []
    for thr in thresholds:
        pol = RLPolicy(q, FilterConfig(float(thr), params.min_visits))
        jobs = [(m, cam, model, pol, "rl", t, seed, pcfg, None) for m in wmaps for t in range(trials)]
        res = _pool_map(_goal_job, jobs, workers)
        rows.append((float(thr), len(res), sum(r.outcome == "success" for r in res)))
    best = max(rows, key=lambda r: (r[2], r[0]))[0]
    path = write_csv(output_path(out) / "threshold_sweep.csv", ("threshold", "trials", "success"), rows,
                     _oracle_header(model, seed=seed, best=best))
    return best, path


# --- plot data ------------------------------------------------------------

def breakage_histograms(samples: np.ndarray) -> tuple[list[tuple], list[tuple]]:
    """Per-bin (bin, steps, breaks, frequency) over overlap bins and angle bins."""
    ov_b = overlap_bins(samples[:, 2]).astype(int)
    an_b = angle_bins(samples[:, 1]).astype(int)
    phi = samples[:, 3] > 0.5

    def hist(b, n):
        rows = []
        for k in range(n):
            sel = b == k
            cnt = int(sel.sum())
            brk = int(phi[sel].sum())
            rows.append((k, cnt, brk, brk / cnt if cnt else 0.0))
        return rows

    return hist(ov_b, N_OVERLAP), hist(an_b, N_ANGLE)


def decile_means(lengths: np.ndarray) -> list[float]:
    n = len(lengths)
    if n < 10:
        raise ConfigError("need at least 10 episodes for decile means")
    edges = np.linspace(0, n, 11).astype(int)
    return [float(lengths[a:b].mean()) for a, b in zip(edges[:-1], edges[1:])]


def cmd_compare(inputs: Sequence, out) -> dict[str, Path]:
    """Merge run directories and emit plot-data CSVs.

    Recognized inputs (searched recursively): ``results.csv`` (goal trials),
    ``breakage_summary.csv`` (steps to breakage), ``training_log.csv``
    (episode lengths) and ``samples.csv`` (logged steps with breakage flags).
    """
    found = {"results.csv": [], "breakage_summary.csv": [], "training_log.csv": [], "samples.csv": []}
    for item in inputs:
        p = input_path(item)
        if not p.exists():
            raise MissingArtifactError(f"{item} not found")
        files = [p] if p.is_file() else sorted(x for x in p.rglob("*.csv"))
        for f in files:
            if f.name in found:
                found[f.name].append(f)
    if not any(found.values()):
        raise MissingArtifactError("no recognizable result files among the inputs")
    out = output_path(out)
    paths = {}
    if found["results.csv"]:
        rows = []
        for f in found["results.csv"]:
            _, body = read_csv(f)
            rows += [ResultRow(r["map"], r["policy"], int(r["trial"]), r["outcome"], int(r["steps"]),
                               int(r["recoveries"]), int(r["seed"])) for r in body]
        rows.sort(key=lambda r: (r.map, POLICIES.index(r.policy) if r.policy in POLICIES else 99, r.trial))
        paths["merged"] = write_csv(out / "merged_results.csv", RESULT_COLUMNS,
                                    [tuple(asdict(r).values()) for r in rows])
        paths["success"] = write_csv(out / "success_table.csv", SUMMARY_COLUMNS, summarize(rows))
    if found["breakage_summary.csv"]:
        bars = []
        for f in found["breakage_summary.csv"]:
            _, body = read_csv(f)
            bars += [(f.parent.name, r["policy"], r["mean_steps"], r["stderr"], r["episodes"]) for r in body]
        paths["steps_to_breakage"] = write_csv(out / "steps_to_breakage.csv",
                                  ("run", "policy", "mean_steps", "stderr", "episodes"), bars)
    if found["training_log.csv"]:
        curve, dec = [], []
        for f in found["training_log.csv"]:
            _, body = read_csv(f)
            done = [r for r in body if r["terminal_reason"] != "budget"]
            curve += [(f.parent.name, r["episode"], r["steps"], r["epsilon"]) for r in done]
            if len(done) >= 10:
                means = decile_means(np.array([float(r["steps"]) for r in done]))
                dec += [(f.parent.name, k, m) for k, m in enumerate(means)]
        paths["episode_lengths"] = write_csv(out / "episode_lengths.csv", ("run", "episode", "steps", "epsilon"), curve)
        paths["episode_deciles"] = write_csv(out / "episode_length_deciles.csv", ("run", "decile", "mean_steps"), dec)
    if found["samples.csv"]:
        samples = np.vstack([read_samples(f) for f in found["samples.csv"]])
        ov, an = breakage_histograms(samples)
        cols = ("bin", "steps", "breaks", "frequency")
        paths["breakage_by_overlap"] = write_csv(out / "breakage_by_overlap.csv", cols, ov)
        paths["breakage_by_angle"] = write_csv(out / "breakage_by_angle.csv", cols, an)
    return paths
