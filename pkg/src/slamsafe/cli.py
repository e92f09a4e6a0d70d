"""Command-line entry point (``slamsafe`` / ``python -m slamsafe``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .baselines import POLICIES
from .errors import SlamSafeError
from .mapgen import STYLES, TEXTURES


def _oracle_args(p: argparse.ArgumentParser) -> None:
    d = harness.OracleProfile()
    p.add_argument("--oracle-low", type=float, default=d.low,
                   help="breakage probability at full overlap and no turn")
    p.add_argument("--oracle-high", type=float, default=d.high,
                   help="breakage probability at zero overlap and a 27 degree turn")
    p.add_argument("--oracle-ratio", type=float, default=d.ratio,
                   help="overlap-to-angle coefficient ratio")


def _profile(a) -> harness.OracleProfile:
    return harness.OracleProfile(a.oracle_low, a.oracle_high, a.oracle_ratio)


def _params_args(p: argparse.ArgumentParser) -> None:
    d = harness.PolicyParams()
    p.add_argument("--rl-threshold", type=float, default=d.rl_threshold)
    p.add_argument("--min-visits", type=int, default=d.min_visits)
    p.add_argument("--overlap-cutoff", type=int, default=d.overlap_cutoff)
    p.add_argument("--nbv-q-min", type=float, default=d.nbv_q_min)


def _params(a) -> harness.PolicyParams:
    return harness.PolicyParams(a.rl_threshold, a.min_visits, a.overlap_cutoff, a.nbv_q_min)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slamsafe", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("genmap", help="generate a map file from a seed")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--style", choices=STYLES, default="mixed")
    p.add_argument("--texture", choices=sorted(TEXTURES), default="dense")
    p.add_argument("--out", help="output file (default: <style>-<seed>.json)")

    p = sub.add_parser("train", help="train the Q-table and the SVM baseline")
    p.add_argument("--maps", nargs="+", required=True, help="map files or style:seed specs")
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--alpha-schedule", choices=("constant", "harmonic"), default="harmonic")
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--eps-incr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--texture", choices=sorted(TEXTURES), default="dense")
    p.add_argument("--no-svm", action="store_true", help="skip the SVM baseline")
    p.add_argument("--out", default="train")
    _oracle_args(p)

    p = sub.add_parser("eval-breakage", help="mean steps to breakage under free roaming")
    p.add_argument("--policies", nargs="+", choices=POLICIES, default=list(POLICIES))
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--maps", nargs="+", required=True)
    p.add_argument("--qtable")
    p.add_argument("--svm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--texture", choices=sorted(TEXTURES), default="dense")
    p.add_argument("--cap", type=int, default=harness.FREE_ROAM_CAP)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="breakage")
    _oracle_args(p)
    _params_args(p)

    p = sub.add_parser("eval-goal", help="goal-reaching trial matrix from a JSON config")
    p.add_argument("--config", required=True)

    p = sub.add_parser("tune-threshold", help="sweep the RL threshold on training maps")
    p.add_argument("--qtable", required=True)
    p.add_argument("--maps", nargs="+", required=True)
    p.add_argument("--thresholds", nargs="+", type=float, required=True)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--texture", choices=sorted(TEXTURES), default="dense")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="tune")
    _oracle_args(p)

    p = sub.add_parser("compare", help="merge run directories and emit plot data")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", default="compare")
    return ap


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if a.command == "genmap":
            print(harness.cmd_genmap(a.seed, a.style, a.texture, a.out))
        elif a.command == "train":
            paths = harness.cmd_train(a.maps, a.steps, a.out, seed=a.seed, alpha=a.alpha, gamma=a.gamma,
                                      eps_incr=a.eps_incr, alpha_schedule=a.alpha_schedule,
                                      oracle=_profile(a), texture=a.texture, svm=not a.no_svm)
            print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
        elif a.command == "eval-breakage":
            paths = harness.cmd_eval_breakage(a.policies, a.episodes, a.maps, a.out, qtable=a.qtable,
                                              svm=a.svm, seed=a.seed, oracle=_profile(a),
                                              params=_params(a), texture=a.texture, cap=a.cap,
                                              workers=a.workers)
            print(paths["summary"].read_text(), end="")
        elif a.command == "eval-goal":
            paths = harness.cmd_eval_goal(a.config)
            print(paths["summary"].read_text(), end="")
        elif a.command == "tune-threshold":
            best, path = harness.cmd_tune_threshold(a.qtable, a.maps, a.thresholds, a.out, trials=a.trials,
                                                    seed=a.seed, oracle=_profile(a), texture=a.texture,
                                                    workers=a.workers)
            print(path.read_text(), end="")
            print(f"best threshold: {best}")
        elif a.command == "compare":
            paths = harness.cmd_compare(a.inputs, a.out)
            print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
    except SlamSafeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
