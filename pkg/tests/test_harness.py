import json
import math

import numpy as np
import pytest

from slamsafe import harness
from slamsafe.cli import main
from slamsafe.errors import ConfigError, MissingArtifactError
from slamsafe.mapgen import TEXTURES, generate_map
from slamsafe.oracle import calibrate
from slamsafe.planner import global_route
from slamsafe.world import load_map, segment_is_free


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, str(tmp_path))
    return tmp_path


# --- map generation -------------------------------------------------------

def test_genmap_byte_identical(out_root):
    a = harness.cmd_genmap(12, "corner", out="a.json")
    b = harness.cmd_genmap(12, "corner", out="b.json")
    assert a.read_bytes() == b.read_bytes()
    assert load_map(a).name == "corner-12"


def _turns_deg(pts):
    out = []
    for a, b, c in zip(pts, pts[1:], pts[2:]):
        h1 = math.atan2(b[1] - a[1], b[0] - a[0])
        h2 = math.atan2(c[1] - b[1], c[0] - b[0])
        out.append(abs(math.degrees(math.atan2(math.sin(h2 - h1), math.cos(h2 - h1)))))
    return out


def _route_is_free(m, route):
    return all(segment_is_free(m, a, b, 0.25) for a, b in zip(route, route[1:]))


@pytest.mark.parametrize("seed", range(5))
def test_corridor_route_has_no_turns(seed):
    m = generate_map(seed, "corridor")
    route = m.meta["route"]
    assert m.meta["turns"] == 0 and _route_is_free(m, route)
    assert all(t <= 10.0 for t in _turns_deg(route))
    assert global_route(m, m.start.xy, m.goal) == [pytest.approx(np.array(m.goal))]


def _landmarks_per_wall(m):
    walls = np.array(m.walls)
    counts = np.zeros(len(walls), dtype=int)
    for lm in m.landmarks:
        d = [_point_segment(lm.x, lm.y, *w) for w in walls]
        counts[int(np.argmin(d))] += 1
    return counts


def _point_segment(px, py, x1, y1, x2, y2):
    dx, dy = x2 - x1, y2 - y1
    t = max(0.0, min(1.0, ((px - x1) * dx + (py - y1) * dy) / (dx * dx + dy * dy)))
    return math.hypot(px - x1 - t * dx, py - y1 - t * dy)


@pytest.mark.parametrize("seed", range(6))
def test_corner_has_sharp_turn_and_bare_wall(seed):
    m = generate_map(seed, "corner", "default")
    route = m.meta["route"]
    assert _route_is_free(m, route)
    assert max(_turns_deg(route)) >= 60.0
    assert not segment_is_free(m, m.start.xy, m.goal)
    counts = _landmarks_per_wall(m)
    lengths = [math.hypot(w[2] - w[0], w[3] - w[1]) for w in m.walls]
    assert max(L for L, c in zip(lengths, counts) if c == 0) >= 2.0


@pytest.mark.parametrize("seed", range(5))
def test_mixed_landmark_census(seed):
    m = generate_map(seed, "mixed", "default")
    tex = TEXTURES["default"]
    per_wall = [round(tex.density * math.hypot(w[2] - w[0], w[3] - w[1])) for w in m.walls]
    assert 0 < len(m.landmarks) <= sum(per_wall)
    # every landmark sits just in front of some wall surface
    for lm in m.landmarks:
        assert min(_point_segment(lm.x, lm.y, *w) for w in m.walls) <= 0.01


def test_generated_maps_validate():
    for style in ("corridor", "corner", "room", "mixed"):
        for seed in range(4):
            generate_map(seed, style).validate()


# --- configuration and bookkeeping ----------------------------------------

def test_success_pct_format():
    assert harness.success_pct(9, 10) == 90.0
    assert harness.success_pct(0, 10) == 0.0
    assert f"{harness.success_pct(0, 10):.2f}" == "0.00"


def test_config_validation(out_root):
    with pytest.raises(ConfigError):
        harness.ExperimentConfig(maps=["corner:1"], trials_per_cell=0)
    with pytest.raises(ConfigError):
        harness.ExperimentConfig(maps=["corner:1"], policies=["rl", "magic"])
    with pytest.raises(MissingArtifactError):
        harness.ExperimentConfig(maps=["nowhere.json"])


def test_trial_seeds_paired_across_policies():
    r1, o1 = harness.trial_seeds(0, "corner-1", "rl", 3)
    r2, o2 = harness.trial_seeds(0, "corner-1", "naive", 3)
    assert o1 == o2 and r1 != r2
    assert harness.trial_seeds(0, "corner-1", "rl", 4)[1] != o1


def test_missing_artifacts(out_root):
    cfg = harness.ExperimentConfig(maps=["corner:1"], policies=["rl"], qtable="absent.json")
    with pytest.raises(MissingArtifactError):
        harness.cmd_eval_goal(cfg)
    with pytest.raises(MissingArtifactError):
        harness.cmd_eval_breakage(["svm"], 2, ["corner:1"], "b")


def test_zero_probability_oracle_hits_cap(out_root):
    tiny = calibrate(1e-12, 1e-12)
    paths = harness.cmd_eval_breakage(["naive"], 4, ["room:1"], "b", cap=60, oracle_model=tiny)
    _, rows = harness.read_csv(paths["episodes"])
    assert [r["terminal_reason"] for r in rows] == ["cap"] * 4
    assert all(int(r["steps"]) == 60 for r in rows)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    paths = harness.cmd_train(["room:1", "corner:4"], 6000, root / "train", seed=0)
    return root, paths


def test_train_artifacts(trained):
    root, paths = trained
    doc = json.loads(paths["qtable"].read_text())
    assert doc["version"] == 1 and doc["steps"] == 6000 and len(doc["values"]) == 800
    assert doc["oracle"]["b_overlap"] > 0
    lines = paths["log"].read_text().splitlines()
    assert lines[0] == "episode,steps,epsilon,terminal_reason"
    assert json.loads(paths["svm"].read_text())["schema"] == "slamsafe.svm"


def test_goal_accounting_and_determinism(trained, tmp_path, monkeypatch):
    root, paths = trained
    monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = dict(maps=["corner:101", "corridor:7"], trials_per_cell=3, qtable=str(paths["qtable"]),
               svm=str(paths["svm"]))
    a = harness.cmd_eval_goal(harness.ExperimentConfig(**cfg, out="a"))
    b = harness.cmd_eval_goal(harness.ExperimentConfig(**cfg, out="b"))
    assert a["results"].read_bytes() == b["results"].read_bytes()
    assert a["summary"].read_bytes() == b["summary"].read_bytes()
    header, rows = harness.read_csv(a["summary"])
    assert "oracle" in header and "thresholds" in header
    for r in rows:
        assert int(r["success"]) + int(r["failures"]) == int(r["trials"]) == 3
        assert int(r["failures"]) == int(r["breakage"]) + int(r["stuck"]) + int(r["timeout"])
    _, res = harness.read_csv(a["results"])
    assert [(r["map"], r["policy"], r["trial"]) for r in res] == [
        (m, p, str(t)) for m in ("corner-101", "corridor-7") for p in harness.POLICIES for t in range(3)]


def test_parallel_matches_serial(trained, tmp_path, monkeypatch):
    root, paths = trained
    monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = dict(maps=["corner:101"], policies=["naive", "rl"], trials_per_cell=2, qtable=str(paths["qtable"]))
    a = harness.cmd_eval_goal(harness.ExperimentConfig(**cfg, out="s", workers=1))
    b = harness.cmd_eval_goal(harness.ExperimentConfig(**cfg, out="p", workers=2))
    assert a["results"].read_bytes() == b["results"].read_bytes()


def test_compare_emits_plot_data(trained, tmp_path, monkeypatch):
    root, paths = trained
    monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, str(tmp_path))
    harness.cmd_eval_goal(harness.ExperimentConfig(maps=["corner:101"], policies=["naive"], trials_per_cell=2,
                                                   out="g"))
    harness.cmd_eval_breakage(["naive", "rl"], 3, ["room:1"], "b", qtable=str(paths["qtable"]))
    out = harness.cmd_compare([str(tmp_path / "g"), str(tmp_path / "b"), str(root / "train")], "cmp")
    for key in ("merged", "success", "steps_to_breakage", "episode_lengths", "episode_deciles", "breakage_by_overlap", "breakage_by_angle"):
        assert out[key].exists()
    _, ov = harness.read_csv(out["breakage_by_overlap"])
    assert len(ov) == 20 and sum(int(r["steps"]) for r in ov) == 6000
    with pytest.raises(MissingArtifactError):
        harness.cmd_compare([str(tmp_path / "nothing")], "cmp")


def test_decile_means():
    assert harness.decile_means(np.arange(20.0)) == [0.5 + 2 * k for k in range(10)]
    with pytest.raises(ConfigError):
        harness.decile_means(np.arange(5.0))


# --- command line ---------------------------------------------------------

def test_cli_pipeline(out_root, capsys):
    assert main(["genmap", "--seed", "3", "--style", "corridor", "--out", "maps/c.json"]) == 0
    assert (out_root / "maps" / "c.json").exists()
    assert main(["train", "--maps", "maps/c.json", "corner:4", "--steps", "1500", "--out", "t"]) == 0
    assert main(["eval-breakage", "--policies", "naive", "rl", "svm", "--episodes", "2", "--maps", "room:1",
                 "--qtable", "t/qtable.json", "--svm", "t/svm.json", "--out", "b"]) == 0
    (out_root / "cfg.json").write_text(json.dumps(
        {"maps": ["maps/c.json"], "policies": ["naive", "rl"], "trials_per_cell": 2, "qtable": "t/qtable.json"}))
    assert main(["eval-goal", "--config", str(out_root / "cfg.json")]) == 0
    assert main(["tune-threshold", "--qtable", "t/qtable.json", "--maps", "corner:11",
                 "--thresholds", "-12", "-13", "--trials", "2", "--out", "tune"]) == 0
    assert main(["compare", "--in", "goal", "b", "t", "--out", "cmp"]) == 0
    assert (out_root / "cmp" / "success_table.csv").exists()
    capsys.readouterr()
    assert main(["eval-goal", "--config", "missing.json"]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
