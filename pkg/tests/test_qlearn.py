import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slamsafe.errors import ConfigError, FormatError
from slamsafe.features import StateActionFeatures, evaluate_candidates
from slamsafe.mapgen import generate_map
from slamsafe.oracle import breakage, calibrate, default_model
from slamsafe.qlearn import (EpsilonSchedule, QTable, RewardWeights, greedy_choice, load_qtable, q_update,
                             reward, reward_bounds, save_qtable, train)
from slamsafe.world import CameraModel, Pose

W = RewardWeights()


@pytest.mark.parametrize("f,phi,expected", [
    (("forward", 0.0, 600), False, -9.833),
    (("forward", 27.0, 0), True, -22.7),
    (("forward", 10.0, 300), False, -10.9165),
])
def test_reward_examples(f, phi, expected):
    assert abs(reward(W, StateActionFeatures(*f), phi) - expected) <= 1e-12


def test_reward_raw_overlap_variant():
    r = reward(RewardWeights(raw_overlap=True), StateActionFeatures("forward", 0.0, 600), False)
    assert r == pytest.approx(0.167 * 600 - 10)


def test_reward_bounds():
    assert reward_bounds(W) == pytest.approx((-22.7, -9.833))


def test_q_update_example():
    q = QTable(alpha=0.2, gamma=0.9)
    q.values[5] = -9.833
    got = q_update(q, 0, -10.9165, [5])
    exact = Fraction("0.2") * (Fraction("-10.9165") + Fraction("0.9") * Fraction("-9.833"))
    assert exact == Fraction("-3.95324")
    assert abs(got - float(exact)) <= 1e-12
    assert q.visits[0] == 1


def test_q_update_zero_alpha():
    q = QTable(alpha=0.0, gamma=0.9)
    q.values[3] = -4.0
    q.values[7] = -1.0
    assert q_update(q, 3, -50.0, [7]) == -4.0


def test_q_update_terminal():
    q = QTable(alpha=0.5, gamma=0.9)
    q.values[9] = -100.0
    assert abs(q_update(q, 0, -22.7, []) - (-11.35)) <= 1e-12


def test_harmonic_step_size():
    q = QTable(alpha=0.1, gamma=0.0, alpha_schedule="harmonic")
    for r in (-10.0, -12.0, -14.0):
        q_update(q, 0, r, [])
    assert q.values[0] == pytest.approx(-12.0)      # plain sample mean while 1/(n+1) > alpha
    assert q.step_size(0) == pytest.approx(0.25)


def chain_value_iteration(R, nxt, gamma, tol=1e-14):
    Q = np.zeros_like(R)
    while True:
        new = R + gamma * Q[nxt].max(axis=-1)
        if np.abs(new - Q).max() < tol:
            return new
        Q = new


def test_chain_mdp_fixed_point():
    # two states, two actions, deterministic: R[s, a], next state nxt[s, a]
    R = np.array([[-1.0, -2.0], [-3.0, -0.5]])
    nxt = np.array([[0, 1], [0, 1]])
    gamma = 0.9
    oracle = chain_value_iteration(R, nxt, gamma)
    q = QTable(alpha=0.5, gamma=gamma)
    cell = np.array([[0, 1], [2, 3]])
    for _ in range(2000):
        for s in range(2):
            for a in range(2):
                q_update(q, int(cell[s, a]), R[s, a], cell[nxt[s, a]].tolist())
    np.testing.assert_allclose(q.values[:4], oracle.ravel(), atol=1e-6)
    # the fixed point solved in closed form under the optimal policy (stay in s1)
    v1 = -0.5 / (1 - gamma)
    assert oracle[1, 1] == pytest.approx(v1)
    assert oracle[0, 1] == pytest.approx(-2.0 + gamma * v1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 799), st.floats(-22.7, -9.833), st.booleans()), max_size=200))
def test_values_stay_in_bound(updates):
    q = QTable(alpha=0.3, gamma=0.9)
    lo = -22.7 / (1 - 0.9)
    rng = np.random.default_rng(0)
    for cell, r, term in updates:
        q_update(q, cell, r, [] if term else rng.integers(0, 800, 5).tolist())
        assert lo - 1e-9 <= q.values.min() and q.values.max() <= 0.0


def test_epsilon_schedule():
    s = EpsilonSchedule()
    vals = [s.value(e) for e in range(1000)]
    assert vals[0] == 0.0 and vals[19] == 0.0 and vals[20] == pytest.approx(0.05)
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert max(vals) == pytest.approx(0.9)


def test_greedy_ties_lowest_cell():
    vals = np.zeros(800)
    vals[[10, 4]] = -1.0
    vals[7] = -1.0
    cells = np.array([10, 7, 4, 7])
    rng = np.random.default_rng(0)
    picks = {greedy_choice(vals, cells, rng) for _ in range(50)}
    assert picks == {2}
    vals[4] = -2.0
    picks = {greedy_choice(vals, cells, rng) for _ in range(50)}
    assert picks == {1, 3}


def test_budget_zero():
    res = train([generate_map(0, "mixed")], default_model(), steps_budget=0)
    assert not res.qtable.values.any() and res.episodes == []


def test_no_map_rejected():
    with pytest.raises(ConfigError):
        train([], default_model())


def test_random_walk_coverage():
    m = generate_map(0, "mixed", "default")
    pure = EpsilonSchedule(0.0, 0.0, 20, 0.9)
    short = train([m], default_model(), pure, 5000, seed=0).qtable
    ref = train([m], default_model(), pure, 30000, seed=1).qtable
    reachable = set(np.flatnonzero(ref.visits)) | set(np.flatnonzero(short.visits))
    covered = set(np.flatnonzero(short.visits))
    assert len(covered) / len(reachable) >= 0.6


def test_training_deterministic_and_bounded():
    maps = [generate_map(2, "mixed", "dense")]
    a = train(maps, default_model(), steps_budget=3000, seed=4)
    b = train(maps, default_model(), steps_budget=3000, seed=4)
    assert np.array_equal(a.qtable.values, b.qtable.values)
    assert np.array_equal(a.qtable.visits, b.qtable.visits)
    g = a.qtable.gamma
    assert a.qtable.values.min() >= -22.7 / (1 - g) and a.qtable.values.max() <= 0.0
    assert a.qtable.visits.sum() == 3000 == len(a.samples)
    assert sum(e.steps for e in a.episodes) == 3000


def test_save_load_round_trip(tmp_path, small_qtable):
    q = small_qtable.qtable
    save_qtable(q, tmp_path / "q.json")
    back = load_qtable(tmp_path / "q.json")
    assert back.values.tobytes() == q.values.tobytes()
    assert np.array_equal(back.visits, q.visits)
    assert (back.alpha, back.gamma, back.alpha_schedule) == (q.alpha, q.gamma, q.alpha_schedule)
    for key in ("seed", "steps", "oracle", "weights", "schedule"):
        assert back.meta[key] == json.loads(json.dumps(q.meta[key]))


def test_load_without_version_fails(tmp_path, small_qtable):
    save_qtable(small_qtable.qtable, tmp_path / "q.json")
    doc = json.loads((tmp_path / "q.json").read_text())
    del doc["version"]
    (tmp_path / "q.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError):
        load_qtable(tmp_path / "q.json")


def test_greedy_breaks_less_on_held_out_map(small_qtable):
    """Argmax-Q candidates break less often than uniform-random ones on an unseen map."""
    q = small_qtable.qtable
    model = calibrate(0.002, 0.5, 0.25)
    wmap = generate_map(77, "corner", "dense")
    cam = CameraModel()
    rng = np.random.default_rng(0)
    xmin, ymin, xmax, ymax = wmap.bounds
    s_greedy, s_rand = model.stream("g"), model.stream("r")
    hits_g = hits_r = n = 0
    while n < 3000:
        p = Pose(rng.uniform(xmin, xmax), rng.uniform(ymin, ymax), rng.uniform(-math.pi, math.pi))
        if wmap.wall_distance(p.x, p.y) < 0.3 or not _inside(wmap, p):
            continue
        cand = evaluate_candidates(wmap, cam, p)
        adm = cand.admissible_idx
        if len(adm) == 0:
            continue
        kg = int(adm[greedy_choice(q.values, cand.cells[adm], rng)])
        kr = int(adm[rng.integers(len(adm))])
        hits_g += breakage(model, cand.features(kg), s_greedy)
        hits_r += breakage(model, cand.features(kr), s_rand)
        n += 1
    pg, pr = hits_g / n, hits_r / n
    pooled = (hits_g + hits_r) / (2 * n)
    z = (pr - pg) / math.sqrt(2 * pooled * (1 - pooled) / n)
    assert pg < pr and z > 2.33


def _inside(wmap, p):
    # corner maps are corridors: a point is inside when walls bound it on both sides along y
    from slamsafe.world import segment_is_free

    far = [(p.x, wmap.bounds[1] - 5), (p.x, wmap.bounds[3] + 5)]
    return not segment_is_free(wmap, p.xy, far[0]) and not segment_is_free(wmap, p.xy, far[1])
