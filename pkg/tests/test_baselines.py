import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_map
from slamsafe.action_filter import FilterConfig
from slamsafe.baselines import (NaivePolicy, NBVPolicy, NBVQualityModel, OverlapPolicy, RLPolicy, SVMPolicy,
                                nbv_quality, overlap_only_safe, point_quality, policy_adapter, svm_train)
from slamsafe.baselines.svm import KernelClassifier, feature_matrix, load_svm, save_svm
from slamsafe.errors import DegenerateError, FormatError
from slamsafe.features import StateActionFeatures, evaluate_candidates
from slamsafe.mapgen import generate_map
from slamsafe.oracle import calibrate
from slamsafe.planner import run_safe_planner
from slamsafe.qlearn import EpsilonSchedule, QTable, train
from slamsafe.world import CameraModel, Pose

CAM = CameraModel()


# --- overlap-only ---------------------------------------------------------

def test_overlap_only_examples():
    assert overlap_only_safe(StateActionFeatures("forward", 3.0, 500), 150)
    for cutoff in (1, 150, 600):
        assert not overlap_only_safe(StateActionFeatures("forward", 3.0, 0), cutoff)


def test_overlap_cutoff_sweep_peaks_inside():
    m = generate_map(1, "room", "dense")
    prof = calibrate(0.002, 0.5, 0.25)
    wins = {c: sum(run_safe_planner(m, CAM, prof, OverlapPolicy(c), seed=s).success for s in range(20))
            for c in (0, 25, 150, 600)}
    assert max(wins[25], wins[150]) > max(wins[0], wins[600])


# --- kernel classifier ----------------------------------------------------

def test_separable_blobs_fit_exactly():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal([-3, -3], 0.7, (100, 2)), rng.normal([3, 3], 0.7, (100, 2))])
    y = np.r_[-np.ones(100), np.ones(100)]
    clf = KernelClassifier().fit(X, y)
    assert (clf.predict(X) == y).mean() == 1.0


def xor_set(n_per=100, seed=0):
    """Four tight blobs on the quadrant diagonals; label is the sign of x*y."""
    rng = np.random.default_rng(seed)
    centers = np.array([[1, 1], [-1, -1], [1, -1], [-1, 1]], dtype=float)
    X = np.vstack([rng.normal(c, 0.25, (n_per, 2)) for c in centers])
    y = np.repeat([1.0, 1.0, -1.0, -1.0], n_per)
    return X, y


def best_linear_accuracy(X, y, n_dirs=720):
    """Upper bound search for any linear rule: every direction and every cut."""
    best = 0.0
    for a in np.linspace(0, math.pi, n_dirs, endpoint=False):
        proj = X @ np.array([math.cos(a), math.sin(a)])
        order = np.argsort(proj)
        ys = y[order]
        # predict +1 above the cut: accuracy = (#-1 below + #+1 above) / n
        neg_below = np.r_[0, np.cumsum(ys == -1)]
        pos_above = np.r_[np.cumsum((ys == 1)[::-1])[::-1], 0]
        acc = (neg_below + pos_above) / len(y)
        best = max(best, acc.max(), (1 - acc).max())
    return best


def test_xor_needs_the_kernel():
    X, y = xor_set()
    assert best_linear_accuracy(X, y) <= 0.76
    clf = KernelClassifier(C=1.0).fit(X, y)
    assert (clf.predict(X) == y).mean() > 0.95


def test_kkt_residuals_small():
    X, y = xor_set(seed=3)
    clf = KernelClassifier(C=1.0).fit(X, y)
    res = clf.kkt_residuals(X, y)
    assert res[clf.support_].max() <= 1e-3
    assert np.all((clf.dual_coef_ > 0) & (clf.dual_coef_ <= clf.C + 1e-12))


def test_single_class_rejected():
    with pytest.raises(DegenerateError):
        KernelClassifier().fit(np.zeros((5, 2)), np.ones(5))
    f = StateActionFeatures("forward", 1.0, 100)
    with pytest.raises(DegenerateError):
        svm_train([(f, False), (f, False)])


def test_round_trip_preserves_decisions(tmp_path):
    X, y = xor_set(seed=1)
    clf = KernelClassifier().fit(X, y)
    save_svm(clf, tmp_path / "svm.json")
    back = load_svm(tmp_path / "svm.json")
    probe = np.random.default_rng(5).uniform(-2, 2, (200, 2))
    assert np.array_equal(back.decision_function(probe), clf.decision_function(probe))


def test_load_rejects_other_schema(tmp_path):
    (tmp_path / "x.json").write_text('{"schema": "slamsafe.qtable", "version": 1}')
    with pytest.raises(FormatError):
        load_svm(tmp_path / "x.json")


def test_trained_on_logged_steps_beats_majority():
    maps = [generate_map(2, "mixed", "dense"), generate_map(4, "corner", "dense")]
    res = train(maps, calibrate(0.01, 0.9), EpsilonSchedule(0.0, 0.0, 20, 0.9), 6000, seed=0)
    S = res.samples
    idx = np.random.default_rng(0).permutation(len(S))
    tr, te = S[idx[:4000]], S[idx[4000:]]
    clf = svm_train(tr)
    y = np.where(te[:, 3] > 0, -1, 1)
    acc = (clf.predict(feature_matrix(te)) == y).mean()
    majority = max((y == 1).mean(), (y == -1).mean())
    assert acc > majority


# --- NBV localization quality ---------------------------------------------

def test_zero_baseline_scores_zero(open_field):
    p = Pose(0.0, 0.0, 0.3)
    assert nbv_quality(open_field, CAM, p, p) == 0.0


def test_symmetric_wide_views_score_one():
    # normal points along +x; both views sit 45 degrees off it at equal range
    model = NBVQualityModel()
    q = point_quality(model, np.array([0.0]), np.array([0.0]), np.array([1.0]), np.array([0.0]),
                      np.array([1.0]), Pose(2.0, 2.0, 0.0), Pose(2.0, -2.0, 0.0))
    assert q[0] == pytest.approx(1.0, abs=1e-12)


def test_empty_view_scores_zero():
    m = make_map([(-5.0, 0.0)])
    assert nbv_quality(m, CAM, Pose(1, 0, 0), Pose(0, 0, 0)) == 0.0


def test_nbv_parameters_positive():
    with pytest.raises(ValueError):
        NBVQualityModel(view_falloff=0.0)


GPQ_ONLY = NBVQualityModel(view_falloff=1e9, scale_tolerance=1e9)


def _gpq(lx, ly, a, b):
    return point_quality(GPQ_ONLY, np.array([lx]), np.array([ly]), np.array([1.0]), np.array([0.0]),
                         np.array([1.0]), a, b)[0]


coords = st.floats(-5, 5)


@settings(max_examples=200)
@given(coords, coords, coords, coords)
def test_gpq_symmetric(ax, ay, bx, by):
    a, b = Pose(ax, ay), Pose(bx, by)
    assert _gpq(6.0, 0.5, a, b) == pytest.approx(_gpq(6.0, 0.5, b, a), abs=1e-12)


@settings(max_examples=100)
@given(coords, coords, st.floats(-math.pi, math.pi))
def test_gpq_shrinks_with_baseline(ax, ay, heading):
    a = Pose(ax, ay)
    d = np.array([math.cos(heading), math.sin(heading)])
    vals = [_gpq(6.0, 0.5, a, Pose(ax + s * d[0], ay + s * d[1])) for s in (3.0, 2.0, 1.0, 0.5, 0.1, 0.0)]
    assert all(later <= earlier + 1e-12 for earlier, later in zip(vals, vals[1:]))
    assert vals[-1] == 0.0


# --- adapters -------------------------------------------------------------

def _single(wmap, pose=Pose(0, 0, 0)):
    return evaluate_candidates(wmap, CAM, pose, 1.0, 0.25, (np.array([1.0]), np.array([0.0])))


def test_rl_adapter(open_field):
    cand = _single(open_field)
    q = QTable()
    q.values[cand.cells[0]] = -9.0
    q.visits[cand.cells[0]] = 5
    assert policy_adapter(RLPolicy(q, FilterConfig(-10.0)), open_field, CAM, cand) == (True, -9.0)


def test_nbv_adapter_zero_quality():
    m = make_map([])
    cand = _single(m)
    assert policy_adapter(NBVPolicy(0.2), m, CAM, cand) == (False, 0.0)


class _FixedMargin:
    def __init__(self, m):
        self.m = m

    def decision_function(self, X):
        return np.full(len(X), self.m)


def test_svm_adapter(open_field):
    cand = _single(open_field)
    assert policy_adapter(SVMPolicy(_FixedMargin(1.3)), open_field, CAM, cand) == (True, 1.3)
    assert policy_adapter(SVMPolicy(_FixedMargin(-0.2)), open_field, CAM, cand) == (False, -0.2)


def test_overlap_and_naive_adapters(open_field):
    cand = _single(open_field)
    ov = int(cand.overlap[0])
    assert policy_adapter(OverlapPolicy(ov), open_field, CAM, cand) == (True, float(ov))
    assert policy_adapter(OverlapPolicy(ov + 1), open_field, CAM, cand) == (False, float(ov))
    assert policy_adapter(NaivePolicy(), open_field, CAM, cand) == (True, 0.0)
