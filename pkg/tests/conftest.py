import math

import numpy as np
import pytest

from slamsafe.world import Landmark, Pose, WorldMap


def make_map(landmarks=(), walls=(), bounds=(-20.0, -20.0, 20.0, 20.0), start=Pose(0, 0, 0),
             goal=(5.0, 0.0), name="test"):
    """Hand-built map; landmarks are (x, y) pairs facing the origin."""
    lms = []
    for i, (x, y) in enumerate(landmarks):
        n = math.hypot(x, y) or 1.0
        nx, ny = (-x / n, -y / n) if math.hypot(x, y) else (1.0, 0.0)
        lms.append(Landmark(i, x, y, nx, ny, 1.0))
    return WorldMap(name, bounds, tuple(walls), tuple(lms), start, goal)


def scatter(n, seed=0, radius=7.5, inner=0.5):
    """Landmarks spread uniformly over an annulus around the origin."""
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(inner ** 2, radius ** 2, n))
    a = rng.uniform(-math.pi, math.pi, n)
    return list(zip(r * np.cos(a), r * np.sin(a)))


@pytest.fixture
def open_field():
    return make_map(scatter(2000, seed=1))


@pytest.fixture(scope="session")
def small_qtable():
    """A quickly trained table shared by planner and baseline tests."""
    from slamsafe.mapgen import generate_map
    from slamsafe.oracle import calibrate
    from slamsafe.qlearn import EpsilonSchedule, train

    maps = [generate_map(1, "room", "dense"), generate_map(3, "corridor", "dense"),
            generate_map(4, "corner", "dense")]
    res = train(maps, calibrate(0.002, 0.5, 0.25), EpsilonSchedule(), 20000, seed=0,
                alpha=0.01, gamma=0.1, alpha_schedule="harmonic")
    return res


# --- acceptance report ----------------------------------------------------

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash[ACCEPTANCE]

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
