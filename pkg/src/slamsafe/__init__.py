"""SLAM-safe navigation: a 2D simulator, a learned action filter and a gated planner."""

from .action_filter import FilterConfig, choose_threshold, is_safe, safe_mask
from .errors import (CollisionError, ConfigError, DegenerateError, FormatError, MissingArtifactError,
                     NoPathError, RangeError, SlamSafeError, StuckError)
from .features import CandidateSet, CellIndex, StateActionFeatures, discretize, evaluate_candidates, featurize
from .mapgen import generate_map
from .oracle import BreakageModel, breakage, calibrate, default_model
from .planner import (PlannerConfig, PlanStep, RecoveryCandidate, RunOutcome, TrajectorySegment,
                      bernstein_eval, plan_to_goal, run_naive_planner, run_safe_planner)
from .qlearn import (EpsilonSchedule, QTable, RewardWeights, load_qtable, q_update, reward,
                     save_qtable, train)
from .world import (BACKWARD, FORWARD, CameraModel, Landmark, Pose, WorldMap, fov_overlap, load_map,
                    save_map, step_kinematics, visible_set)

__version__ = "0.1.0"
