"""Reinforcement-learning behavior planning handed to a sampling-based motion
planner through anchor points, with single-shot and cyclic replanning."""

from .envmodel import (AnchorPoint, EnvironmentModel, LaneMap, MapError, MotionPlanningObjective, Pose,
                       VehicleRecord, default_map)
from .execsim import World
from .harness import Scenario, generate_scenarios, run_batch, run_scenario, vil_scenario
from .motionplan import CostWeights, MotionPlanner, PlannerConfig, plan_trajectory
from .orchestrator import Orchestrator, OrchestratorConfig, RunMode, run_episode
from .policy import GnnPolicy, HeuristicPolicy, PolicyWeights, make_policy
from .rollout import RolloutConfig, plan

__version__ = "0.1.0"
