"""Gaze + speech target selection and action planning for a tabletop robot.

The pipeline turns a scenario (word-timed transcript, gaze stream with head
poses, dual-view scene annotations) into the referred object in both camera
views and a validated sequence of parameterized robot actions, and ships a
deterministic replay harness with seeded noise studies.
"""

from .errors import DeixisError
from .fusion import alpha_for, fuse, normalized_weights
from .geometry import Frame, FrameId, Intrinsics, Pose, compose, invert, project, reproject_gaze, transform_point
from .harness import (
    Metrics,
    RunConfig,
    RunResult,
    Scenario,
    Stage,
    complexity,
    gaze_error,
    load_scenario,
    monte_carlo,
    run_scenario,
    scenario_from_json,
    success_rate,
)
from .interpreter import InterpretedCommand, InterpreterConfig, TargetProperty, TargetSlot, interpret, validate_o1
from .alignment import AlignmentResult, KeypointMatch, MatchSet, align, synth_matches
from .planner import Action, ActionParams, Policy, PlannerState, Workspace, parse_policy, plan, serialize_policy, validate_policy
from .scene import BBox, ObjectObservation, ReferredObject, SceneObservationSet, View, observe
from .streams import GazeRecord, HumanInput, Transcript, WordTiming, gaze_window, word_interval

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionParams",
    "AlignmentResult",
    "BBox",
    "DeixisError",
    "Frame",
    "FrameId",
    "GazeRecord",
    "HumanInput",
    "InterpretedCommand",
    "InterpreterConfig",
    "Intrinsics",
    "KeypointMatch",
    "MatchSet",
    "Metrics",
    "ObjectObservation",
    "Policy",
    "PlannerState",
    "Pose",
    "ReferredObject",
    "RunConfig",
    "RunResult",
    "Scenario",
    "SceneObservationSet",
    "Stage",
    "TargetProperty",
    "TargetSlot",
    "Transcript",
    "View",
    "WordTiming",
    "Workspace",
    "align",
    "alpha_for",
    "complexity",
    "compose",
    "fuse",
    "gaze_error",
    "gaze_window",
    "interpret",
    "invert",
    "load_scenario",
    "monte_carlo",
    "normalized_weights",
    "observe",
    "parse_policy",
    "plan",
    "project",
    "reproject_gaze",
    "run_scenario",
    "scenario_from_json",
    "serialize_policy",
    "success_rate",
    "synth_matches",
    "transform_point",
    "validate_o1",
    "validate_policy",
    "word_interval",
]
