"""Shared test fixtures and small oracle helpers."""

from __future__ import annotations

import numpy as np
import pytest

from deixis.geometry import Frame, FrameId, Pose, rotation_about_axis
from deixis.interpreter import InterpreterConfig, interpret
from deixis.planner import PlannerState, Workspace
from deixis.scene import BBox, ObjectObservation, ReferredObject, View
from deixis.streams import Transcript, WordTiming

WORD_DURATION = 0.4
WORD_PERIOD = 0.5
FIRST_WORD_AT = 0.2


def make_transcript(text: str, start: float = FIRST_WORD_AT) -> Transcript:
    """Uniform word timings matching the bundled scenario convention."""
    words = []
    for i, token in enumerate(text.split()):
        t0 = start + WORD_PERIOD * i
        words.append(WordTiming(token, t0, t0 + WORD_DURATION))
    return Transcript(tuple(words), text)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-6:
        axis = rng.normal(size=3)
    return rotation_about_axis(axis, rng.uniform(0.0, 2.0 * np.pi))


def random_pose(
    rng: np.random.Generator,
    from_frame: FrameId,
    to_frame: FrameId,
    translation_scale: float = 2.0,
    rotation_scale: float = 1.0,
) -> Pose:
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-6:
        axis = rng.normal(size=3)
    rotation = rotation_about_axis(axis, rotation_scale * rng.uniform(0.0, 2.0 * np.pi))
    return Pose(from_frame, to_frame, rotation, rng.uniform(-translation_scale, translation_scale, size=3))


def planner_state_for(command_text: str, workspace: Workspace | None = None) -> PlannerState:
    """A planner state with one synthetic referred object per slot."""
    if workspace is None:
        workspace = Workspace((0.0, 0.0), (1280.0, 720.0))
    transcript = make_transcript(command_text)
    command = interpret(transcript, InterpreterConfig())
    referred = []
    for i in range(len(command.slots)):
        x = 100.0 + 150.0 * i
        bbox = BBox(x, 100.0, x + 60.0, 160.0)
        referred.append(ReferredObject(View.ROBOT, ObjectObservation(f"obj_{i}", bbox)))
    return PlannerState(tuple(referred), command, transcript, workspace)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def gc_frame() -> FrameId:
    return FrameId(Frame.GLASSES_CAMERA)
