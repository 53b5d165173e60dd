"""Scenario ingestion, end-to-end pipeline runs, metrics, and noise studies.

A scenario file is a self-contained JSON description of one command:
the word-timed transcript, the gaze stream with head poses, per-view scene
annotations, the human-to-robot object correspondence, camera calibration,
planner workspace, agent configuration, and the expected outcome. The
harness executes interpret -> gaze window/reprojection -> observe -> fuse
-> align -> plan, attributes any failure to the stage that raised it, and
never lets one scenario abort a batch.

Scenario JSON schema (version 1), field by field:

    schema_version   int, must be 1
    id               scenario name used in every output row
    seed             base seed for all random draws in this scenario
    tick_rate_hz     head-pose tick rate (default 20)
    transcript       {raw_text, words: [{text, t_start, t_end}]}
    gaze             [{t, point: [x,y,z] | direction: [dx,dy,dz] (+ depth,
                     default 1.0 m), head_pose: pose}] ordered by t
    frames           optional [{t, frame_id}] video frame references
    calibration      {pupil_to_camera: pose, human_intrinsics, robot_intrinsics}
    human_scene      {objects: [{id, category, bbox: [x0,y0,x1,y1],
                     mask?: RLE, pos3?: [x,y,z]}]}
    robot_scene      same shape as human_scene
    correspondence   {human object id -> robot object id}
    match_synth      {per_object, outlier_rate, jitter_px}
    workspace        {lo: [..], hi: [..]} planner position bounds
    staging_position optional [x, y(, z)] used by swap expansion
    interpreter      {mode: rule_based | agent, padding: seconds}
    planner          {mode: rule_based | agent}
    canned_responses optional [{template_id, variables, text}] for the
                     offline agent
    template_id      optional command-template id for complexity reporting
    px_per_cm        optional pixel scale at the target plane; required for
                     gaze noise and gaze-error metrics
    noise            optional {gaze_sigma_cm} default jitter level
    gaze_target      optional {slot, anchor_px: [u, v]} gaze-error anchor
    expected         optional {referred_ids: [robot id per slot],
                     policy_actions: [names], policy_json: canonical str}

Poses are {from: {frame, t?}, to: {frame, t?}, rotation: 3x3 row-major,
translation: [x,y,z]}; times are seconds, image coordinates pixels.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .agent import AgentGateway, MockAgent, RemoteAgent
from .alignment import AlignmentConfig, MatchSynthConfig, align, synth_matches
from .errors import DeixisError, ScenarioError
from .fusion import GazeTrace, fuse, weights_for
from .geometry import Intrinsics, Pose, intrinsics_from_json, pose_from_json, reproject_gaze
from .interpreter import (
    InterpretedCommand,
    InterpreterConfig,
    InterpreterMode,
    interpret,
)
from .planner import (
    PlannerConfig,
    PlannerMode,
    PlannerState,
    Policy,
    Workspace,
    serialize_policy,
)
from . import planner as planner_mod
from .scene import (
    AnnotatedObject,
    BBox,
    SceneAnnotation,
    View,
    decode_rle_mask,
    observe,
)
from .streams import FrameRef, GazeRecord, HumanInput, Transcript, WordTiming, gaze_window
from .templates import template as lookup_template

SCHEMA_VERSION = 1


class Stage(str, Enum):
    INPUT = "input"
    OBSERVATION = "observation"
    FUSION = "fusion"
    ALIGNMENT = "alignment"
    PLANNING = "planning"


class AgentUse(str, Enum):
    RULE_BASED = "rule_based"
    AGENT = "agent"


@dataclass(frozen=True)
class GazeTargetSpec:
    slot: int
    anchor_px: tuple[float, float]


@dataclass(frozen=True)
class ExpectedOutcome:
    referred_ids: Optional[tuple[str, ...]] = None
    policy_actions: Optional[tuple[str, ...]] = None
    policy_json: Optional[str] = None


@dataclass(frozen=True)
class Scenario:
    id: str
    seed: int
    transcript: Transcript
    gaze_stream: tuple[GazeRecord, ...]
    frames: tuple[FrameRef, ...]
    pupil_to_camera: Pose
    human_annotation: SceneAnnotation
    robot_annotation: SceneAnnotation
    correspondence: dict[str, str]
    match_synth: MatchSynthConfig
    workspace: Workspace
    interpreter_mode: AgentUse = AgentUse.RULE_BASED
    planner_mode: AgentUse = AgentUse.RULE_BASED
    padding: float = 0.0
    tick_rate_hz: float = 20.0
    staging_position: Optional[tuple[float, ...]] = None
    canned_responses: tuple[dict, ...] = field(default_factory=tuple)
    template_id: Optional[str] = None
    px_per_cm: Optional[float] = None
    gaze_sigma_cm: float = 0.0
    gaze_target: Optional[GazeTargetSpec] = None
    expected: ExpectedOutcome = ExpectedOutcome()

    def __post_init__(self):
        for human_id, robot_id in self.correspondence.items():
            if all(o.id != human_id for o in self.human_annotation.objects):
                raise ScenarioError(f"correspondence names unknown human object {human_id!r}")
            if all(o.id != robot_id for o in self.robot_annotation.objects):
                raise ScenarioError(f"correspondence names unknown robot object {robot_id!r}")
        if self.expected.referred_ids is not None:
            for rid in self.expected.referred_ids:
                if all(o.id != rid for o in self.robot_annotation.objects):
                    raise ScenarioError(f"expected outcome names unknown robot object {rid!r}")


# --- scenario parsing ---

def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ScenarioError(f"{where}: missing required field {key!r}")
    return data[key]


def _parse_transcript(data: dict) -> Transcript:
    words = tuple(
        WordTiming(w["text"], float(w["t_start"]), float(w["t_end"]))
        for w in _require(data, "words", "transcript")
    )
    return Transcript(words, _require(data, "raw_text", "transcript"))


def _parse_gaze_point(entry: dict, where: str) -> np.ndarray:
    if "point" in entry:
        return np.asarray(entry["point"], dtype=np.float64)
    if "direction" in entry:
        direction = np.asarray(entry["direction"], dtype=np.float64)
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            raise ScenarioError(f"{where}: gaze direction must be nonzero")
        return direction / norm * float(entry.get("depth", 1.0))
    raise ScenarioError(f"{where}: gaze record needs 'point' or 'direction'")


def _parse_scene(data: dict, view: View, intrinsics: Intrinsics, where: str) -> SceneAnnotation:
    objects = []
    for i, obj in enumerate(_require(data, "objects", where)):
        bbox_vals = obj["bbox"]
        if len(bbox_vals) != 4:
            raise ScenarioError(f"{where}.objects[{i}]: bbox must have 4 values")
        mask = decode_rle_mask(obj["mask"]) if obj.get("mask") is not None else None
        pos3 = tuple(float(v) for v in obj["pos3"]) if obj.get("pos3") is not None else None
        objects.append(
            AnnotatedObject(
                id=str(obj["id"]),
                category=str(obj["category"]),
                bbox=BBox(*(float(v) for v in bbox_vals)),
                mask=mask,
                pos3=pos3,
            )
        )
    return SceneAnnotation(view, intrinsics, tuple(objects))


def scenario_from_json(data: dict) -> Scenario:
    """Parse and validate one scenario document."""
    try:
        version = int(_require(data, "schema_version", "scenario"))
        if version != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}")
        scenario_id = str(_require(data, "id", "scenario"))
        calibration = _require(data, "calibration", "scenario")
        human_k = intrinsics_from_json(_require(calibration, "human_intrinsics", "calibration"))
        robot_k = intrinsics_from_json(_require(calibration, "robot_intrinsics", "calibration"))
        pupil_to_camera = pose_from_json(_require(calibration, "pupil_to_camera", "calibration"))
        transcript = _parse_transcript(_require(data, "transcript", "scenario"))
        gaze_records = []
        for i, entry in enumerate(_require(data, "gaze", "scenario")):
            where = f"gaze[{i}]"
            gaze_records.append(
                GazeRecord(
                    t=float(_require(entry, "t", where)),
                    gaze_pupil=_parse_gaze_point(entry, where),
                    head_pose=pose_from_json(_require(entry, "head_pose", where)),
                )
            )
        frames = tuple(
            FrameRef(float(entry["t"]), str(entry["frame_id"])) for entry in data.get("frames", [])
        )
        # assembling the bundle enforces stream ordering and a shared interval
        HumanInput(transcript, tuple(gaze_records), frames)
        human_scene = _parse_scene(_require(data, "human_scene", "scenario"), View.HUMAN, human_k, "human_scene")
        robot_scene = _parse_scene(_require(data, "robot_scene", "scenario"), View.ROBOT, robot_k, "robot_scene")
        workspace_data = _require(data, "workspace", "scenario")
        workspace = Workspace(
            tuple(float(v) for v in _require(workspace_data, "lo", "workspace")),
            tuple(float(v) for v in _require(workspace_data, "hi", "workspace")),
        )
        match_data = data.get("match_synth", {})
        match_synth = MatchSynthConfig(
            per_object=int(match_data.get("per_object", 10)),
            outlier_rate=float(match_data.get("outlier_rate", 0.0)),
            jitter_px=float(match_data.get("jitter_px", 0.0)),
        )
        interp_data = data.get("interpreter", {})
        planner_data = data.get("planner", {})
        noise_data = data.get("noise", {})
        px_per_cm = float(data["px_per_cm"]) if data.get("px_per_cm") is not None else None
        gaze_sigma_cm = float(noise_data.get("gaze_sigma_cm", 0.0))
        if gaze_sigma_cm > 0.0 and px_per_cm is None:
            raise ScenarioError("noise.gaze_sigma_cm requires px_per_cm")
        target_data = data.get("gaze_target")
        gaze_target = None
        if target_data is not None:
            if px_per_cm is None:
                raise ScenarioError("gaze_target requires px_per_cm")
            anchor = target_data["anchor_px"]
            gaze_target = GazeTargetSpec(int(target_data.get("slot", 0)), (float(anchor[0]), float(anchor[1])))
        expected_data = data.get("expected", {})
        expected = ExpectedOutcome(
            referred_ids=tuple(str(v) for v in expected_data["referred_ids"])
            if expected_data.get("referred_ids") is not None
            else None,
            policy_actions=tuple(str(v) for v in expected_data["policy_actions"])
            if expected_data.get("policy_actions") is not None
            else None,
            policy_json=expected_data.get("policy_json"),
        )
        template_id = data.get("template_id")
        if template_id is not None:
            lookup_template(template_id)  # fail fast on unknown ids
        staging = data.get("staging_position")
        return Scenario(
            id=scenario_id,
            seed=int(data.get("seed", 0)),
            transcript=transcript,
            gaze_stream=tuple(gaze_records),
            frames=frames,
            pupil_to_camera=pupil_to_camera,
            human_annotation=human_scene,
            robot_annotation=robot_scene,
            correspondence={str(k): str(v) for k, v in _require(data, "correspondence", "scenario").items()},
            match_synth=match_synth,
            workspace=workspace,
            interpreter_mode=AgentUse(interp_data.get("mode", "rule_based")),
            planner_mode=AgentUse(planner_data.get("mode", "rule_based")),
            padding=float(interp_data.get("padding", 0.0)),
            tick_rate_hz=float(data.get("tick_rate_hz", 20.0)),
            staging_position=tuple(float(v) for v in staging) if staging is not None else None,
            canned_responses=tuple(data.get("canned_responses", ())),
            template_id=template_id,
            px_per_cm=px_per_cm,
            gaze_sigma_cm=gaze_sigma_cm,
            gaze_target=gaze_target,
            expected=expected,
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON: {exc}") from exc
    return scenario_from_json(data)


# --- pipeline execution ---

@dataclass(frozen=True)
class RunConfig:
    agent_backend: str = "mock"  # mock | remote
    noise_sigma_cm: Optional[float] = None  # overrides the scenario default
    seed: Optional[int] = None  # overrides the scenario seed
    journal_path: Optional[str] = None
    gateway_override: Optional[AgentGateway] = None


@dataclass(frozen=True)
class SlotOutcome:
    index: int
    word: str
    category: str
    human_id: Optional[str] = None
    robot_id: Optional[str] = None
    expected_id: Optional[str] = None
    fusion_margin: Optional[float] = None
    align_margin: Optional[int] = None
    gaze_px: Optional[tuple[float, float]] = None

    @property
    def correct(self) -> Optional[bool]:
        if self.expected_id is None:
            return None
        return self.robot_id == self.expected_id


@dataclass(frozen=True)
class RunResult:
    scenario_id: str
    slots: tuple[SlotOutcome, ...]
    policy: Optional[Policy]
    success: bool
    failure_stage: Optional[Stage]
    error: Optional[str]
    timings: dict[str, float]
    gaze_error_cm: Optional[float] = None


@dataclass(frozen=True)
class Metrics:
    success_rate: float  # percent
    gaze_error_mean_cm: Optional[float] = None
    gaze_error_std_cm: Optional[float] = None
    complexity: Optional[int] = None


def _gateway_for(scenario: Scenario, cfg: RunConfig) -> Optional[AgentGateway]:
    if scenario.interpreter_mode is AgentUse.RULE_BASED and scenario.planner_mode is AgentUse.RULE_BASED:
        return None
    if cfg.gateway_override is not None:
        return cfg.gateway_override
    if cfg.agent_backend == "remote":
        return RemoteAgent(journal_path=cfg.journal_path)
    return MockAgent.from_entries(list(scenario.canned_responses), journal_path=cfg.journal_path)


def _interpreter_config(scenario: Scenario, gateway: Optional[AgentGateway]) -> InterpreterConfig:
    if scenario.interpreter_mode is AgentUse.AGENT:
        return InterpreterConfig(mode=InterpreterMode.REMOTE, padding=scenario.padding, gateway=gateway)
    return InterpreterConfig(mode=InterpreterMode.RULE_BASED, padding=scenario.padding)


def _planner_config(scenario: Scenario, gateway: Optional[AgentGateway]) -> PlannerConfig:
    if scenario.planner_mode is AgentUse.AGENT:
        return PlannerConfig(
            mode=PlannerMode.REMOTE, staging_position=scenario.staging_position, gateway=gateway
        )
    return PlannerConfig(mode=PlannerMode.RULE_BASED, staging_position=scenario.staging_position)


def _build_trace(scenario: Scenario, interval: tuple[float, float]) -> GazeTrace:
    records = gaze_window(scenario.gaze_stream, interval, scenario.tick_rate_hz)
    reference_pose = records[0].head_pose
    points = np.array(
        [
            reproject_gaze(
                rec.gaze_pupil,
                scenario.pupil_to_camera,
                reference_pose,
                rec.head_pose,
                scenario.human_annotation.intrinsics,
            )
            for rec in records
        ]
    )
    return GazeTrace(points)


def _weighted_gaze_px(trace: GazeTrace) -> tuple[float, float]:
    weights = weights_for(trace.n_max).weights
    mean = np.average(trace.points, axis=0, weights=weights)
    return (float(mean[0]), float(mean[1]))


def _policy_matches(policy: Policy, expected: ExpectedOutcome) -> bool:
    if expected.policy_actions is not None and policy.action_names() != list(expected.policy_actions):
        return False
    if expected.policy_json is not None and serialize_policy(policy) != expected.policy_json:
        return False
    return True


def run_scenario(scenario: Scenario, cfg: RunConfig = RunConfig()) -> RunResult:
    """Execute the full pipeline once; stage errors become the failure stage."""
    timings: dict[str, float] = {}
    seed = cfg.seed if cfg.seed is not None else scenario.seed
    sigma_cm = cfg.noise_sigma_cm if cfg.noise_sigma_cm is not None else scenario.gaze_sigma_cm
    sigma_px = 0.0
    if sigma_cm > 0.0:
        if scenario.px_per_cm is None:
            raise ScenarioError(f"scenario {scenario.id}: gaze noise requires px_per_cm")
        sigma_px = sigma_cm * scenario.px_per_cm
    rng = np.random.default_rng(np.random.SeedSequence((seed, 101)))
    gateway = _gateway_for(scenario, cfg)
    outcomes: list[SlotOutcome] = []

    def fail(stage: Stage, exc: DeixisError) -> RunResult:
        return RunResult(
            scenario_id=scenario.id,
            slots=tuple(outcomes),
            policy=None,
            success=False,
            failure_stage=stage,
            error=f"{type(exc).__name__}: {exc}",
            timings=dict(timings),
        )

    # input: command interpretation plus gaze windows and reprojection
    started = time.perf_counter()
    try:
        command: InterpretedCommand = interpret(scenario.transcript, _interpreter_config(scenario, gateway))
        traces = []
        for slot in command.slots:
            trace = _build_trace(scenario, slot.interval)
            if sigma_px > 0.0:
                offset = rng.normal(0.0, sigma_px, size=2)
                trace = GazeTrace(trace.points + offset)
            traces.append(trace)
    except DeixisError as exc:
        return fail(Stage.INPUT, exc)
    timings["input"] = time.perf_counter() - started

    outcomes.extend(
        SlotOutcome(
            index=i,
            word=slot.source_word,
            category=slot.category,
            expected_id=scenario.expected.referred_ids[i]
            if scenario.expected.referred_ids is not None and i < len(scenario.expected.referred_ids)
            else None,
            gaze_px=_weighted_gaze_px(traces[i]),
        )
        for i, slot in enumerate(command.slots)
    )

    # observation: both views, every slot
    started = time.perf_counter()
    try:
        human_sets = [observe(scenario.human_annotation, slot.category) for slot in command.slots]
        robot_sets = [observe(scenario.robot_annotation, slot.category) for slot in command.slots]
    except DeixisError as exc:
        return fail(Stage.OBSERVATION, exc)
    timings["observation"] = time.perf_counter() - started

    # fusion: pick the referred object in the human view, per slot
    started = time.perf_counter()
    try:
        fusion_results = [fuse(traces[i], human_sets[i]) for i in range(len(command.slots))]
    except DeixisError as exc:
        return fail(Stage.FUSION, exc)
    timings["fusion"] = time.perf_counter() - started
    for i, fr in enumerate(fusion_results):
        outcomes[i] = _replace_outcome(outcomes[i], human_id=fr.selected.observation.id, fusion_margin=fr.margin)

    # alignment: carry each selection into the robot view
    started = time.perf_counter()
    try:
        referred = []
        for i, fr in enumerate(fusion_results):
            match_rng = np.random.default_rng(np.random.SeedSequence((seed, 7001, i)))
            matches = synth_matches(
                fr.selected.observation, robot_sets[i], scenario.correspondence, scenario.match_synth, match_rng
            )
            alignment = align(matches, robot_sets[i], AlignmentConfig())
            referred.append(alignment.referred)
            outcomes[i] = _replace_outcome(
                outcomes[i], robot_id=alignment.referred.observation.id, align_margin=alignment.margin
            )
    except DeixisError as exc:
        return fail(Stage.ALIGNMENT, exc)
    timings["alignment"] = time.perf_counter() - started

    # planning
    started = time.perf_counter()
    try:
        state = PlannerState(tuple(referred), command, scenario.transcript, scenario.workspace)
        policy = planner_mod.plan(state, _planner_config(scenario, gateway))
    except DeixisError as exc:
        return fail(Stage.PLANNING, exc)
    timings["planning"] = time.perf_counter() - started

    gaze_error_cm = _gaze_error_from_outcomes(outcomes, scenario)
    slots_ok = all(o.correct is not False for o in outcomes)
    success = slots_ok and _policy_matches(policy, scenario.expected)
    return RunResult(
        scenario_id=scenario.id,
        slots=tuple(outcomes),
        policy=policy,
        success=success,
        failure_stage=None,
        error=None,
        timings=dict(timings),
        gaze_error_cm=gaze_error_cm,
    )


def _replace_outcome(outcome: SlotOutcome, **changes) -> SlotOutcome:
    return dataclasses.replace(outcome, **changes)


def _gaze_error_from_outcomes(outcomes: Sequence[SlotOutcome], scenario: Scenario) -> Optional[float]:
    target = scenario.gaze_target
    if target is None or target.slot >= len(outcomes):
        return None
    gaze_px = outcomes[target.slot].gaze_px
    if gaze_px is None or scenario.px_per_cm is None:
        return None
    err_px = math.hypot(gaze_px[0] - target.anchor_px[0], gaze_px[1] - target.anchor_px[1])
    return err_px / scenario.px_per_cm


def gaze_error(result: RunResult, scenario: Scenario) -> float:
    """Distance in cm between the run's summary gaze point and the annotated anchor.

    The summary point is the recency-weighted mean of the slot's projected
    gaze trace, converted with the scenario's pixel scale at the target plane.
    """
    if scenario.gaze_target is None:
        raise ScenarioError(f"scenario {scenario.id} declares no gaze target")
    value = _gaze_error_from_outcomes(result.slots, scenario)
    if value is None:
        raise ScenarioError(f"run for {scenario.id} carries no gaze point for the target slot")
    return value


def success_rate(results: Sequence, template_id: Optional[str] = None) -> Metrics:
    """Aggregate a batch: percent correct plus gaze-error statistics."""
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    total = len(results)
    correct = sum(1 for r in results if r.success)
    errors = [r.gaze_error_cm for r in results if getattr(r, "gaze_error_cm", None) is not None]
    mean = float(np.mean(errors)) if errors else None
    std = float(np.std(errors)) if errors else None
    cx = complexity(template_id) if template_id is not None else None
    return Metrics(100.0 * correct / total, mean, std, cx)


def complexity(template_id: str, policy: Optional[Policy] = None) -> int:
    """Task complexity: predefined actions plus parameters for a template.

    The per-template counts are declared data (see templates module); the
    policy argument is accepted for interface symmetry but the accounting
    never depends on the expanded step list.
    """
    row = lookup_template(template_id)
    return row.params + row.actions


# --- Monte-Carlo noise studies ---

@dataclass(frozen=True)
class TrialSlot:
    slot: int
    selected_id: Optional[str]
    expected_id: Optional[str]
    gaze_error_cm: Optional[float]
    stage: Optional[Stage]


@dataclass(frozen=True)
class TrialOutcome:
    scenario_id: str
    sigma_cm: float
    trial: int
    slots: tuple[TrialSlot, ...]
    success: bool

    @property
    def gaze_error_cm(self) -> Optional[float]:
        for slot in self.slots:
            if slot.gaze_error_cm is not None:
                return slot.gaze_error_cm
        return None


def monte_carlo(
    scenario: Scenario,
    trials: int,
    sigmas_cm: Sequence[float],
    cfg: RunConfig = RunConfig(),
) -> list[TrialOutcome]:
    """Seeded gaze-noise study.

    Gaze jitter is the swept variable: each (trial, slot) draws one shared
    offset in the target plane and re-runs selection (fusion + alignment)
    on the precomputed noiseless traces. Interpretation, observation, and
    keypoint synthesis do not depend on the jitter, so they are computed
    once per scenario; the planning check comes from the noiseless baseline
    run. Identical (scenario, seed, config) inputs give identical outcomes.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seed = cfg.seed if cfg.seed is not None else scenario.seed
    baseline = run_scenario(scenario, RunConfig(
        agent_backend=cfg.agent_backend,
        noise_sigma_cm=0.0,
        seed=seed,
        gateway_override=cfg.gateway_override,
    ))
    if baseline.failure_stage is not None:
        raise ScenarioError(
            f"scenario {scenario.id} fails at stage {baseline.failure_stage.value} without noise: {baseline.error}"
        )
    policy_ok = baseline.policy is not None and _policy_matches(baseline.policy, scenario.expected)

    gateway = _gateway_for(scenario, cfg)
    command = interpret(scenario.transcript, _interpreter_config(scenario, gateway))
    traces = [_build_trace(scenario, slot.interval) for slot in command.slots]
    human_sets = [observe(scenario.human_annotation, slot.category) for slot in command.slots]
    robot_sets = [observe(scenario.robot_annotation, slot.category) for slot in command.slots]
    expected_ids = scenario.expected.referred_ids

    # alignment outcome per (slot, human object): jitter-independent
    align_map: list[dict[str, tuple[Optional[str], Optional[Stage]]]] = []
    for i in range(len(command.slots)):
        per_object: dict[str, tuple[Optional[str], Optional[Stage]]] = {}
        for j, human_obj in enumerate(human_sets[i].objects):
            match_rng = np.random.default_rng(np.random.SeedSequence((seed, 7001, i, j)))
            try:
                matches = synth_matches(
                    human_obj, robot_sets[i], scenario.correspondence, scenario.match_synth, match_rng
                )
                result = align(matches, robot_sets[i], AlignmentConfig())
                per_object[human_obj.id] = (result.referred.observation.id, None)
            except DeixisError:
                per_object[human_obj.id] = (None, Stage.ALIGNMENT)
        align_map.append(per_object)

    target = scenario.gaze_target
    px_per_cm = scenario.px_per_cm
    outcomes: list[TrialOutcome] = []
    for sigma_index, sigma_cm in enumerate(sigmas_cm):
        if sigma_cm > 0.0 and px_per_cm is None:
            raise ScenarioError(f"scenario {scenario.id}: gaze noise requires px_per_cm")
        sigma_px = sigma_cm * px_per_cm if px_per_cm is not None else 0.0
        for trial in range(trials):
            rng = np.random.default_rng(np.random.SeedSequence((seed, sigma_index, trial)))
            slot_rows: list[TrialSlot] = []
            all_ok = True
            for i in range(len(command.slots)):
                noisy = traces[i].points
                if sigma_px > 0.0:
                    noisy = noisy + rng.normal(0.0, sigma_px, size=2)
                fusion = fuse(GazeTrace(noisy), human_sets[i])
                human_id = fusion.selected.observation.id
                robot_id, stage = align_map[i][human_id]
                expected_id = expected_ids[i] if expected_ids is not None and i < len(expected_ids) else None
                if stage is not None or (expected_id is not None and robot_id != expected_id):
                    all_ok = False
                error_cm = None
                if target is not None and target.slot == i and px_per_cm is not None:
                    mean_px = _weighted_gaze_px(GazeTrace(noisy))
                    error_cm = math.hypot(
                        mean_px[0] - target.anchor_px[0], mean_px[1] - target.anchor_px[1]
                    ) / px_per_cm
                slot_rows.append(TrialSlot(i, robot_id, expected_id, error_cm, stage))
            outcomes.append(
                TrialOutcome(scenario.id, float(sigma_cm), trial, tuple(slot_rows), all_ok and policy_ok)
            )
    return outcomes


# --- delimited output ---

RESULT_COLUMNS = ("scenario_id", "trial", "slot", "selected_id", "expected_id", "success", "gaze_error_cm", "stage")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Stage):
        return value.value
    return str(value)


def trial_rows(outcomes: Sequence[TrialOutcome], with_sigma: bool = False) -> list[list[str]]:
    """Flatten trial outcomes to CSV rows, sorted for order-insensitive output."""
    rows = []
    for outcome in sorted(outcomes, key=lambda o: (o.scenario_id, o.sigma_cm, o.trial)):
        for slot in outcome.slots:
            row = [
                outcome.scenario_id,
                _fmt(outcome.trial),
                _fmt(slot.slot),
                _fmt(slot.selected_id),
                _fmt(slot.expected_id),
                _fmt(outcome.success),
                _fmt(slot.gaze_error_cm),
                _fmt(slot.stage),
            ]
            if with_sigma:
                row.insert(1, _fmt(outcome.sigma_cm))
            rows.append(row)
    return rows


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="")


def write_results_csv(outcomes: Sequence[TrialOutcome], path: str | Path) -> None:
    write_csv(path, RESULT_COLUMNS, trial_rows(outcomes))


def write_sweep_csv(outcomes: Sequence[TrialOutcome], path: str | Path) -> None:
    header = (RESULT_COLUMNS[0], "sigma_cm") + RESULT_COLUMNS[1:]
    write_csv(path, header, trial_rows(outcomes, with_sigma=True))


def aggregate_by_sigma(outcomes: Sequence[TrialOutcome]) -> dict[tuple[str, float], Metrics]:
    """Per (scenario, noise level) success rate and gaze-error statistics."""
    grouped: dict[tuple[str, float], list[TrialOutcome]] = {}
    for outcome in outcomes:
        grouped.setdefault((outcome.scenario_id, outcome.sigma_cm), []).append(outcome)
    return {key: success_rate(group) for key, group in sorted(grouped.items())}


def write_metrics_csv(
    outcomes: Sequence[TrialOutcome],
    path: str | Path,
    template_ids: Optional[dict[str, str]] = None,
) -> None:
    header = ("scenario_id", "sigma_cm", "trials", "success_rate", "gaze_error_mean_cm", "gaze_error_std_cm", "complexity")
    rows = []
    for (scenario_id, sigma_cm), metrics in aggregate_by_sigma(outcomes).items():
        template_id = (template_ids or {}).get(scenario_id)
        rows.append([
            scenario_id,
            _fmt(sigma_cm),
            _fmt(sum(1 for o in outcomes if o.scenario_id == scenario_id and o.sigma_cm == sigma_cm)),
            _fmt(metrics.success_rate),
            _fmt(metrics.gaze_error_mean_cm),
            _fmt(metrics.gaze_error_std_cm),
            _fmt(complexity(template_id) if template_id else None),
        ])
    write_csv(path, header, rows)


# --- symbolic policy execution ---

def symbolic_execute(policy: Policy) -> dict[str, dict]:
    """Track which object ends up where, identifying objects by pick position.

    Objects are keyed by first-pick position; a later pick at an occupied
    position moves that same object. Used to check that multi-step
    rearrangements (swap in particular) conserve the object set.
    """
    locations: dict[str, tuple[float, ...]] = {}
    starts: dict[str, tuple[float, ...]] = {}
    labels: dict[str, str] = {}
    held: Optional[str] = None
    counter = 0
    for step in policy.steps:
        if step.name == "Pick" and step.params.position is not None:
            position = step.params.position
            token = next((k for k, pos in locations.items() if pos == position), None)
            if token is None:
                token = f"obj{counter}"
                counter += 1
                starts[token] = position
                labels[token] = step.params.label or token
            held = token
        elif step.name == "Put" and step.params.position is not None and held is not None:
            locations[held] = step.params.position
            held = None
    return {
        token: {"label": labels[token], "start": starts[token], "end": locations.get(token, starts[token])}
        for token in starts
    }
