"""Builders for the bundled example scenarios.

Four desk-scale scenario families mirror the evaluation setups the pipeline
is meant to reproduce: a nine-pawn selection grid (s1), a single-step pick
in a cluttered tabletop (s2), a multi-step put (s3), and a causally chained
put-then-pour (s4), plus the worked put-the-apple-there example used across
the docs and tests. Builders return plain JSON-shaped dicts; the copies
under ``data/`` are generated from these functions and a test keeps them in
sync.

Gaze streams are constructed so that every head-pose tick inside a slot
word's interval has a gaze record at exactly that timestamp pointing at the
slot's target; selection is therefore exact in the noiseless case.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

from .geometry import Intrinsics
from .harness import scenario_from_json
from .interpreter import InterpreterConfig, interpret, serialize_command
from .planner import PlannerConfig, PlannerState, plan, serialize_policy, build_plan_variables
from .scene import ObjectObservation, ReferredObject, View
from .streams import Transcript, WordTiming

HUMAN_K = Intrinsics(fx=600.0, fy=600.0, cx=704.0, cy=704.0, width=1408, height=1408)
ROBOT_K = Intrinsics(fx=600.0, fy=600.0, cx=640.0, cy=360.0, width=1280, height=720)

WORD_DURATION = 0.4
WORD_PERIOD = 0.5
FIRST_WORD_AT = 0.2
TICK_RATE = 20.0


def _identity_pose_json(from_frame: dict, to_frame: dict) -> dict:
    return {
        "from": from_frame,
        "to": to_frame,
        "rotation": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        "translation": [0.0, 0.0, 0.0],
    }


def _intrinsics_json(k: Intrinsics) -> dict:
    return {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "width": k.width, "height": k.height}


def _words(text: str) -> dict:
    tokens = text.split()
    words = []
    for i, token in enumerate(tokens):
        start = FIRST_WORD_AT + WORD_PERIOD * i
        words.append({"text": token, "t_start": start, "t_end": start + WORD_DURATION})
    return {"raw_text": text, "words": words}


def _gaze_pupil(target_px: tuple[float, float], k: Intrinsics, depth: float = 1.0) -> list[float]:
    return [
        (target_px[0] - k.cx) * depth / k.fx,
        (target_px[1] - k.cy) * depth / k.fy,
        depth,
    ]


def _gaze_records(transcript: dict, fixations: dict[int, tuple[float, float]]) -> list[dict]:
    """One gaze record per head-pose tick of each fixated word.

    ``fixations`` maps word index -> human-view target pixel. Record
    timestamps are computed with the same expression the window slicer
    uses, so each tick finds an exact-time record.
    """
    records = []
    for word_index, target_px in sorted(fixations.items()):
        word = transcript["words"][word_index]
        t_start, t_end = word["t_start"], word["t_end"]
        n_max = math.floor((t_end - t_start) * TICK_RATE - 1.0)
        for n in range(n_max + 1):
            t = t_start + n / TICK_RATE
            records.append(
                {
                    "t": t,
                    "point": _gaze_pupil(target_px, HUMAN_K),
                    "head_pose": _identity_pose_json(
                        {"frame": "gc", "t": t}, {"frame": "s"}
                    ),
                }
            )
    return records


def _obj(object_id: str, category: str, cx: float, cy: float, half_w: float, half_h: float) -> dict:
    return {
        "id": object_id,
        "category": category,
        "bbox": [cx - half_w, cy - half_h, cx + half_w, cy + half_h],
    }


def _word_index(transcript: dict, word: str, occurrence: int = 0) -> int:
    seen = 0
    for i, entry in enumerate(transcript["words"]):
        if entry["text"].lower().strip(".,!?") == word:
            if seen == occurrence:
                return i
            seen += 1
    raise KeyError(f"{word!r} (occurrence {occurrence}) not in transcript")


def _base_scenario(scenario_id: str, seed: int = 0) -> dict:
    return {
        "schema_version": 1,
        "id": scenario_id,
        "seed": seed,
        "tick_rate_hz": TICK_RATE,
        "calibration": {
            "pupil_to_camera": _identity_pose_json({"frame": "gp"}, {"frame": "gc"}),
            "human_intrinsics": _intrinsics_json(HUMAN_K),
            "robot_intrinsics": _intrinsics_json(ROBOT_K),
        },
        "workspace": {"lo": [0.0, 0.0], "hi": [1280.0, 720.0]},
        "interpreter": {"mode": "rule_based", "padding": 0.0},
        "planner": {"mode": "rule_based"},
        "match_synth": {"per_object": 12, "outlier_rate": 0.0, "jitter_px": 1.0},
    }


def build_s1(seed: int = 0, target_index: int = 4) -> dict:
    """Nine-pawn selection grid: pawns 15 cm apart, 4 px per cm in view."""
    spacing_h, spacing_r = 60.0, 40.0
    doc = _base_scenario("s1_pawns", seed)
    human_objects, robot_objects, correspondence = [], [], {}
    for row in range(3):
        for col in range(3):
            k = row * 3 + col
            hx = HUMAN_K.cx + spacing_h * (col - 1)
            hy = HUMAN_K.cy + spacing_h * (row - 1)
            rx = ROBOT_K.cx + spacing_r * (col - 1)
            ry = ROBOT_K.cy + spacing_r * (row - 1)
            human_objects.append(_obj(f"pawn_{k}", "pieces", hx, hy, 20.0, 20.0))
            robot_objects.append(_obj(f"rpawn_{k}", "pieces", rx, ry, 12.0, 12.0))
            correspondence[f"pawn_{k}"] = f"rpawn_{k}"
    transcript = _words("grab the pieces")
    target_px = (
        HUMAN_K.cx + spacing_h * (target_index % 3 - 1),
        HUMAN_K.cy + spacing_h * (target_index // 3 - 1),
    )
    doc.update(
        {
            "transcript": transcript,
            "gaze": _gaze_records(transcript, {_word_index(transcript, "pieces"): target_px}),
            "human_scene": {"objects": human_objects},
            "robot_scene": {"objects": robot_objects},
            "correspondence": correspondence,
            "template_id": "grab_pieces",
            "px_per_cm": 4.0,
            "gaze_target": {"slot": 0, "anchor_px": list(target_px)},
            "expected": {
                "referred_ids": [f"rpawn_{target_index}"],
                "policy_actions": ["OpenGripper", "Pick", "CloseGripper"],
            },
        }
    )
    return doc


# shared tabletop for s2-s4: two cups, two similar fruits, two plates
_TABLETOP_HUMAN = [
    ("cup_h_0", "cup", 400.0, 600.0, 45.0, 60.0),
    ("cup_h_1", "cup", 800.0, 600.0, 45.0, 60.0),
    ("fruit_h_0", "fruit", 400.0, 850.0, 40.0, 40.0),
    ("fruit_h_1", "fruit", 800.0, 850.0, 40.0, 40.0),
    ("plate_h_0", "plate", 500.0, 1100.0, 110.0, 60.0),
    ("plate_h_1", "plate", 900.0, 1100.0, 110.0, 60.0),
]
_TABLETOP_ROBOT = [
    ("cup_r_0", "cup", 300.0, 200.0, 35.0, 45.0),
    ("cup_r_1", "cup", 700.0, 200.0, 35.0, 45.0),
    ("fruit_r_0", "fruit", 300.0, 400.0, 30.0, 30.0),
    ("fruit_r_1", "fruit", 700.0, 400.0, 30.0, 30.0),
    ("plate_r_0", "plate", 400.0, 600.0, 90.0, 50.0),
    ("plate_r_1", "plate", 900.0, 600.0, 90.0, 50.0),
]
_TABLETOP_MAP = {h[0]: r[0] for h, r in zip(_TABLETOP_HUMAN, _TABLETOP_ROBOT)}


def _tabletop(doc: dict) -> dict:
    doc["human_scene"] = {"objects": [_obj(*spec) for spec in _TABLETOP_HUMAN]}
    doc["robot_scene"] = {"objects": [_obj(*spec) for spec in _TABLETOP_ROBOT]}
    doc["correspondence"] = dict(_TABLETOP_MAP)
    doc["px_per_cm"] = 4.0
    return doc


def _human_center(object_id: str) -> tuple[float, float]:
    for oid, _, cx, cy, _, _ in _TABLETOP_HUMAN:
        if oid == object_id:
            return (cx, cy)
    raise KeyError(object_id)


def build_s2(seed: int = 0) -> dict:
    """Single-step action: pick one of two similar cups."""
    doc = _tabletop(_base_scenario("s2_pick", seed))
    transcript = _words("pick up the cup")
    doc.update(
        {
            "transcript": transcript,
            "gaze": _gaze_records(transcript, {_word_index(transcript, "cup"): _human_center("cup_h_1")}),
            "template_id": "pick_object",
            "expected": {
                "referred_ids": ["cup_r_1"],
                "policy_actions": ["OpenGripper", "Pick", "CloseGripper"],
            },
        }
    )
    return doc


def build_s3(seed: int = 0) -> dict:
    """Multi-step action: put one fruit on one plate."""
    doc = _tabletop(_base_scenario("s3_put", seed))
    transcript = _words("put the fruit on the plate")
    doc.update(
        {
            "transcript": transcript,
            "gaze": _gaze_records(
                transcript,
                {
                    _word_index(transcript, "fruit"): _human_center("fruit_h_0"),
                    _word_index(transcript, "plate"): _human_center("plate_h_1"),
                },
            ),
            "template_id": "put_object_on_plate",
            "expected": {
                "referred_ids": ["fruit_r_0", "plate_r_1"],
                "policy_actions": ["OpenGripper", "Pick", "CloseGripper", "Put", "OpenGripper"],
            },
        }
    )
    return doc


def build_s4(seed: int = 0) -> dict:
    """Causal action: the pour destination is the previous placement."""
    doc = _tabletop(_base_scenario("s4_causal", seed))
    transcript = _words("put this on that then pour something from this on it")
    doc.update(
        {
            "transcript": transcript,
            "gaze": _gaze_records(
                transcript,
                {
                    _word_index(transcript, "this", 0): _human_center("fruit_h_0"),
                    _word_index(transcript, "that", 0): _human_center("plate_h_0"),
                    _word_index(transcript, "this", 1): _human_center("cup_h_1"),
                },
            ),
            "template_id": "put_then_pour_deictic",
            "expected": {
                "referred_ids": ["fruit_r_0", "plate_r_0", "cup_r_1"],
                "policy_actions": [
                    "OpenGripper", "Pick", "CloseGripper", "Put", "OpenGripper",
                    "Pick", "CloseGripper", "Pour",
                ],
            },
        }
    )
    return doc


def _transcript_obj(transcript: dict) -> Transcript:
    return Transcript(
        tuple(WordTiming(w["text"], w["t_start"], w["t_end"]) for w in transcript["words"]),
        transcript["raw_text"],
    )


def build_apple(agent_mode: bool = True, seed: int = 0) -> dict:
    """The worked example: "please put the apple there on the table".

    In agent mode the scenario ships canned interpreter and planner replies
    produced by the rule-based twins, so the offline agent path yields the
    exact same policy bytes.
    """
    doc = _base_scenario("apple_put_there", seed)
    human_objects = [
        _obj("apple_h", "apple", 650.0, 800.0, 45.0, 45.0),
        _obj("spot_h", "table", 1000.0, 900.0, 80.0, 60.0),
    ]
    robot_objects = [
        _obj("apple_r", "apple", 640.0, 340.0, 40.0, 40.0),
        _obj("spot_r", "table", 900.0, 420.0, 60.0, 40.0),
    ]
    transcript = _words("please put the apple there on the table")
    doc["px_per_cm"] = 4.0
    doc.update(
        {
            "transcript": transcript,
            "gaze": _gaze_records(
                transcript,
                {
                    _word_index(transcript, "apple"): (650.0, 800.0),
                    _word_index(transcript, "there"): (1000.0, 900.0),
                },
            ),
            "human_scene": {"objects": human_objects},
            "robot_scene": {"objects": robot_objects},
            "correspondence": {"apple_h": "apple_r", "spot_h": "spot_r"},
            "template_id": "put_object_on_plate",
            "expected": {"referred_ids": ["apple_r", "spot_r"]},
        }
    )

    # derive the expected policy (and agent replies) from the rule-based twins
    transcript_obj = _transcript_obj(transcript)
    command = interpret(transcript_obj, InterpreterConfig())
    scenario = scenario_from_json(doc)
    referred = tuple(
        ReferredObject(View.ROBOT, ObjectObservation(obj.id, obj.bbox))
        for rid in doc["expected"]["referred_ids"]
        for obj in scenario.robot_annotation.objects
        if obj.id == rid
    )
    state = PlannerState(referred, command, transcript_obj, scenario.workspace)
    policy = plan(state, PlannerConfig())
    doc["expected"]["policy_actions"] = policy.action_names()
    doc["expected"]["policy_json"] = serialize_policy(policy)
    if agent_mode:
        from .interpreter import build_interpret_variables

        doc["interpreter"] = {"mode": "agent", "padding": 0.0}
        doc["planner"] = {"mode": "agent"}
        doc["canned_responses"] = [
            {
                "template_id": "interpret_v1",
                "variables": build_interpret_variables(transcript_obj),
                "text": serialize_command(command),
            },
            {
                "template_id": "plan_v1",
                "variables": build_plan_variables(state),
                "text": serialize_policy(policy),
            },
        ]
    return doc


# --- fault-injection variants for the failure taxonomy ---

def fault_deleted_matches(seed: int = 0) -> dict:
    """Every keypoint match removed: the run must die at alignment."""
    doc = build_s3(seed)
    doc["id"] = "fault_deleted_matches"
    doc["match_synth"] = {"per_object": 0, "outlier_rate": 0.0, "jitter_px": 0.0}
    return doc


def fault_empty_detection(seed: int = 0) -> dict:
    """The commanded category is absent from the scene annotations."""
    doc = _tabletop(_base_scenario("fault_empty_detection", seed))
    transcript = _words("pick up the banana")
    doc.update(
        {
            "transcript": transcript,
            "gaze": _gaze_records(transcript, {_word_index(transcript, "banana"): (700.0, 700.0)}),
        }
    )
    return doc


def fault_malformed_agent(seed: int = 0) -> dict:
    """The interpreter agent replies with garbage instead of slot JSON."""
    doc = build_apple(agent_mode=True, seed=seed)
    doc["id"] = "fault_malformed_agent"
    doc["canned_responses"] = [
        {
            "template_id": entry["template_id"],
            "variables": entry["variables"],
            "text": "I think you want the apple moved. {" if entry["template_id"] == "interpret_v1" else entry["text"],
        }
        for entry in doc["canned_responses"]
    ]
    return doc


def fault_out_of_workspace(seed: int = 0) -> dict:
    """Workspace bounds exclude the referred positions: planning must fail."""
    doc = build_s2(seed)
    doc["id"] = "fault_out_of_workspace"
    doc["workspace"] = {"lo": [0.0, 0.0], "hi": [100.0, 100.0]}
    return doc


BUNDLED = {
    "s1_pawns": build_s1,
    "s2_pick": build_s2,
    "s3_put": build_s3,
    "s4_causal": build_s4,
    "apple_put_there": build_apple,
}


def write_bundled(directory: str | Path) -> list[Path]:
    """Regenerate the bundled scenario files from the builders."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, builder in BUNDLED.items():
        path = directory / f"{name}.json"
        path.write_text(json.dumps(builder(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    return written


def bundled_scenario_path(name: str) -> Path:
    """Filesystem path of a bundled scenario shipped with the package."""
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled scenario {name!r}; have {sorted(BUNDLED)}")
    return Path(str(resources.files("deixis").joinpath(f"data/{name}.json")))
