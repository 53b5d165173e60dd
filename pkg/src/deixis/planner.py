"""Expand an interpreted command into a validated sequence of robot actions.

The action vocabulary has composite, task-oriented primitives (Pick, Put,
Pour, Swap, MoveTo) and atomic ones (axis moves, gripper open/close,
Rotate). A policy is an ordered list of (action, parameters) steps; every
policy, whether produced by the rule-based planner or a remote agent, must
pass ``validate_policy``.

The rule-based planner splits the command into clauses on "then" (and on
"and" when a new verb follows), binds each interpreted slot to its clause
by time, and expands verb patterns:

- pick/grab:    open gripper, Pick, close gripper
- put/place:    open gripper, Pick, close gripper, Put, open gripper
                (once per object when several share one destination)
- pour:         open gripper, Pick source, close gripper, Pour at target
- lift/raise:   MoveZ by the clause's distance
- turn/rotate:  Rotate by the clause's angle
- swap:         staged pick/put sequence through a configured staging point

A destination pronoun with no slot of its own resolves to the previous
placement position, which is what makes causally chained commands work.
Pick is emitted with an explicit gripper open before and close after it;
that surface form is what the validator's template checks expect.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .errors import (
    DeixisError,
    MalformedAgentOutput,
    PolicyValidationError,
    RemoteAgentError,
    UnsupportedCommand,
)
from .interpreter import (
    InterpretedCommand,
    TargetProperty,
    serialize_command,
)
from .scene import ReferredObject
from .streams import Transcript


class Action(str, Enum):
    PICK = "Pick"
    PUT = "Put"
    POUR = "Pour"
    SWAP = "Swap"
    MOVE_TO = "MoveTo"
    MOVE_X = "MoveX"
    MOVE_Y = "MoveY"
    MOVE_Z = "MoveZ"
    OPEN_GRIPPER = "OpenGripper"
    CLOSE_GRIPPER = "CloseGripper"
    ROTATE = "Rotate"


class ActionKind(str, Enum):
    COMPOSITE = "composite"
    ATOMIC = "atomic"


ACTION_KINDS: dict[Action, ActionKind] = {
    Action.PICK: ActionKind.COMPOSITE,
    Action.PUT: ActionKind.COMPOSITE,
    Action.POUR: ActionKind.COMPOSITE,
    Action.SWAP: ActionKind.COMPOSITE,
    Action.MOVE_TO: ActionKind.COMPOSITE,
    Action.MOVE_X: ActionKind.ATOMIC,
    Action.MOVE_Y: ActionKind.ATOMIC,
    Action.MOVE_Z: ActionKind.ATOMIC,
    Action.OPEN_GRIPPER: ActionKind.ATOMIC,
    Action.CLOSE_GRIPPER: ActionKind.ATOMIC,
    Action.ROTATE: ActionKind.ATOMIC,
}

ACTION_NAMES = {a.value for a in Action}
_TARGETED = {Action.PICK.value, Action.PUT.value, Action.POUR.value, Action.MOVE_TO.value}
_COMPOSITE_NAMES = {a.value for a, k in ACTION_KINDS.items() if k is ActionKind.COMPOSITE}

PICK_VERBS = {"pick", "grab", "take", "get"}
PUT_VERBS = {"put", "place"}
POUR_VERBS = {"pour"}
SWAP_VERBS = {"swap", "exchange"}
LIFT_VERBS = {"lift", "raise"}
TURN_VERBS = {"turn", "rotate"}
MOVE_VERBS = {"move"}
_ALL_VERBS = PICK_VERBS | PUT_VERBS | POUR_VERBS | SWAP_VERBS | LIFT_VERBS | TURN_VERBS | MOVE_VERBS


class Provenance(str, Enum):
    RULE_BASED = "rule_based"
    REMOTE = "remote"


@dataclass(frozen=True)
class ActionParams:
    """Flat parameter record; which fields must be set depends on the action.

    Positions are robot-view pixels for 2-vectors and workspace meters for
    3-vectors; a single policy must not mix the two.
    """

    label: Optional[str] = None
    position: Optional[tuple[float, ...]] = None
    label2: Optional[str] = None
    position2: Optional[tuple[float, ...]] = None
    distance: Optional[float] = None
    angle: Optional[float] = None

    def to_json_obj(self) -> dict:
        out: dict = {}
        if self.label is not None:
            out["label"] = self.label
        if self.position is not None:
            out["position"] = list(self.position)
        if self.label2 is not None:
            out["label2"] = self.label2
        if self.position2 is not None:
            out["position2"] = list(self.position2)
        if self.distance is not None:
            out["distance"] = self.distance
        if self.angle is not None:
            out["angle"] = self.angle
        return out


@dataclass(frozen=True)
class PolicyStep:
    # Name is a raw string so that unvalidated agent output can flow into
    # validate_policy and be flagged there instead of crashing the parser.
    name: str
    params: ActionParams = ActionParams()


@dataclass(frozen=True)
class Policy:
    steps: tuple[PolicyStep, ...]
    provenance: Provenance

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def action_names(self) -> list[str]:
        return [s.name for s in self.steps]


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned bounds for policy positions (2D pixels or 3D meters)."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or len(self.lo) not in (2, 3):
            raise ValueError("workspace bounds must both be 2- or 3-vectors")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError("workspace bounds are inverted")

    def contains(self, position: Sequence[float]) -> bool:
        shared = min(len(position), len(self.lo))
        return all(self.lo[i] <= position[i] <= self.hi[i] for i in range(shared))

    def center(self) -> tuple[float, ...]:
        return tuple((a + b) / 2.0 for a, b in zip(self.lo, self.hi))


@dataclass(frozen=True)
class PlannerState:
    """Everything the planner sees: referred objects, slots, raw command."""

    referred: tuple[ReferredObject, ...]
    command: InterpretedCommand
    transcript: Transcript
    workspace: Workspace

    def __post_init__(self):
        object.__setattr__(self, "referred", tuple(self.referred))
        if len(self.referred) != len(self.command.slots):
            raise ValueError(
                f"{len(self.referred)} referred objects for {len(self.command.slots)} slots"
            )


class PlannerMode(str, Enum):
    RULE_BASED = "rule_based"
    REMOTE = "remote"


@dataclass(frozen=True)
class PlannerConfig:
    mode: PlannerMode = PlannerMode.RULE_BASED
    staging_position: Optional[tuple[float, ...]] = None
    gateway: object = None
    template_id: str = "plan_v1"
    model_id: str = "gpt-4o-2024-08-06"
    temperature: float = 1.0
    max_tokens: int = 1024

    def __post_init__(self):
        if self.mode is PlannerMode.REMOTE and self.gateway is None:
            raise ValueError("remote mode needs a gateway")


@dataclass(frozen=True)
class Violation:
    step: int
    code: str
    message: str


@dataclass(frozen=True)
class PolicyReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


# --- rule-based planning ---

@dataclass
class _Clause:
    start: int          # token index range within the transcript
    end: int
    verb: Optional[str]
    object_slots: list[int] = field(default_factory=list)
    position_slots: list[int] = field(default_factory=list)
    numbers: list[float] = field(default_factory=list)


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _split_clauses(tokens: list[str]) -> list[_Clause]:
    boundaries = [0]
    for i, token in enumerate(tokens):
        if token == "then":
            boundaries.append(i + 1)
        elif token == "and" and i + 1 < len(tokens) and tokens[i + 1] in _ALL_VERBS:
            boundaries.append(i + 1)
    boundaries.append(len(tokens))
    clauses = []
    for lo, hi in zip(boundaries, boundaries[1:]):
        chunk = tokens[lo:hi]
        verb = next((t for t in chunk if t in _ALL_VERBS), None)
        numbers = [float(t) for t in chunk if _is_number(t)]
        clauses.append(_Clause(lo, hi, verb, numbers=numbers))
    return clauses


def _bind_slots(clauses: list[_Clause], state: PlannerState) -> None:
    words = state.transcript.words
    spans = []
    for clause in clauses:
        chunk = words[clause.start : clause.end]
        if chunk:
            spans.append((chunk[0].t_start, chunk[-1].t_end))
        else:
            spans.append((math.inf, -math.inf))
    for idx, slot in enumerate(state.command.slots):
        mid = (slot.interval[0] + slot.interval[1]) / 2.0
        target = None
        for ci, (lo, hi) in enumerate(spans):
            if lo <= mid <= hi:
                target = ci
                break
        if target is None:
            # padded interval midpoints can drift into inter-clause gaps
            target = min(range(len(spans)), key=lambda ci: abs((spans[ci][0] + spans[ci][1]) / 2 - mid))
        if slot.property is TargetProperty.OBJECT:
            clauses[target].object_slots.append(idx)
        else:
            clauses[target].position_slots.append(idx)


class _Emitter:
    def __init__(self) -> None:
        self.steps: list[PolicyStep] = []

    def emit(self, action: Action, params: ActionParams = ActionParams()) -> None:
        # collapse doubled gripper openings at clause boundaries
        if (
            action is Action.OPEN_GRIPPER
            and self.steps
            and self.steps[-1].name == Action.OPEN_GRIPPER.value
        ):
            return
        self.steps.append(PolicyStep(action.value, params))


def plan(state: PlannerState, cfg: PlannerConfig = PlannerConfig()) -> Policy:
    """Produce a policy for the command; the result always validates cleanly."""
    if cfg.mode is PlannerMode.REMOTE:
        policy = _plan_remote(state, cfg)
    else:
        policy = _plan_rule_based(state, cfg)
    report = validate_policy(policy, state)
    if not report.ok:
        raise PolicyValidationError(
            f"policy has {len(report.violations)} violation(s): "
            + "; ".join(v.message for v in report.violations),
            list(report.violations),
        )
    return policy


def _slot_target(state: PlannerState, slot_index: int) -> tuple[str, tuple[float, ...]]:
    slot = state.command.slots[slot_index]
    obs = state.referred[slot_index].observation
    return slot.category, (float(obs.position[0]), float(obs.position[1]))


def _plan_rule_based(state: PlannerState, cfg: PlannerConfig) -> Policy:
    tokens = state.transcript.normalized_words()
    clauses = _split_clauses(tokens)
    _bind_slots(clauses, state)
    emitter = _Emitter()
    last_put: Optional[tuple[str, tuple[float, ...]]] = None

    for clause in clauses:
        if clause.verb is None:
            raise UnsupportedCommand(
                f"no recognized verb in clause {' '.join(tokens[clause.start:clause.end])!r}"
            )
        if clause.verb in PUT_VERBS:
            if not clause.object_slots:
                raise UnsupportedCommand("placement clause has no object to move")
            if clause.position_slots:
                dest = _slot_target(state, clause.position_slots[0])
            elif last_put is not None:
                dest = last_put
            else:
                raise UnsupportedCommand("placement clause has no destination")
            for slot_index in clause.object_slots:
                label, position = _slot_target(state, slot_index)
                emitter.emit(Action.OPEN_GRIPPER)
                emitter.emit(Action.PICK, ActionParams(label=label, position=position))
                emitter.emit(Action.CLOSE_GRIPPER)
                emitter.emit(Action.PUT, ActionParams(label=dest[0], position=dest[1]))
                emitter.emit(Action.OPEN_GRIPPER)
            last_put = dest
        elif clause.verb in POUR_VERBS:
            if not clause.object_slots:
                raise UnsupportedCommand("pour clause has no source container")
            if clause.position_slots:
                dest = _slot_target(state, clause.position_slots[0])
            elif last_put is not None:
                dest = last_put
            else:
                raise UnsupportedCommand("pour clause has no destination")
            label, position = _slot_target(state, clause.object_slots[0])
            emitter.emit(Action.OPEN_GRIPPER)
            emitter.emit(Action.PICK, ActionParams(label=label, position=position))
            emitter.emit(Action.CLOSE_GRIPPER)
            emitter.emit(Action.POUR, ActionParams(label=dest[0], position=dest[1]))
        elif clause.verb in SWAP_VERBS:
            if len(clause.object_slots) != 2:
                raise UnsupportedCommand("swap needs exactly two objects")
            label_a, pos_a = _slot_target(state, clause.object_slots[0])
            label_b, pos_b = _slot_target(state, clause.object_slots[1])
            staging = cfg.staging_position or state.workspace.center()
            staging = tuple(float(v) for v in staging)
            for pick_label, pick_pos, put_label, put_pos in (
                (label_a, pos_a, "staging", staging),
                (label_b, pos_b, label_a, pos_a),
                (label_a, staging, label_b, pos_b),
            ):
                emitter.emit(Action.OPEN_GRIPPER)
                emitter.emit(Action.PICK, ActionParams(label=pick_label, position=pick_pos))
                emitter.emit(Action.CLOSE_GRIPPER)
                emitter.emit(Action.PUT, ActionParams(label=put_label, position=put_pos))
                emitter.emit(Action.OPEN_GRIPPER)
        elif clause.verb in PICK_VERBS:
            if not clause.object_slots:
                raise UnsupportedCommand("pick clause has no object")
            for slot_index in clause.object_slots:
                label, position = _slot_target(state, slot_index)
                emitter.emit(Action.OPEN_GRIPPER)
                emitter.emit(Action.PICK, ActionParams(label=label, position=position))
                emitter.emit(Action.CLOSE_GRIPPER)
        elif clause.verb in LIFT_VERBS:
            if not clause.numbers:
                raise UnsupportedCommand("lift clause has no distance")
            emitter.emit(Action.MOVE_Z, ActionParams(distance=clause.numbers[0]))
        elif clause.verb in TURN_VERBS:
            if not clause.numbers:
                raise UnsupportedCommand("turn clause has no angle")
            emitter.emit(Action.ROTATE, ActionParams(angle=clause.numbers[0]))
        elif clause.verb in MOVE_VERBS:
            slot_index = (clause.object_slots or clause.position_slots or [None])[0]
            if slot_index is None:
                raise UnsupportedCommand("move clause has no target")
            label, position = _slot_target(state, slot_index)
            emitter.emit(Action.MOVE_TO, ActionParams(label=label, position=position))
        else:  # pragma: no cover - verb sets above are exhaustive
            raise UnsupportedCommand(f"verb {clause.verb!r} has no template")

    return Policy(tuple(emitter.steps), Provenance.RULE_BASED)


def build_plan_variables(state: PlannerState) -> dict[str, str]:
    """Prompt variables for the remote planner; also used to can replies."""
    referred = [
        {
            "slot": i,
            "id": ref.observation.id,
            "position": [float(v) for v in ref.observation.position],
        }
        for i, ref in enumerate(state.referred)
    ]
    return {
        "transcript": state.transcript.raw_text,
        "command": serialize_command(state.command),
        "referred": json.dumps(referred, sort_keys=True, separators=(",", ":")),
        "workspace": json.dumps(
            {"lo": list(state.workspace.lo), "hi": list(state.workspace.hi)},
            sort_keys=True,
            separators=(",", ":"),
        ),
    }


def _plan_remote(state: PlannerState, cfg: PlannerConfig) -> Policy:
    from .agent import AgentRequest

    request = AgentRequest(
        template_id=cfg.template_id,
        variables=build_plan_variables(state),
        model_id=cfg.model_id,
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens,
    )
    try:
        response = cfg.gateway.complete(request)
    except MalformedAgentOutput:
        raise
    except DeixisError as exc:
        raise RemoteAgentError(f"planner agent call failed: {type(exc).__name__}: {exc}") from exc
    return parse_policy(response.text, Provenance.REMOTE)


# --- validation ---

_PARAM_RULES: dict[str, tuple[set[str], set[str]]] = {
    # action -> (required params, allowed params)
    Action.PICK.value: ({"label", "position"}, {"label", "position"}),
    Action.PUT.value: ({"label", "position"}, {"label", "position"}),
    Action.POUR.value: ({"label", "position"}, {"label", "position"}),
    Action.MOVE_TO.value: ({"label", "position"}, {"label", "position"}),
    Action.SWAP.value: (
        {"label", "position", "label2", "position2"},
        {"label", "position", "label2", "position2"},
    ),
    Action.MOVE_X.value: ({"distance"}, {"distance"}),
    Action.MOVE_Y.value: ({"distance"}, {"distance"}),
    Action.MOVE_Z.value: ({"distance"}, {"distance"}),
    Action.ROTATE.value: ({"angle"}, {"angle"}),
    Action.OPEN_GRIPPER.value: (set(), set()),
    Action.CLOSE_GRIPPER.value: (set(), set()),
}


def validate_policy(policy: Policy, state: Optional[PlannerState] = None) -> PolicyReport:
    """Check action membership, parameter arity, bounds, and gripper logic.

    Returns a report rather than raising, so callers can log every problem
    in a policy at once.
    """
    violations: list[Violation] = []
    position_dims: set[int] = set()

    for i, step in enumerate(policy.steps):
        if step.name not in ACTION_NAMES:
            violations.append(Violation(i, "unknown-action", f"step {i}: unknown action {step.name!r}"))
            continue
        required, allowed = _PARAM_RULES[step.name]
        present = {k for k, v in vars(step.params).items() if v is not None}
        for missing in sorted(required - present):
            violations.append(
                Violation(i, "missing-param", f"step {i} ({step.name}): missing parameter {missing!r}")
            )
        for extra in sorted(present - allowed):
            violations.append(
                Violation(i, "unexpected-param", f"step {i} ({step.name}): unexpected parameter {extra!r}")
            )
        for key in ("position", "position2"):
            value = getattr(step.params, key)
            if value is None:
                continue
            if len(value) not in (2, 3) or not all(math.isfinite(v) for v in value):
                violations.append(
                    Violation(i, "bad-position", f"step {i} ({step.name}): {key} must be a finite 2- or 3-vector")
                )
                continue
            position_dims.add(len(value))
            if state is not None and not state.workspace.contains(value):
                violations.append(
                    Violation(i, "out-of-workspace", f"step {i} ({step.name}): {key} {value} outside workspace")
                )
        for key in ("distance", "angle"):
            value = getattr(step.params, key)
            if value is not None and not math.isfinite(value):
                violations.append(
                    Violation(i, "non-finite", f"step {i} ({step.name}): {key} must be finite")
                )

    if len(position_dims) > 1:
        violations.append(
            Violation(0, "mixed-dims", "policy mixes 2D and 3D positions")
        )

    violations.extend(_check_gripper_logic(policy))
    violations.sort(key=lambda v: (v.step, v.code))
    return PolicyReport(tuple(violations))


def _check_gripper_logic(policy: Policy) -> list[Violation]:
    violations: list[Violation] = []
    names = [s.name for s in policy.steps]
    gripper = "unknown"
    for i, name in enumerate(names):
        if name == Action.OPEN_GRIPPER.value:
            gripper = "open"
        elif name == Action.CLOSE_GRIPPER.value:
            gripper = "closed"
        elif name == Action.PICK.value:
            if gripper != "open":
                violations.append(
                    Violation(i, "gripper-open-missing", f"step {i}: Pick with gripper not opened first")
                )
            closed_after = False
            for later in names[i + 1 :]:
                if later == Action.CLOSE_GRIPPER.value:
                    closed_after = True
                    break
                if later == Action.OPEN_GRIPPER.value or later in _COMPOSITE_NAMES:
                    break
            if not closed_after:
                violations.append(
                    Violation(i, "gripper-close-missing", f"step {i}: Pick not followed by CloseGripper")
                )
        elif name == Action.PUT.value:
            if gripper != "closed":
                violations.append(
                    Violation(i, "grasp-missing", f"step {i}: Put while nothing is held")
                )
            opened_after = False
            for later in names[i + 1 :]:
                if later == Action.OPEN_GRIPPER.value:
                    opened_after = True
                    break
                if later == Action.CLOSE_GRIPPER.value or later in _COMPOSITE_NAMES:
                    break
            if not opened_after:
                violations.append(
                    Violation(i, "release-missing", f"step {i}: Put not followed by OpenGripper")
                )
    return violations


# --- serialization ---

def serialize_policy(policy: Policy) -> str:
    """Canonical JSON: an array of [action, params] pairs, sorted keys."""
    payload = [[step.name, step.params.to_json_obj()] for step in policy.steps]
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _parse_position(value, where: str, key: str, diagnostics: list[str]) -> Optional[tuple[float, ...]]:
    if not isinstance(value, list) or len(value) not in (2, 3):
        diagnostics.append(f"{where}: {key} must be a 2- or 3-element array")
        return None
    out = []
    for v in value:
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            diagnostics.append(f"{where}: {key} entries must be numbers")
            return None
        out.append(float(v))
    return tuple(out)


def parse_policy(text: str, provenance: Provenance = Provenance.REMOTE) -> Policy:
    """Parse policy JSON, reporting problems with their step index.

    Structural problems (wrong types, bad arrays) are rejected here; unknown
    action names are preserved so ``validate_policy`` can flag them as
    membership violations.
    """
    diagnostics: list[str] = []
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedAgentOutput(f"policy is not valid JSON: {exc}", [str(exc)]) from exc
    if not isinstance(payload, list):
        raise MalformedAgentOutput("policy must be a JSON array of [action, params] pairs")
    steps: list[PolicyStep] = []
    for i, entry in enumerate(payload):
        where = f"step {i}"
        if not isinstance(entry, list) or len(entry) != 2:
            diagnostics.append(f"{where}: expected an [action, params] pair")
            continue
        name, params_obj = entry
        if not isinstance(name, str):
            diagnostics.append(f"{where}: action name must be a string")
            continue
        if not isinstance(params_obj, dict):
            diagnostics.append(f"{where}: params must be an object")
            continue
        unknown = set(params_obj) - {"label", "position", "label2", "position2", "distance", "angle"}
        if unknown:
            diagnostics.append(f"{where}: unknown parameter field(s) {sorted(unknown)}")
            continue
        kwargs: dict = {}
        ok = True
        for key in ("label", "label2"):
            if key in params_obj:
                if not isinstance(params_obj[key], str):
                    diagnostics.append(f"{where}: {key} must be a string")
                    ok = False
                else:
                    kwargs[key] = params_obj[key]
        for key in ("position", "position2"):
            if key in params_obj:
                parsed = _parse_position(params_obj[key], where, key, diagnostics)
                if parsed is None:
                    ok = False
                else:
                    kwargs[key] = parsed
        for key in ("distance", "angle"):
            if key in params_obj:
                value = params_obj[key]
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    diagnostics.append(f"{where}: {key} must be a number")
                    ok = False
                else:
                    kwargs[key] = float(value)
        if ok:
            steps.append(PolicyStep(name, ActionParams(**kwargs)))
    if diagnostics:
        raise MalformedAgentOutput(
            f"{len(diagnostics)} structural problem(s) in policy JSON", diagnostics
        )
    return Policy(tuple(steps), provenance)
