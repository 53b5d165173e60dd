"""Map a spoken command to structured target slots.

The structured output pairs each referential expression in the command with
a target-property label (object or position), a category for the scene
observer, and the time interval of the spoken word, during which the
speaker is most likely fixating the target.

Two implementations share the contract: a deterministic rule-based grammar
used for tests and offline runs, and a remote agent whose reply is gated
through the same schema validator. The grammar:

- a determiner followed by a noun is a referent; its category is the noun,
  and its label is "position" when the phrase is governed by a locative
  preposition ("on the plate"), else "object"
- a bare demonstrative ("this", "that") is a generic referent with category
  "stuff", labeled by the same preposition rule
- "there"/"here" are location referents with category "position", unless
  followed by "on/in the <noun>", in which case the category becomes that
  noun while the interval stays on the deictic word
- "it" is an anaphor for something already referred to; it never opens a
  new slot (the planner resolves it from earlier steps)

Repeated words bind to slots left to right in utterance order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum

from .errors import DeixisError, MalformedAgentOutput, NoTargetFound, RemoteAgentError
from .streams import Transcript, normalize_text, word_interval

logger = logging.getLogger(__name__)

DETERMINERS = {"the", "this", "that", "these", "those", "a", "an"}
DEMONSTRATIVES = {"this", "that", "these", "those"}
LOCATIVE_PREPS = {"on", "in", "onto", "into", "at", "over", "above", "under", "beside"}
DEICTIC_LOCATIVES = {"there", "here"}
ANAPHORS = {"it"}
INDEFINITES = {"something", "thing", "some", "anything", "stuff"}
VERBS = {
    "pick", "grab", "take", "get", "put", "place", "pour", "swap", "exchange",
    "move", "lift", "raise", "turn", "rotate", "open", "close", "push", "bring",
    "give", "hold", "drop",
}
OTHER_FUNCTION_WORDS = {
    "please", "up", "down", "then", "and", "or", "for", "from", "of", "to",
    "with", "degrees", "degree", "cm", "m", "meters", "centimeters", "its",
}

GENERIC_CATEGORY = "stuff"
POSITION_CATEGORY = "position"


class TargetProperty(str, Enum):
    OBJECT = "object"
    POSITION = "position"


class InterpreterMode(str, Enum):
    RULE_BASED = "rule_based"
    REMOTE = "remote"


@dataclass(frozen=True)
class TargetSlot:
    property: TargetProperty
    category: str
    interval: tuple[float, float]
    source_word: str

    def __post_init__(self):
        if self.interval[0] > self.interval[1]:
            raise ValueError(f"slot interval is reversed: {self.interval}")
        if not self.category:
            raise ValueError("slot category must be non-empty")


@dataclass(frozen=True)
class InterpretedCommand:
    slots: tuple[TargetSlot, ...]
    transcript: Transcript

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        lo, hi = self.transcript.span()
        for slot in self.slots:
            if slot.interval[0] < lo or slot.interval[1] > hi:
                raise ValueError(f"slot {slot.source_word!r} interval outside transcript span")
        starts = [s.interval[0] for s in self.slots]
        if starts != sorted(starts):
            raise ValueError("slots must be ordered by interval start")


@dataclass(frozen=True)
class InterpreterConfig:
    mode: InterpreterMode = InterpreterMode.RULE_BASED
    padding: float = 0.0
    gateway: object = None  # an agent gateway; required in remote mode
    template_id: str = "interpret_v1"
    model_id: str = "gpt-4o-2024-08-06"
    temperature: float = 1.0
    max_tokens: int = 512

    def __post_init__(self):
        if self.mode is InterpreterMode.REMOTE and self.gateway is None:
            raise ValueError("remote mode needs a gateway")


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _is_noun(token: str) -> bool:
    if _is_number(token):
        return False
    return token not in (
        DETERMINERS | LOCATIVE_PREPS | DEICTIC_LOCATIVES | ANAPHORS
        | INDEFINITES | VERBS | OTHER_FUNCTION_WORDS
    )


@dataclass
class _RawSlot:
    property: TargetProperty
    category: str
    source_word: str
    occurrence: int
    word_index: int


def extract_slots(tokens: list[str]) -> list[_RawSlot]:
    """Run the grammar over normalized tokens; shared with the planner."""
    occurrences: dict[str, int] = {}

    def bump(token: str) -> int:
        count = occurrences.get(token, 0)
        occurrences[token] = count + 1
        return count

    slots: list[_RawSlot] = []
    i = 0
    while i < len(tokens):
        token = tokens[i]
        occ = bump(token)
        prev = tokens[i - 1] if i > 0 else ""
        if token in DEICTIC_LOCATIVES:
            deictic_index = i
            category = POSITION_CATEGORY
            if (
                i + 3 < len(tokens)
                and tokens[i + 1] in LOCATIVE_PREPS
                and tokens[i + 2] in DETERMINERS
                and _is_noun(tokens[i + 3])
            ):
                category = tokens[i + 3]
                bump(tokens[i + 1])
                bump(tokens[i + 2])
                bump(tokens[i + 3])
                i += 3
            slots.append(_RawSlot(TargetProperty.POSITION, category, token, occ, deictic_index))
        elif token in DETERMINERS:
            nxt = tokens[i + 1] if i + 1 < len(tokens) else ""
            label = TargetProperty.POSITION if prev in LOCATIVE_PREPS else TargetProperty.OBJECT
            if nxt and _is_noun(nxt):
                i += 1
                noun_occ = bump(nxt)
                slots.append(_RawSlot(label, nxt, nxt, noun_occ, i))
            elif token in DEMONSTRATIVES:
                slots.append(_RawSlot(label, GENERIC_CATEGORY, token, occ, i))
        i += 1
    return slots


def interpret(transcript: Transcript, cfg: InterpreterConfig = InterpreterConfig()) -> InterpretedCommand:
    """Produce the structured slots for a command.

    Rule-based mode is a pure function of the transcript; remote mode sends
    one agent request and validates the reply against the slot schema.
    """
    if not transcript.words:
        raise ValueError("transcript is empty")
    if cfg.mode is InterpreterMode.REMOTE:
        return _interpret_remote(transcript, cfg)
    raw_slots = extract_slots(transcript.normalized_words())
    if not raw_slots:
        raise NoTargetFound(f"no referential expression in {transcript.raw_text!r}")
    slots = tuple(
        TargetSlot(
            property=raw.property,
            category=raw.category,
            interval=word_interval(transcript, raw.source_word, raw.occurrence, cfg.padding),
            source_word=raw.source_word,
        )
        for raw in raw_slots
    )
    return InterpretedCommand(slots, transcript)


def build_interpret_variables(transcript: Transcript) -> dict[str, str]:
    """Prompt variables for the remote interpreter; also used to can replies."""
    timings = [
        {"text": w.text, "t_start": w.t_start, "t_end": w.t_end} for w in transcript.words
    ]
    return {
        "transcript": transcript.raw_text,
        "timings": json.dumps(timings, sort_keys=True, separators=(",", ":")),
    }


def _interpret_remote(transcript: Transcript, cfg: InterpreterConfig) -> InterpretedCommand:
    from .agent import AgentRequest  # local import to keep module deps one-way

    request = AgentRequest(
        template_id=cfg.template_id,
        variables=build_interpret_variables(transcript),
        model_id=cfg.model_id,
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens,
    )
    try:
        response = cfg.gateway.complete(request)
    except MalformedAgentOutput:
        raise
    except DeixisError as exc:
        raise RemoteAgentError(f"interpreter agent call failed: {type(exc).__name__}: {exc}") from exc
    return validate_o1(response.text, transcript)


def serialize_command(command: InterpretedCommand) -> str:
    """Canonical JSON for the slot structure; inverse of ``validate_o1``."""
    payload = {
        "slots": [
            {
                "label": slot.property.value,
                "category": slot.category,
                "word": slot.source_word,
                "t_start": slot.interval[0],
                "t_end": slot.interval[1],
            }
            for slot in command.slots
        ]
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def validate_o1(raw: str, transcript: Transcript) -> InterpretedCommand:
    """Gate agent output through the slot schema.

    Collects field-level diagnostics instead of failing on the first issue;
    intervals that overrun the transcript are clamped with a logged warning.
    """
    diagnostics: list[str] = []
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedAgentOutput(f"reply is not valid JSON: {exc}", [str(exc)]) from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("slots"), list):
        raise MalformedAgentOutput(
            "reply must be an object with a 'slots' array", ["missing 'slots' array"]
        )
    transcript_words = set(transcript.normalized_words())
    lo, hi = transcript.span()
    slots: list[TargetSlot] = []
    for idx, entry in enumerate(payload["slots"]):
        where = f"slots[{idx}]"
        if not isinstance(entry, dict):
            diagnostics.append(f"{where}: expected an object")
            continue
        label = entry.get("label")
        if label not in (TargetProperty.OBJECT.value, TargetProperty.POSITION.value):
            diagnostics.append(f"{where}.label: expected 'object' or 'position', got {label!r}")
            continue
        category = entry.get("category")
        if not isinstance(category, str) or not category:
            diagnostics.append(f"{where}.category: expected a non-empty string")
            continue
        word = entry.get("word")
        if not isinstance(word, str) or not word:
            diagnostics.append(f"{where}.word: expected a non-empty string")
            continue
        if normalize_text(word) not in transcript_words:
            diagnostics.append(f"{where}.word: {word!r} does not occur in the transcript")
            continue
        bad_time = False
        for key in ("t_start", "t_end"):
            if not isinstance(entry.get(key), (int, float)) or isinstance(entry.get(key), bool):
                diagnostics.append(f"{where}.{key}: expected a number")
                bad_time = True
        if bad_time:
            continue
        t_start, t_end = float(entry["t_start"]), float(entry["t_end"])
        if t_start > t_end:
            diagnostics.append(f"{where}: t_start > t_end")
            continue
        clamped = (max(lo, t_start), min(hi, t_end))
        if clamped != (t_start, t_end):
            logger.warning("slot %d interval [%g, %g] clamped to transcript span", idx, t_start, t_end)
        slots.append(TargetSlot(TargetProperty(label), category, clamped, word))
    if diagnostics:
        raise MalformedAgentOutput(
            f"{len(diagnostics)} schema violation(s) in agent reply", diagnostics
        )
    if not slots:
        raise NoTargetFound("agent reply contains no slots")
    slots.sort(key=lambda s: s.interval[0])
    return InterpretedCommand(tuple(slots), transcript)
