"""Catalog of supported command templates and their complexity accounting.

Task complexity is the number of predefined actions plus the number of
parameters; parameters cover referred objects and spatial specifications
such as distances and angles. The per-template action count follows the
published accounting for these task families, which is not mechanically
derivable from the expanded step list (composite steps are tallied at task
granularity), so the triples are shipped as data rather than inferred.

``gaze_slots`` is the number of parameters the interpreter must produce
slots for: scalar parameters (distances, angles) and anaphoric references
resolved during planning are parameters but not gaze-selected slots.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CommandTemplate:
    template_id: str
    pattern: str
    example: str
    params: int
    actions: int
    complexity: int
    gaze_slots: int
    has_named_referents: bool

    def __post_init__(self):
        if self.params + self.actions != self.complexity:
            raise ValueError(f"{self.template_id}: complexity must equal params + actions")


_ROWS = [
    # -- commands naming their referents --
    CommandTemplate(
        "pick_object", "pick up the <object>", "pick up the cup",
        params=1, actions=1, complexity=2, gaze_slots=1, has_named_referents=True,
    ),
    CommandTemplate(
        "grab_pieces", "grab the pieces", "grab the pieces",
        params=1, actions=1, complexity=2, gaze_slots=1, has_named_referents=True,
    ),
    CommandTemplate(
        "put_object_on_plate", "put the <object> on the <plate>", "put the apple on the plate",
        params=2, actions=3, complexity=5, gaze_slots=2, has_named_referents=True,
    ),
    CommandTemplate(
        "put_then_pour",
        "put the <object> on the <plate> then pour some thing from the <cup> on it",
        "put the apple on the plate then pour some thing from the cup on it",
        params=4, actions=6, complexity=10, gaze_slots=3, has_named_referents=True,
    ),
    CommandTemplate(
        "put_this_object_there", "put this <object> <there>", "put this cup there",
        params=2, actions=3, complexity=5, gaze_slots=2, has_named_referents=True,
    ),
    CommandTemplate(
        "put_two_objects_on_plate",
        "put the <object1> and <object2> on the <plate>",
        "put the apple and the pear on the plate",
        params=3, actions=6, complexity=9, gaze_slots=3, has_named_referents=True,
    ),
    CommandTemplate(
        "put_then_put",
        "put the <object1> on the <plate1> then put the <object2> on the <plate2>",
        "put the apple on the plate then put the pear on the dish",
        params=4, actions=6, complexity=10, gaze_slots=4, has_named_referents=True,
    ),
    CommandTemplate(
        "grab_lift_turn",
        "grab the <object> and lift up for <distance> then turn it for <angle> degrees",
        "grab the cup and lift up for 20 then turn it for 90 degrees",
        params=3, actions=3, complexity=6, gaze_slots=1, has_named_referents=True,
    ),
    # -- commands with deictic referents only --
    CommandTemplate(
        "pick_this", "pick up this", "pick up this",
        params=1, actions=1, complexity=2, gaze_slots=1, has_named_referents=False,
    ),
    CommandTemplate(
        "grab_this", "grab this", "grab this",
        params=1, actions=1, complexity=2, gaze_slots=1, has_named_referents=False,
    ),
    CommandTemplate(
        "put_this_on_that", "put this on that", "put this on that",
        params=2, actions=3, complexity=5, gaze_slots=2, has_named_referents=False,
    ),
    CommandTemplate(
        "put_then_pour_deictic",
        "put this on that then pour something from this on it",
        "put this on that then pour something from this on it",
        params=4, actions=6, complexity=10, gaze_slots=3, has_named_referents=False,
    ),
    CommandTemplate(
        "put_this_there", "put this <there>", "put this there",
        params=2, actions=3, complexity=5, gaze_slots=2, has_named_referents=False,
    ),
    CommandTemplate(
        "put_this_and_this", "put this and this on that", "put this and this on that",
        params=3, actions=6, complexity=9, gaze_slots=3, has_named_referents=False,
    ),
    CommandTemplate(
        "put_then_put_deictic",
        "put this on this then put this on that",
        "put this on this then put this on that",
        params=4, actions=6, complexity=10, gaze_slots=4, has_named_referents=False,
    ),
    CommandTemplate(
        "grab_lift_turn_deictic",
        "grab this and lift it up for <distance> then turn it for <angle> degrees",
        "grab this and lift it up for 20 then turn it for 90 degrees",
        params=3, actions=3, complexity=6, gaze_slots=1, has_named_referents=False,
    ),
]

TEMPLATES: dict[str, CommandTemplate] = {row.template_id: row for row in _ROWS}


def template(template_id: str) -> CommandTemplate:
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise KeyError(f"unknown command template {template_id!r}") from None
