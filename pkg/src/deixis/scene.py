"""Per-view scene observation sets.

At desk scale detection is replaced by scenario ground truth: each view
ships a list of annotated objects, and ``observe`` filters them by the
category the interpreter asked for. The detector adapter settings are kept
as documented pass-through configuration so a real open-vocabulary detector
can slot in behind the same interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import NoObjectsDetected
from .geometry import Intrinsics
from .streams import normalize_text

# Matching any specific-category query as well; a bare location query uses
# the reserved category below and must be annotated explicitly in scenarios.
GENERIC_CATEGORY = "stuff"
POSITION_CATEGORY = "position"


class View(str, Enum):
    HUMAN = "human"
    ROBOT = "robot"


@dataclass(frozen=True)
class DetectorConfig:
    """Pass-through settings for a detection/segmentation adapter.

    Unused by the ground-truth path; recorded so a live adapter gets the
    same defaults the pipeline was tuned with.
    """

    box_threshold: float = 0.3
    text_threshold: float = 0.3
    detector_model: str = "tiny"
    segmentation_model: str = "large"


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not math.isfinite(v):
                raise ValueError("bbox coordinates must be finite")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"bbox is inverted: {self}")

    def midpoint(self) -> np.ndarray:
        return np.array([(self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0])

    def contains(self, point: Sequence[float]) -> bool:
        """Closed-interval membership; edge points count as inside."""
        x, y = float(point[0]), float(point[1])
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


def decode_rle_mask(data: dict) -> np.ndarray:
    """Decode a row-major run-length mask {"size": [h, w], "counts": [...]}.

    Runs alternate background/foreground starting with background.
    """
    h, w = (int(v) for v in data["size"])
    counts = [int(c) for c in data["counts"]]
    if sum(counts) != h * w:
        raise ValueError(f"RLE counts sum to {sum(counts)}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for count in counts:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    return flat.reshape(h, w)


def encode_rle_mask(mask: np.ndarray) -> dict:
    flat = np.asarray(mask, dtype=bool).ravel()
    counts: list[int] = []
    value = False
    run = 0
    for bit in flat:
        if bit == value:
            run += 1
        else:
            counts.append(run)
            value = bool(bit)
            run = 1
    counts.append(run)
    return {"size": [mask.shape[0], mask.shape[1]], "counts": counts}


@dataclass(frozen=True)
class AnnotatedObject:
    """Ground-truth annotation for one object in one view."""

    id: str
    category: str
    bbox: BBox
    mask: Optional[np.ndarray] = None
    pos3: Optional[tuple[float, float, float]] = None


@dataclass(frozen=True)
class SceneAnnotation:
    """All annotated objects of one view plus that view's camera model."""

    view: View
    intrinsics: Intrinsics
    objects: tuple[AnnotatedObject, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        seen: set[str] = set()
        for obj in self.objects:
            if obj.id in seen:
                raise ValueError(f"duplicate object id {obj.id!r}")
            seen.add(obj.id)
            if not (0 <= obj.bbox.x_min and obj.bbox.x_max <= self.intrinsics.width):
                raise ValueError(f"object {obj.id!r} bbox exceeds image width")
            if not (0 <= obj.bbox.y_min and obj.bbox.y_max <= self.intrinsics.height):
                raise ValueError(f"object {obj.id!r} bbox exceeds image height")


@dataclass(frozen=True)
class ObjectObservation:
    """A detected object; its 2D position is exactly the bbox midpoint."""

    id: str
    bbox: BBox
    mask: Optional[np.ndarray] = None
    position: np.ndarray = field(init=False)

    def __post_init__(self):
        position = self.bbox.midpoint()
        position.setflags(write=False)
        object.__setattr__(self, "position", position)


@dataclass(frozen=True)
class SceneObservationSet:
    view: View
    category: str
    objects: tuple[ObjectObservation, ...]
    intrinsics: Intrinsics

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        seen: set[str] = set()
        for obj in self.objects:
            if obj.id in seen:
                raise ValueError(f"duplicate object id {obj.id!r}")
            seen.add(obj.id)
            if not (0 <= obj.bbox.x_min and obj.bbox.x_max <= self.intrinsics.width):
                raise ValueError(f"object {obj.id!r} bbox exceeds image width")
            if not (0 <= obj.bbox.y_min and obj.bbox.y_max <= self.intrinsics.height):
                raise ValueError(f"object {obj.id!r} bbox exceeds image height")

    def by_id(self, object_id: str) -> ObjectObservation:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)


@dataclass(frozen=True)
class ReferredObject:
    """The single object a selection stage settled on, in one view."""

    view: View
    observation: ObjectObservation


def observe(annotation: SceneAnnotation, category: str, view: Optional[View] = None) -> SceneObservationSet:
    """Filter a view's annotations down to one category.

    Matching is exact after text normalization; the generic category returns
    every annotated object. Bare location queries match region annotations
    the scenario carries under the reserved position category.
    """
    wanted = normalize_text(category)
    if view is None:
        view = annotation.view
    if wanted == GENERIC_CATEGORY:
        selected = annotation.objects
    else:
        selected = tuple(o for o in annotation.objects if normalize_text(o.category) == wanted)
    if not selected:
        raise NoObjectsDetected(f"no {category!r} objects annotated in {view.value} view")
    observations = tuple(ObjectObservation(o.id, o.bbox, o.mask) for o in selected)
    return SceneObservationSet(view, category, observations, annotation.intrinsics)
