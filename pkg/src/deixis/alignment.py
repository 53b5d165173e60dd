"""Carry the referred object from the human view into the robot view.

Feature matches whose source keypoints lie inside the referred object's
human-view bounding box vote for robot-view objects: each robot object
counts the matched keypoints landing in its region (segmentation mask when
annotated, bounding box otherwise), and the region with the most votes is
the corresponding object. This avoids any extrinsic calibration between the
two cameras.

``synth_matches`` stands in for a learned feature matcher: it fabricates
seeded, reproducible matches from the scenario's correspondence ground
truth with configurable jitter and outlier rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Protocol

import numpy as np

from .errors import NoCorrespondence
from .scene import BBox, ObjectObservation, ReferredObject, SceneObservationSet


@dataclass(frozen=True)
class MatcherConfig:
    """Pass-through settings for a live feature-matching service."""

    max_keypoints: int = 10000
    keypoint_threshold: float = 1e-5
    match_threshold: float = 1e-5
    resize: bool = False
    weights: str = "indoor"


@dataclass(frozen=True)
class KeypointMatch:
    human_pt: tuple[float, float]
    robot_pt: tuple[float, float]
    confidence: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class MatchSet:
    matches: tuple[KeypointMatch, ...]
    source_bbox: BBox

    def __post_init__(self):
        object.__setattr__(self, "matches", tuple(self.matches))
        for m in self.matches:
            if not self.source_bbox.contains(m.human_pt):
                raise ValueError(f"source keypoint {m.human_pt} outside source bbox")


@dataclass(frozen=True)
class AlignmentResult:
    referred: ReferredObject
    counts: dict[str, int]
    margin: int
    region_used: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class AlignmentConfig:
    # Minimum vote count below which the correspondence is rejected.
    min_count: int = 1
    # Non-default variant: rank by votes per region area instead of raw votes.
    # Kept out of the accepted configuration; raw counts are the reference
    # behavior.
    normalize_by_area: bool = False


class MatcherAdapter(Protocol):
    """Interface a real feature-matching service must implement.

    The request names the two frames to match and the source bounding box
    restricting the human-view keypoints; the response is a MatchSet.
    """

    def match(self, human_frame_id: str, robot_frame_id: str, source_bbox: BBox) -> MatchSet:
        ...


def _point_in_region(obj: ObjectObservation, point: tuple[float, float]) -> bool:
    if obj.mask is not None:
        h, w = obj.mask.shape
        col = math.floor(point[0])
        row = math.floor(point[1])
        return 0 <= row < h and 0 <= col < w and bool(obj.mask[row, col])
    return obj.bbox.contains(point)


def align(
    matches: MatchSet,
    robot_scene: SceneObservationSet,
    cfg: AlignmentConfig = AlignmentConfig(),
) -> AlignmentResult:
    """Vote matched keypoints into robot-view regions and take the argmax.

    Region membership is closed on bounding-box edges; match confidences do
    not weight the vote. Ties break to the lowest object id.
    """
    if not robot_scene.objects:
        raise NoCorrespondence("robot view has no candidate objects")
    counts: dict[str, int] = {}
    region_used: dict[str, str] = {}
    for obj in robot_scene.objects:
        region_used[obj.id] = "mask" if obj.mask is not None else "bbox"
        counts[obj.id] = sum(1 for m in matches.matches if _point_in_region(obj, m.robot_pt))
    if max(counts.values()) < cfg.min_count:
        raise NoCorrespondence(
            f"no robot-view region collected {cfg.min_count} or more matched keypoints"
        )
    if cfg.normalize_by_area:
        score = {o.id: counts[o.id] / o.bbox.area() for o in robot_scene.objects}
    else:
        score = {oid: float(c) for oid, c in counts.items()}
    best = min(robot_scene.objects, key=lambda o: (-score[o.id], o.id))
    other_counts = sorted((counts[o.id] for o in robot_scene.objects if o.id != best.id), reverse=True)
    margin = counts[best.id] - other_counts[0] if other_counts else counts[best.id]
    return AlignmentResult(ReferredObject(robot_scene.view, best), counts, margin, region_used)


@dataclass(frozen=True)
class MatchSynthConfig:
    per_object: int = 10
    outlier_rate: float = 0.0
    jitter_px: float = 0.0


def synth_matches(
    source: ObjectObservation,
    robot_scene: SceneObservationSet,
    correspondence: Mapping[str, str],
    cfg: MatchSynthConfig,
    rng: np.random.Generator,
) -> MatchSet:
    """Fabricate matches for the source object from correspondence ground truth.

    Inlier robot points are the corresponding robot region's midpoint plus
    Gaussian jitter; outliers land uniformly anywhere in the robot image.
    All draws come from the supplied generator, so a fixed seed reproduces
    the MatchSet exactly.
    """
    if source.id not in correspondence:
        raise ValueError(f"no robot correspondence declared for {source.id!r}")
    target = robot_scene.by_id(correspondence[source.id])
    width = float(robot_scene.intrinsics.width)
    height = float(robot_scene.intrinsics.height)
    matches = []
    for _ in range(cfg.per_object):
        human_pt = (
            float(rng.uniform(source.bbox.x_min, source.bbox.x_max)),
            float(rng.uniform(source.bbox.y_min, source.bbox.y_max)),
        )
        if cfg.outlier_rate > 0.0 and rng.random() < cfg.outlier_rate:
            robot_pt = (float(rng.uniform(0.0, width)), float(rng.uniform(0.0, height)))
        else:
            jittered = target.position + rng.normal(0.0, cfg.jitter_px, size=2)
            robot_pt = (
                float(min(max(jittered[0], 0.0), width)),
                float(min(max(jittered[1], 0.0), height)),
            )
        matches.append(KeypointMatch(human_pt, robot_pt, float(rng.uniform(0.5, 1.0))))
    return MatchSet(tuple(matches), source.bbox)
