"""Cross-view keypoint voting and the synthetic matcher."""

import math

import numpy as np
import pytest

from deixis.alignment import (
    AlignmentConfig,
    KeypointMatch,
    MatchSet,
    MatchSynthConfig,
    align,
    synth_matches,
)
from deixis.errors import NoCorrespondence
from deixis.geometry import Intrinsics
from deixis.scene import BBox, ObjectObservation, SceneObservationSet, View, encode_rle_mask, decode_rle_mask

ROBOT_K = Intrinsics(fx=600.0, fy=600.0, cx=640.0, cy=360.0, width=1280, height=720)
SOURCE_BBOX = BBox(100.0, 100.0, 300.0, 300.0)


def _robot_scene(boxes: dict[str, BBox], masks: dict[str, np.ndarray] | None = None) -> SceneObservationSet:
    masks = masks or {}
    objects = tuple(
        ObjectObservation(oid, bbox, masks.get(oid)) for oid, bbox in sorted(boxes.items())
    )
    return SceneObservationSet(View.ROBOT, "stuff", objects, ROBOT_K)


def _matches(robot_pts, confidence=0.9) -> MatchSet:
    return MatchSet(
        tuple(KeypointMatch((150.0, 150.0), (float(x), float(y)), confidence) for x, y in robot_pts),
        SOURCE_BBOX,
    )


def test_majority_box_wins():
    scene = _robot_scene({"a": BBox(0, 0, 100, 100), "b": BBox(200, 0, 300, 100)})
    matches = _matches([(10, 10), (20, 20), (30, 30), (40, 40), (50, 50), (210, 10), (220, 20)])
    result = align(matches, scene)
    assert result.referred.observation.id == "a"
    assert result.counts == {"a": 5, "b": 2}
    assert result.margin == 3


def test_single_object_with_any_match():
    scene = _robot_scene({"only": BBox(0, 0, 100, 100)})
    result = align(_matches([(10, 10)]), scene)
    assert result.referred.observation.id == "only"
    assert result.margin == 1


def test_zero_matches_anywhere_is_no_correspondence():
    scene = _robot_scene({"a": BBox(0, 0, 100, 100), "b": BBox(200, 0, 300, 100)})
    with pytest.raises(NoCorrespondence):
        align(_matches([(150, 500), (600, 600)]), scene)
    with pytest.raises(NoCorrespondence):
        align(_matches([]), scene)


def test_min_count_threshold_gates_weak_correspondence():
    scene = _robot_scene({"a": BBox(0, 0, 100, 100)})
    matches = _matches([(10, 10), (20, 20)])
    assert align(matches, scene, AlignmentConfig(min_count=2)).counts["a"] == 2
    with pytest.raises(NoCorrespondence):
        align(matches, scene, AlignmentConfig(min_count=3))


def test_boundary_points_count_as_inside():
    scene = _robot_scene({"a": BBox(100, 100, 200, 200), "b": BBox(300, 100, 400, 200)})
    matches = _matches([(100.0, 100.0), (200.0, 200.0), (100.0, 200.0), (300.0, 100.0)])
    result = align(matches, scene)
    assert result.counts == {"a": 3, "b": 1}


def test_overlapping_boxes_both_count_shared_points():
    scene = _robot_scene({"a": BBox(0, 0, 120, 120), "b": BBox(80, 80, 200, 200)})
    result = align(_matches([(100, 100), (10, 10)]), scene)
    assert result.counts == {"a": 2, "b": 1}
    assert result.referred.observation.id == "a"


def test_count_ties_break_to_lowest_id():
    scene = _robot_scene({"z": BBox(0, 0, 100, 100), "a": BBox(200, 0, 300, 100)})
    result = align(_matches([(10, 10), (210, 10)]), scene)
    assert result.referred.observation.id == "a"
    assert result.margin == 0


def test_confidences_never_change_the_vote(rng):
    scene = _robot_scene({"a": BBox(0, 0, 100, 100), "b": BBox(200, 0, 300, 100)})
    points = [(10, 10), (20, 20), (210, 10), (220, 20), (230, 30)]
    confidences = [0.1, 0.99, 0.5, 0.7, 0.2]
    base = MatchSet(
        tuple(KeypointMatch((150.0, 150.0), (float(x), float(y)), c) for (x, y), c in zip(points, confidences)),
        SOURCE_BBOX,
    )
    expected = align(base, scene)
    for _ in range(10):
        shuffled = list(confidences)
        rng.shuffle(shuffled)
        permuted = MatchSet(
            tuple(KeypointMatch((150.0, 150.0), (float(x), float(y)), c) for (x, y), c in zip(points, shuffled)),
            SOURCE_BBOX,
        )
        result = align(permuted, scene)
        assert result.referred.observation.id == expected.referred.observation.id
        assert result.counts == expected.counts


def test_mask_membership_overrides_bbox():
    # point inside the bbox but outside the mask must not count
    mask = np.zeros((720, 1280), dtype=bool)
    mask[100:150, 100:150] = True  # only the top-left quadrant of the box
    mask = decode_rle_mask(encode_rle_mask(mask))
    scene = _robot_scene({"a": BBox(100, 100, 200, 200)}, {"a": mask})
    result = align(_matches([(120.0, 120.0), (180.0, 180.0)]), scene)
    assert result.counts == {"a": 1}
    assert result.region_used == {"a": "mask"}


def test_area_normalized_variant_is_available_but_not_default():
    # a big box with more raw votes loses to a small dense box when normalizing
    scene = _robot_scene({"big": BBox(0, 0, 500, 500), "small": BBox(600, 0, 620, 20)})
    matches = _matches([(10, 10), (40, 40), (80, 80), (610, 10)])
    assert align(matches, scene).referred.observation.id == "big"
    normalized = align(matches, scene, AlignmentConfig(normalize_by_area=True))
    assert normalized.referred.observation.id == "small"


def _oracle(matches: MatchSet, boxes: dict[str, BBox], min_count: int = 1):
    counts = {}
    for oid, bbox in boxes.items():
        counts[oid] = sum(
            1
            for m in matches.matches
            if bbox.x_min <= m.robot_pt[0] <= bbox.x_max and bbox.y_min <= m.robot_pt[1] <= bbox.y_max
        )
    if max(counts.values()) < min_count:
        return None
    return min(sorted(counts), key=lambda oid: (-counts[oid], oid))


def test_matches_brute_force_on_random_instances(rng):
    for case in range(300):
        n_objects = int(rng.integers(2, 9))
        boxes = {}
        for i in range(n_objects):
            x0 = float(rng.uniform(0, 1100))
            y0 = float(rng.uniform(0, 600))
            boxes[f"obj{i:02d}"] = BBox(x0, y0, x0 + float(rng.uniform(10, 150)), y0 + float(rng.uniform(10, 110)))
        points = []
        for _ in range(int(rng.integers(1, 40))):
            if rng.random() < 0.2:  # snap some points onto box edges
                bbox = boxes[f"obj{int(rng.integers(0, n_objects)):02d}"]
                points.append((bbox.x_min, float(rng.uniform(bbox.y_min, bbox.y_max))))
            else:
                points.append((float(rng.uniform(0, 1280)), float(rng.uniform(0, 720))))
        matches = _matches(points)
        scene = _robot_scene(boxes)
        expected = _oracle(matches, boxes)
        if expected is None:
            with pytest.raises(NoCorrespondence):
                align(matches, scene)
        else:
            assert align(matches, scene).referred.observation.id == expected


# --- synthetic matcher ---

def _one_object_scene(bbox: BBox) -> SceneObservationSet:
    return _robot_scene({"target": bbox})


def test_synth_zero_noise_lands_every_match_inside_the_true_box():
    source = ObjectObservation("src", SOURCE_BBOX)
    scene = _one_object_scene(BBox(600, 300, 700, 400))
    cfg = MatchSynthConfig(per_object=10, outlier_rate=0.0, jitter_px=0.0)
    matches = synth_matches(source, scene, {"src": "target"}, cfg, np.random.default_rng(3))
    assert len(matches.matches) == 10
    for m in matches.matches:
        assert scene.objects[0].bbox.contains(m.robot_pt)
        assert SOURCE_BBOX.contains(m.human_pt)


def test_synth_is_reproducible_for_a_fixed_seed():
    source = ObjectObservation("src", SOURCE_BBOX)
    scene = _one_object_scene(BBox(600, 300, 700, 400))
    cfg = MatchSynthConfig(per_object=25, outlier_rate=0.3, jitter_px=4.0)
    first = synth_matches(source, scene, {"src": "target"}, cfg, np.random.default_rng(42))
    second = synth_matches(source, scene, {"src": "target"}, cfg, np.random.default_rng(42))
    assert first == second
    third = synth_matches(source, scene, {"src": "target"}, cfg, np.random.default_rng(43))
    assert third != first


def test_synth_jitter_tail_matches_gaussian_integral():
    # thin 10x10 box, sigma 5: per-axis inside probability is erf(1/sqrt(2))
    source = ObjectObservation("src", SOURCE_BBOX)
    bbox = BBox(635.0, 355.0, 645.0, 365.0)
    scene = _one_object_scene(bbox)
    cfg = MatchSynthConfig(per_object=20000, outlier_rate=0.0, jitter_px=5.0)
    matches = synth_matches(source, scene, {"src": "target"}, cfg, np.random.default_rng(7))
    inside = sum(1 for m in matches.matches if bbox.contains(m.robot_pt))
    p_axis = math.erf(5.0 / (5.0 * math.sqrt(2.0)))
    expected = p_axis * p_axis
    mc_std = math.sqrt(expected * (1 - expected) / cfg.per_object)
    assert abs(inside / cfg.per_object - expected) < 5 * mc_std


def test_synth_requires_declared_correspondence():
    source = ObjectObservation("src", SOURCE_BBOX)
    scene = _one_object_scene(BBox(600, 300, 700, 400))
    with pytest.raises(ValueError):
        synth_matches(source, scene, {}, MatchSynthConfig(), np.random.default_rng(0))


def test_match_set_rejects_source_points_outside_bbox():
    with pytest.raises(ValueError):
        MatchSet((KeypointMatch((999.0, 999.0), (10.0, 10.0)),), SOURCE_BBOX)


def test_confidence_range_enforced():
    with pytest.raises(ValueError):
        KeypointMatch((150.0, 150.0), (10.0, 10.0), confidence=1.5)
