"""Recency-weighted gaze fusion against direct arithmetic oracles."""

import math

import numpy as np
import pytest

from deixis.errors import EmptyScene
from deixis.fusion import GazeTrace, alpha_for, fuse, normalized_weights, weights_for
from deixis.geometry import Intrinsics
from deixis.scene import BBox, ObjectObservation, SceneObservationSet, View

K = Intrinsics(fx=600.0, fy=600.0, cx=704.0, cy=704.0, width=1408, height=1408)


def _scene(centers: dict[str, tuple[float, float]]) -> SceneObservationSet:
    # half extents shrink near the image border so the bbox stays in bounds
    # while its midpoint stays exactly at the requested center
    objects = []
    for oid, (cx, cy) in sorted(centers.items()):
        hx = min(5.0, cx, K.width - cx)
        hy = min(5.0, cy, K.height - cy)
        objects.append(ObjectObservation(oid, BBox(cx - hx, cy - hy, cx + hx, cy + hy)))
    return SceneObservationSet(View.HUMAN, "stuff", tuple(objects), K)


def _trace_x(xs) -> GazeTrace:
    return GazeTrace(np.array([[float(x), 100.0] for x in xs]))


# --- decay schedule ---

def test_alpha_special_case_and_slope():
    assert alpha_for(2) == 0.0
    assert alpha_for(4) == 0.4
    assert alpha_for(10) == 0.65


def test_alpha_caps_at_065_from_seven_up():
    for n_max in range(7, 80):
        assert alpha_for(n_max) == 0.65


def test_alpha_degenerate_windows_use_general_branch():
    assert alpha_for(0) == 0.0
    assert alpha_for(1) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        alpha_for(-1)


def test_weights_last_is_exactly_one_and_nondecreasing():
    for n_max in (0, 1, 2, 5, 20):
        weights = weights_for(n_max).weights
        assert weights[-1] == 1.0
        assert np.all(weights > 0)
        assert np.all(np.diff(weights) >= 0)


def test_weight_ratio_is_exponential_in_alpha():
    for n_max in (3, 5, 12):
        weights = weights_for(n_max).weights
        alpha = alpha_for(n_max)
        for n in range(n_max):
            assert weights[n + 1] / weights[n] == pytest.approx(math.exp(alpha), rel=1e-12)


# --- normalized weights ---

def test_normalized_uniform_for_three_sample_window():
    np.testing.assert_allclose(normalized_weights(2), [1 / 3] * 3, atol=1e-12)


def test_normalized_single_sample():
    np.testing.assert_array_equal(normalized_weights(0), [1.0])


def test_normalized_matches_brute_force(rng):
    for n_max in (1, 5, 13, 40):
        alpha = 0.0 if n_max == 2 else min(0.65, 0.1 * n_max)
        raw = [math.exp(alpha * (n - n_max)) for n in range(n_max + 1)]
        total = sum(raw)
        np.testing.assert_allclose(normalized_weights(n_max), [w / total for w in raw], rtol=1e-12)
        assert abs(normalized_weights(n_max).sum() - 1.0) < 1e-12


def test_no_single_sample_dominates():
    # exact-form bound: last normalized weight <= 1 - n_max * exp(-0.65 n_max) / sum
    for n_max in range(0, 51):
        weights = weights_for(n_max).weights
        total = weights.sum()
        assert weights[-1] / total <= 1.0 - n_max * math.exp(-0.65 * n_max) / total + 1e-15


# --- selection ---

def test_single_object_selected_regardless_of_trace(rng):
    scene = _scene({"only": (30.0, 100.0)})
    result = fuse(_trace_x(rng.uniform(0, 1408, size=7)), scene)
    assert result.selected.observation.id == "only"
    assert result.margin == math.inf


def test_unweighted_sums_prefer_smaller_total_distance():
    # three samples -> uniform weights; totals are 29 vs 28
    scene = _scene({"far": (19.0, 100.0), "near": (2.0, 100.0)})
    result = fuse(_trace_x([0.0, 10.0, 20.0]), scene)
    assert result.scores["far"] == pytest.approx(29.0)
    assert result.scores["near"] == pytest.approx(28.0)
    assert result.selected.observation.id == "near"
    assert result.margin == pytest.approx(1.0)


def test_recent_fixation_dominates_with_decay():
    # six samples -> alpha = 0.5; late fixation at B outweighs early dwell at A
    scene = _scene({"a": (0.0, 100.0), "b": (10.0, 100.0)})
    result = fuse(_trace_x([0.0, 0.0, 0.0, 10.0, 10.0, 10.0]), scene)
    assert result.scores["a"] == pytest.approx(19.744, abs=1e-3)
    assert result.scores["b"] == pytest.approx(4.405, abs=1e-3)
    assert result.selected.observation.id == "b"


def test_ties_break_to_lowest_object_id():
    scene = _scene({"b_dup": (50.0, 100.0), "a_dup": (50.0, 100.0)})
    result = fuse(_trace_x([0.0, 30.0, 80.0]), scene)
    assert result.selected.observation.id == "a_dup"
    assert result.margin == 0.0


def test_rescaled_weights_do_not_change_selection(rng):
    # argmin is invariant to any positive rescaling of the weight vector
    for _ in range(50):
        n_max = int(rng.integers(0, 12))
        points = rng.uniform(0, 1408, size=(n_max + 1, 2))
        centers = {f"o{i}": tuple(rng.uniform(0, 1408, size=2)) for i in range(4)}
        result = fuse(GazeTrace(points), _scene(centers))
        scale = float(rng.uniform(0.1, 90.0))
        weights = weights_for(n_max).weights * scale
        rescored = {
            oid: float(np.sum(weights * np.linalg.norm(points - np.array(c), axis=1)))
            for oid, c in centers.items()
        }
        assert min(sorted(rescored), key=lambda o: (rescored[o], o)) == result.selected.observation.id


def _oracle(points, centers):
    """Independent double-loop evaluation with lowest-id tie-break."""
    n_max = len(points) - 1
    alpha = 0.0 if n_max == 2 else min(0.65, 0.1 * n_max)
    best_id, best_score = None, None
    for oid in sorted(centers):
        cx, cy = centers[oid]
        score = 0.0
        for n, (px, py) in enumerate(points):
            score += math.exp(alpha * (n - n_max)) * math.hypot(px - cx, py - cy)
        if best_score is None or score < best_score:
            best_id, best_score = oid, score
    return best_id


def test_matches_brute_force_oracle_on_random_instances(rng):
    for case in range(300):
        n_objects = int(rng.integers(2, 11))
        n_max = int(rng.integers(0, 31))
        centers = {f"obj{i:02d}": tuple(rng.uniform(0, 1408, size=2)) for i in range(n_objects)}
        if case % 10 == 0:  # engineered exact tie
            centers["obj00"] = centers[f"obj{n_objects - 1:02d}"]
        points = rng.uniform(0, 1408, size=(n_max + 1, 2))
        result = fuse(GazeTrace(points), _scene(centers))
        assert result.selected.observation.id == _oracle(points, centers)


def test_empty_scene_and_empty_trace_errors():
    with pytest.raises(EmptyScene):
        fuse(_trace_x([1.0]), SceneObservationSet(View.HUMAN, "stuff", (), K))
    # an empty trace is rejected at construction, before fuse can see one
    with pytest.raises(ValueError):
        GazeTrace(np.zeros((0, 2)))


def test_trace_rejects_nonfinite_points():
    with pytest.raises(ValueError):
        GazeTrace(np.array([[math.nan, 0.0]]))
