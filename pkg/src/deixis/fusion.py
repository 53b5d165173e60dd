"""Select the referred object from a gaze trace by recency-weighted distance.

Each candidate object accumulates sum_n exp(alpha * (n - n_max)) * dist_n,
the weighted pixel distance between its position and every projected gaze
point in the window; the object with the smallest sum wins. The decay factor
grows with the window length but is capped so no single gaze point can
dominate the selection:

    alpha = 0           when n_max == 2
    alpha = min(0.65, 0.1 * n_max)   otherwise
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyScene, EmptyTrace
from .scene import ReferredObject, SceneObservationSet

ALPHA_CAP = 0.65
ALPHA_SLOPE = 0.1


@dataclass(frozen=True)
class GazeTrace:
    """Projected gaze points on the window's reference image plane."""

    points: np.ndarray  # shape (n_max + 1, 2), pixels

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 1:
            raise ValueError(f"trace must be (k, 2) with k >= 1, got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValueError("trace points must be finite")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def n_max(self) -> int:
        return self.points.shape[0] - 1


@dataclass(frozen=True)
class FusionWeights:
    alpha: float
    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size < 1:
            raise ValueError("weights must be a non-empty vector")
        if not np.all(weights > 0):
            raise ValueError("weights must be strictly positive")
        if weights[-1] != 1.0:
            raise ValueError("the newest sample's weight must be exactly 1")
        if np.any(np.diff(weights) < 0):
            raise ValueError("weights must be non-decreasing toward recent samples")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)


@dataclass(frozen=True)
class FusionResult:
    selected: ReferredObject
    scores: dict[str, float]
    margin: float


def alpha_for(n_max: int) -> float:
    """Decay factor for a window whose tick indices run 0..n_max."""
    if n_max < 0:
        raise ValueError("index bound must be >= 0")
    if n_max == 2:
        return 0.0
    return min(ALPHA_CAP, ALPHA_SLOPE * n_max)


def weights_for(n_max: int) -> FusionWeights:
    """Raw recency weights exp(alpha * (n - n_max)); the last one is 1."""
    alpha = alpha_for(n_max)
    n = np.arange(n_max + 1, dtype=np.float64)
    return FusionWeights(alpha, np.exp(alpha * (n - n_max)))


def normalized_weights(n_max: int) -> np.ndarray:
    """Recency weights scaled to sum to 1, as exported for weight-curve plots."""
    raw = weights_for(n_max).weights
    return raw / raw.sum()


def fuse(trace: GazeTrace, scene: SceneObservationSet) -> FusionResult:
    """Pick the candidate with the lowest recency-weighted gaze distance.

    Ties and near-ties are resolved deterministically by lowest object id.
    """
    if not scene.objects:
        raise EmptyScene("no candidate objects to fuse against")
    if trace.points.shape[0] < 1:
        raise EmptyTrace("no gaze points to fuse")
    weights = weights_for(trace.n_max).weights
    scores: dict[str, float] = {}
    for obj in scene.objects:
        dists = np.linalg.norm(trace.points - obj.position, axis=1)
        scores[obj.id] = float(np.sum(weights * dists))
    best = min(scene.objects, key=lambda o: (scores[o.id], o.id))
    others = sorted(s for oid, s in scores.items() if oid != best.id)
    margin = (others[0] - scores[best.id]) if others else math.inf
    return FusionResult(ReferredObject(scene.view, best), scores, margin)
