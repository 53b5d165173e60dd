"""Typed containers for the human-side input streams.

A recording session yields a word-timestamped transcript, a gaze stream
(one pupil-frame 3D gaze point plus head pose per tick), and references to
the egocentric video frames. The two operations here slice those streams:
``gaze_window`` picks one gaze record per head-pose tick inside a word's
time interval, and ``word_interval`` looks that interval up.
"""

from __future__ import annotations

import math
import re
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateInterval, EmptyWindow, WordNotFound
from .geometry import Frame, Pose

DEFAULT_TICK_RATE_HZ = 20.0  # head-pose tick rate of the tracking camera

_PUNCT = re.compile(r"[^\w\s]")
_SPACE = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return _SPACE.sub(" ", _PUNCT.sub("", text.lower())).strip()


def normalize_words(text: str) -> list[str]:
    normalized = normalize_text(text)
    return normalized.split(" ") if normalized else []


@dataclass(frozen=True)
class WordTiming:
    text: str
    t_start: float
    t_end: float

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ValueError("word timings must be finite")
        if self.t_start > self.t_end:
            raise ValueError(f"word {self.text!r} has t_start > t_end")


@dataclass(frozen=True)
class Transcript:
    words: tuple[WordTiming, ...]
    raw_text: str

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        for earlier, later in zip(self.words, self.words[1:]):
            if earlier.t_end > later.t_start:
                raise ValueError(f"words {earlier.text!r} and {later.text!r} overlap or are out of order")
        joined = " ".join(normalize_text(w.text) for w in self.words)
        if joined != normalize_text(self.raw_text):
            raise ValueError("word list does not match raw text after normalization")

    def span(self) -> tuple[float, float]:
        if not self.words:
            raise ValueError("empty transcript has no span")
        return (self.words[0].t_start, self.words[-1].t_end)

    def normalized_words(self) -> list[str]:
        return [normalize_text(w.text) for w in self.words]


@dataclass(frozen=True)
class GazeRecord:
    """One gaze sample: pupil-frame 3D gaze point plus the head pose at t."""

    t: float
    gaze_pupil: np.ndarray
    head_pose: Pose

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise ValueError("gaze timestamp must be finite")
        gaze = np.asarray(self.gaze_pupil, dtype=np.float64)
        if gaze.shape != (3,) or not np.all(np.isfinite(gaze)):
            raise ValueError("gaze point must be a finite 3-vector")
        gaze.setflags(write=False)
        object.__setattr__(self, "gaze_pupil", gaze)
        if self.head_pose.from_frame.frame is not Frame.GLASSES_CAMERA or (
            self.head_pose.to_frame.frame is not Frame.SLAM_WORLD
        ):
            raise ValueError("head pose must map glasses camera -> SLAM world")


@dataclass(frozen=True)
class FrameRef:
    t: float
    frame_id: str


@dataclass(frozen=True)
class HumanInput:
    """The full human-side observation bundle for one command."""

    transcript: Transcript
    gaze_stream: tuple[GazeRecord, ...]
    frames: tuple[FrameRef, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "gaze_stream", tuple(self.gaze_stream))
        object.__setattr__(self, "frames", tuple(self.frames))
        for seq, name in ((self.gaze_stream, "gaze records"), (self.frames, "frame refs")):
            ts = [r.t for r in seq]
            if ts != sorted(ts):
                raise ValueError(f"{name} must be time-ordered")
        if self.gaze_stream:
            lo = max(self.transcript.span()[0], self.gaze_stream[0].t)
            hi = min(self.transcript.span()[1], self.gaze_stream[-1].t)
            if lo > hi:
                raise ValueError("transcript and gaze stream share no common time interval")


def gaze_window(
    stream: Sequence[GazeRecord],
    interval: tuple[float, float],
    rate_hz: float = DEFAULT_TICK_RATE_HZ,
) -> list[GazeRecord]:
    """One gaze record per head-pose tick inside ``interval``.

    Ticks start at the interval's left edge and run at ``rate_hz``; the tick
    index bound is floor(duration * rate - 1), so a window of duration d
    yields floor(d * rate - 1) + 1 records. Each tick takes the record
    nearest in time, with ties resolved toward the earlier record, so a
    slower stream gets records duplicated rather than skipped.
    """
    t_a, t_b = interval
    if t_a > t_b:
        raise ValueError(f"interval is reversed: [{t_a}, {t_b}]")
    if rate_hz <= 0:
        raise ValueError("tick rate must be positive")
    n_max = math.floor((t_b - t_a) * rate_hz - 1.0)
    if n_max < 0:
        raise DegenerateInterval(f"interval [{t_a}, {t_b}] holds no tick at {rate_hz} Hz")
    if not any(t_a <= record.t <= t_b for record in stream):
        raise EmptyWindow(f"no gaze records inside [{t_a}, {t_b}]")

    times = [record.t for record in stream]
    picked: list[GazeRecord] = []
    for n in range(n_max + 1):
        tick = t_a + n / rate_hz
        idx = bisect_left(times, tick)
        best = None
        for candidate in (idx - 1, idx):
            if 0 <= candidate < len(times):
                if best is None or abs(times[candidate] - tick) < abs(times[best] - tick):
                    best = candidate
        picked.append(stream[best])
    return picked


def word_interval(
    transcript: Transcript,
    slot_word: str,
    occurrence: int = 0,
    padding: float = 0.0,
    bounds: Optional[tuple[float, float]] = None,
) -> tuple[float, float]:
    """Time interval of the chosen occurrence of a word, optionally padded.

    Padding widens the interval symmetrically and is clamped to ``bounds``
    (the transcript span by default).
    """
    target = normalize_text(slot_word)
    hits = [w for w in transcript.words if normalize_text(w.text) == target]
    if occurrence >= len(hits) or occurrence < 0:
        raise WordNotFound(f"occurrence {occurrence} of word {slot_word!r} not in transcript")
    hit = hits[occurrence]
    lo, hi = bounds if bounds is not None else transcript.span()
    return (max(lo, hit.t_start - padding), min(hi, hit.t_end + padding))
