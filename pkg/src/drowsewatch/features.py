"""Fold a frame stream into the two-dimensional behavior signal — current
contiguous eye-closure duration and time since the last yawn — sampled on a
fixed 100 ms grid, plus sliding windows and the plain-text series format.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .ingest import DetectionLabel, FrameDetection

SAMPLE_PERIOD_MS = 100
WINDOW_SAMPLES = 50
# Closure durations beyond double the strictest alarm threshold carry no extra
# decision information; clipping also bounds the classifier input scale.
EYE_CLOSURE_CAP_MS = 10_000
# Yawn sensitivity expires after two minutes; the saturated value doubles as
# the "no yawn yet" sentinel.
YAWN_SATURATION_MS = 120_000


@dataclass(frozen=True)
class BehaviorSample:
    """One 100 ms tick of the behavior signal (both values in milliseconds)."""

    t_ms: int
    eye_closure_ms: int
    since_yawn_ms: int

    def __post_init__(self) -> None:
        if self.t_ms < 0 or self.t_ms % SAMPLE_PERIOD_MS:
            raise ValueError(f"t_ms must be a non-negative multiple of {SAMPLE_PERIOD_MS}, got {self.t_ms}")
        if not 0 <= self.eye_closure_ms <= EYE_CLOSURE_CAP_MS:
            raise ValueError(f"eye_closure_ms out of range [0,{EYE_CLOSURE_CAP_MS}]: {self.eye_closure_ms}")
        if not 0 <= self.since_yawn_ms <= YAWN_SATURATION_MS:
            raise ValueError(f"since_yawn_ms out of range [0,{YAWN_SATURATION_MS}]: {self.since_yawn_ms}")

    def normalized(self) -> tuple[float, float]:
        """Both signal values scaled to [0,1] by their caps."""
        return (
            self.eye_closure_ms / EYE_CLOSURE_CAP_MS,
            self.since_yawn_ms / YAWN_SATURATION_MS,
        )


class FrameOrderError(ValueError):
    """Frames must arrive with strictly increasing timestamps."""


@dataclass(frozen=True)
class ExtractorState:
    """Running quantities behind the two signal values.

    eye_closed_since is the start of the current contiguous closure (None while
    open); last_yawn_at the most recent yawn detection. Frames without any eye
    detection keep the previous open/closed state.
    """

    eye_closed_since: int | None = None
    last_yawn_at: int | None = None
    last_frame: FrameDetection | None = None


def update(state: ExtractorState, frame: FrameDetection) -> ExtractorState:
    """Advance the extractor by one frame; pure, returns the next state."""
    if state.last_frame is not None and frame.timestamp_ms <= state.last_frame.timestamp_ms:
        raise FrameOrderError(
            f"frame at {frame.timestamp_ms} ms not after previous {state.last_frame.timestamp_ms} ms"
        )
    closed_since = state.eye_closed_since
    any_open = frame.has(DetectionLabel.OPENED_EYE)
    any_closed = frame.has(DetectionLabel.CLOSED_EYE)
    if any_open:
        closed_since = None
    elif any_closed and closed_since is None:
        closed_since = frame.timestamp_ms
    last_yawn = state.last_yawn_at
    if frame.has(DetectionLabel.YAWN):
        last_yawn = frame.timestamp_ms
    return ExtractorState(closed_since, last_yawn, frame)


def sample(state: ExtractorState, t_ms: int) -> BehaviorSample:
    """Read the signal at tick t_ms; state must reflect all frames up to t_ms."""
    if t_ms % SAMPLE_PERIOD_MS:
        raise ValueError(f"sample time must be a multiple of {SAMPLE_PERIOD_MS} ms, got {t_ms}")
    if state.eye_closed_since is None:
        closure = 0
    else:
        closure = min(t_ms - state.eye_closed_since, EYE_CLOSURE_CAP_MS)
    if state.last_yawn_at is None:
        since_yawn = YAWN_SATURATION_MS
    else:
        since_yawn = min(t_ms - state.last_yawn_at, YAWN_SATURATION_MS)
    return BehaviorSample(t_ms, closure, since_yawn)


def extract_samples(frames: Iterable[FrameDetection]) -> Iterator[BehaviorSample]:
    """Replay a frame stream into the 100 ms sample grid.

    Ticks run from 0 through the last frame timestamp; each tick reflects every
    frame with timestamp <= tick.
    """
    state = ExtractorState()
    next_tick = 0
    for frame in frames:
        while next_tick < frame.timestamp_ms:
            yield sample(state, next_tick)
            next_tick += SAMPLE_PERIOD_MS
        state = update(state, frame)
    if state.last_frame is not None:
        while next_tick <= state.last_frame.timestamp_ms:
            yield sample(state, next_tick)
            next_tick += SAMPLE_PERIOD_MS


class SampleGapError(ValueError):
    """Samples are not consecutive on the 100 ms grid."""


@dataclass(frozen=True)
class Window:
    """Consecutive samples, 100 ms apart; the classifier consumes 50 of them."""

    samples: tuple[BehaviorSample, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise ValueError("window must contain at least one sample")
        previous = self.samples[0].t_ms
        for s in self.samples[1:]:
            if s.t_ms - previous != SAMPLE_PERIOD_MS:
                raise SampleGapError(f"non-consecutive samples at {previous} -> {s.t_ms}")
            previous = s.t_ms

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def start_ms(self) -> int:
        return self.samples[0].t_ms

    @property
    def end_ms(self) -> int:
        return self.samples[-1].t_ms

    def features(self) -> np.ndarray:
        """Raw (len, 2) float array: eye_closure_ms, since_yawn_ms."""
        return np.array([(s.eye_closure_ms, s.since_yawn_ms) for s in self.samples], dtype=np.float64)

    def normalized(self) -> np.ndarray:
        """(len, 2) array scaled to [0,1] — the classifier input."""
        return self.features() / np.array([EYE_CLOSURE_CAP_MS, YAWN_SATURATION_MS], dtype=np.float64)


def windows(samples: Sequence[BehaviorSample], width: int = WINDOW_SAMPLES) -> Iterator[Window]:
    """Slide a width-sample window with stride 1 over a consecutive sequence.

    N samples yield max(0, N - width + 1) windows; adjacent windows overlap by
    width - 1 samples. Raises SampleGapError on any spacing gap.
    """
    if width < 1:
        raise ValueError(f"window width must be >= 1, got {width}")
    seq = tuple(samples)
    for a, b in zip(seq, seq[1:]):
        if b.t_ms - a.t_ms != SAMPLE_PERIOD_MS:
            raise SampleGapError(f"non-consecutive samples at {a.t_ms} -> {b.t_ms}")

    def generate() -> Iterator[Window]:
        for k in range(max(0, len(seq) - width + 1)):
            yield Window(seq[k : k + width])

    return generate()


class SeriesFormatError(ValueError):
    """Malformed plain-text series line."""


_SERIES_TOKEN = re.compile(r"^[0-9]+$")


def export_series(samples: Iterable[BehaviorSample]) -> str:
    """Render samples as the two-column millisecond text format, LF-terminated."""
    return "".join(f"{s.eye_closure_ms} {s.since_yawn_ms}\n" for s in samples)


def import_series(text: str, start_ms: int = 0) -> list[BehaviorSample]:
    """Parse the two-column text format back into samples.

    The format stores only the signal columns, so timestamps are regenerated on
    the 100 ms grid from start_ms; export/import round-trips exactly for
    sequences timed on that canonical grid.
    """
    if start_ms < 0 or start_ms % SAMPLE_PERIOD_MS:
        raise ValueError(f"start_ms must be a non-negative multiple of {SAMPLE_PERIOD_MS}")
    out: list[BehaviorSample] = []
    t = start_ms
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if len(parts) != 2:
            raise SeriesFormatError(f"line {line_no}: expected 2 columns, got {len(parts)}")
        for token in parts:
            if not _SERIES_TOKEN.match(token):
                raise SeriesFormatError(f"line {line_no}: non-integer token {token!r}")
        try:
            out.append(BehaviorSample(t, int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise SeriesFormatError(f"line {line_no}: {exc}") from None
        t += SAMPLE_PERIOD_MS
    return out
