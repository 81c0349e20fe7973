"""Seeded synthetic driver-behavior streams with per-sample ground truth.

Alert segments blink briefly (physiological 300-400 ms) and rarely yawn;
drowsy segments mix long closures with frequent yawns so both signal
dimensions carry class information. Streams are emitted in the same detection
log format the ingest parser reads, so generated data can replay through the
whole engine.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .features import (
    SAMPLE_PERIOD_MS,
    WINDOW_SAMPLES,
    extract_samples,
    windows,
)
from .ingest import BoundingBox, Detection, DetectionLabel, FrameDetection
from .lstm import LabeledSequence


class Regime(Enum):
    ALERT = "alert"
    DROWSY = "drowsy"


@dataclass(frozen=True)
class Segment:
    regime: Regime
    duration_ms: int

    def __post_init__(self) -> None:
        if self.duration_ms <= 0:
            raise ValueError(f"segment duration must be positive, got {self.duration_ms}")


@dataclass(frozen=True)
class Scenario:
    """Timeline of behavior regimes; must span at least one window."""

    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("scenario needs at least one segment")
        if self.total_ms < WINDOW_SAMPLES * SAMPLE_PERIOD_MS:
            raise ValueError(
                f"scenario must span at least {WINDOW_SAMPLES * SAMPLE_PERIOD_MS} ms, got {self.total_ms}"
            )

    @property
    def total_ms(self) -> int:
        return sum(s.duration_ms for s in self.segments)

    def regime_at(self, t_ms: int) -> Regime:
        """Regime active at t_ms; segments are half-open [start, end)."""
        if t_ms < 0:
            raise ValueError(f"negative time {t_ms}")
        start = 0
        for segment in self.segments:
            if t_ms < start + segment.duration_ms:
                return segment.regime
            start += segment.duration_ms
        return self.segments[-1].regime

    @classmethod
    def single(cls, regime: Regime, duration_ms: int) -> "Scenario":
        return cls((Segment(regime, duration_ms),))


@dataclass(frozen=True)
class RegimeParams:
    """Event statistics per regime plus the stream seed.

    Gaps between eye closures are exponential (memoryless inter-arrival);
    durations are uniform over the configured ranges. Yawn rates are events
    per minute.
    """

    alert_blink_ms: tuple[int, int] = (300, 400)
    drowsy_closure_ms: tuple[int, int] = (1500, 8000)
    alert_gap_mean_ms: float = 4000.0
    drowsy_gap_mean_ms: float = 8000.0
    alert_yawns_per_min: float = 0.0
    drowsy_yawns_per_min: float = 3.0
    yawn_duration_ms: tuple[int, int] = (1000, 3000)
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("alert_blink_ms", "drowsy_closure_ms", "yawn_duration_ms"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must be a non-empty non-negative range, got ({lo},{hi})")
        for name in ("alert_gap_mean_ms", "drowsy_gap_mean_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("alert_yawns_per_min", "drowsy_yawns_per_min"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def closure_range(self, regime: Regime) -> tuple[int, int]:
        return self.alert_blink_ms if regime is Regime.ALERT else self.drowsy_closure_ms

    def gap_mean(self, regime: Regime) -> float:
        return self.alert_gap_mean_ms if regime is Regime.ALERT else self.drowsy_gap_mean_ms

    def yawn_rate(self, regime: Regime) -> float:
        return self.alert_yawns_per_min if regime is Regime.ALERT else self.drowsy_yawns_per_min


# Static face geometry for synthetic detections (pixel coordinates).
_FACE_BOX = BoundingBox(100, 60, 420, 440)
_EYE_BOXES = (BoundingBox(150, 150, 230, 195), BoundingBox(290, 150, 370, 195))
_EYEBROW_BOXES = (BoundingBox(145, 110, 235, 140), BoundingBox(285, 110, 375, 140))
_MOUTH_BOX = BoundingBox(210, 300, 310, 360)


def _intervals(
    rng: np.random.Generator,
    start_ms: int,
    end_ms: int,
    gap_mean_ms: float,
    duration_range: tuple[int, int],
) -> list[tuple[int, int]]:
    """Events with exponential gaps and uniform durations, clipped to the
    segment; [(start, end), ...] with end exclusive."""
    out = []
    t = start_ms + rng.exponential(gap_mean_ms)
    while t < end_ms:
        begin = int(t)
        duration = int(rng.integers(duration_range[0], duration_range[1] + 1))
        finish = min(begin + duration, end_ms)
        if finish > begin:
            out.append((begin, finish))
        t = begin + duration + rng.exponential(gap_mean_ms)
    return out


def _event_timeline(
    scenario: Scenario, params: RegimeParams, rng: np.random.Generator
) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    closures: list[tuple[int, int]] = []
    yawns: list[tuple[int, int]] = []
    start = 0
    for segment in scenario.segments:
        end = start + segment.duration_ms
        closures.extend(
            _intervals(rng, start, end, params.gap_mean(segment.regime), params.closure_range(segment.regime))
        )
        rate = params.yawn_rate(segment.regime)
        if rate > 0:
            yawns.extend(
                _intervals(rng, start, end, 60_000.0 / rate, params.yawn_duration_ms)
            )
        start = end
    return closures, yawns


def _covering(intervals: Sequence[tuple[int, int]], t: int, cursor: int) -> tuple[bool, int]:
    # Pointer scan; t is non-decreasing across calls.
    while cursor < len(intervals) and intervals[cursor][1] <= t:
        cursor += 1
    inside = cursor < len(intervals) and intervals[cursor][0] <= t < intervals[cursor][1]
    return inside, cursor


def generate_frames(
    scenario: Scenario, params: RegimeParams, fps: int = 30
) -> tuple[list[FrameDetection], list[Regime]]:
    """Synthesize a frame-level detection stream and per-tick ground truth.

    Returns (frames at 1000/fps ms spacing, regime label per 100 ms sample
    tick). Deterministic: same (scenario, params, fps) gives bit-identical
    output.
    """
    if not 1 <= fps <= 500:
        raise ValueError(f"fps must be in [1,500], got {fps}")
    rng = np.random.default_rng(params.seed)
    closures, yawns = _event_timeline(scenario, params, rng)
    total = scenario.total_ms
    frames: list[FrameDetection] = []
    closure_cursor = yawn_cursor = 0
    index = 0

    def conf() -> float:
        return round(float(rng.uniform(0.85, 0.99)), 4)

    while True:
        t = round(index * 1000.0 / fps)
        if t >= total:
            break
        closed, closure_cursor = _covering(closures, t, closure_cursor)
        yawning, yawn_cursor = _covering(yawns, t, yawn_cursor)
        detections = [Detection(DetectionLabel.FACE, _FACE_BOX, conf())]
        eye_label = DetectionLabel.CLOSED_EYE if closed else DetectionLabel.OPENED_EYE
        detections.extend(Detection(eye_label, box, conf()) for box in _EYE_BOXES)
        detections.extend(Detection(DetectionLabel.EYEBROW, box, conf()) for box in _EYEBROW_BOXES)
        mouth_label = DetectionLabel.YAWN if yawning else DetectionLabel.MOUTH
        detections.append(Detection(mouth_label, _MOUTH_BOX, conf()))
        frames.append(FrameDetection(t, tuple(detections)))
        index += 1
    if not frames:
        raise ValueError("scenario too short to produce any frame")
    last_t = frames[-1].timestamp_ms
    truth = [scenario.regime_at(t) for t in range(0, last_t + 1, SAMPLE_PERIOD_MS)]
    return frames, truth


def label_window_majority(truth_slice: Sequence[Regime]) -> int:
    """1 (drowsy) when drowsy samples hold a strict majority of the window."""
    drowsy = sum(1 for r in truth_slice if r is Regime.DROWSY)
    return 1 if drowsy >= len(truth_slice) // 2 + 1 else 0


@dataclass(eq=False)
class TrainingSet:
    sequences: list[LabeledSequence]
    drowsy_fraction: float


def generate_training_set(
    n_scenarios: int,
    params: RegimeParams,
    scenario_ms: int = 60_000,
    fps: int = 30,
    window_stride: int = 5,
) -> TrainingSet:
    """Build a labeled window dataset from alternating single-regime scenarios.

    Adjacent stride-1 windows share 49 of 50 samples, so windows are thinned by
    window_stride to decorrelate the dataset. Raises if the result would be
    single-class.
    """
    if n_scenarios < 2:
        raise ValueError(f"need at least 2 scenarios, got {n_scenarios}")
    if window_stride < 1:
        raise ValueError(f"window_stride must be >= 1, got {window_stride}")
    children = np.random.SeedSequence(params.seed).spawn(n_scenarios)
    sequences: list[LabeledSequence] = []
    for k in range(n_scenarios):
        regime = Regime.ALERT if k % 2 == 0 else Regime.DROWSY
        scenario = Scenario.single(regime, scenario_ms)
        scenario_seed = int(children[k].generate_state(1, np.uint64)[0])
        scenario_params = replace(params, seed=scenario_seed)
        frames, truth = generate_frames(scenario, scenario_params, fps)
        samples = list(extract_samples(frames))
        for w_index, window in enumerate(windows(samples)):
            if w_index % window_stride:
                continue
            label = label_window_majority(truth[w_index : w_index + len(window)])
            sequences.append(LabeledSequence.from_window(window, label))
    labels = {seq.label for seq in sequences}
    if labels != {0, 1}:
        raise ValueError("degenerate single-class training set; vary the scenarios")
    drowsy_fraction = sum(seq.label for seq in sequences) / len(sequences)
    return TrainingSet(sequences=sequences, drowsy_fraction=drowsy_fraction)
