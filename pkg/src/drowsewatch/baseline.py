"""Threshold-only drowsiness alarm used as the comparison baseline.

Alarms when the current eye-closure duration reaches 5 s, or 3 s for the two
minutes following a yawn; the alarm clears the instant the eyes reopen because
only the current sample is consulted.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .features import YAWN_SATURATION_MS, BehaviorSample

DEFAULT_THRESHOLD_MS = 5_000
SENSITIZED_THRESHOLD_MS = 3_000
YAWN_MEMORY_MS = 120_000


class SampleOrderError(ValueError):
    """Samples must arrive with strictly increasing timestamps."""


@dataclass(frozen=True)
class BaselineState:
    """Small, copyable state of the threshold machine.

    A yawn within yawn_memory_ms of "now" (inclusive boundary — the fail-safe
    reading) lowers the active threshold; each new yawn restarts the timer.
    """

    default_threshold_ms: int = DEFAULT_THRESHOLD_MS
    sensitized_threshold_ms: int = SENSITIZED_THRESHOLD_MS
    yawn_memory_ms: int = YAWN_MEMORY_MS
    last_yawn_at: int | None = None
    alarm: bool = False
    last_t_ms: int | None = None

    def __post_init__(self) -> None:
        if not 0 < self.sensitized_threshold_ms <= self.default_threshold_ms:
            raise ValueError(
                f"need 0 < sensitized ({self.sensitized_threshold_ms}) <= "
                f"default ({self.default_threshold_ms})"
            )
        if self.yawn_memory_ms < 0:
            raise ValueError(f"yawn_memory_ms must be non-negative, got {self.yawn_memory_ms}")


def active_threshold(state: BaselineState, now_ms: int) -> int:
    """Closure threshold in force at now_ms: sensitized iff a yawn happened
    within the memory span (boundary inclusive)."""
    if state.last_yawn_at is not None and now_ms - state.last_yawn_at <= state.yawn_memory_ms:
        return state.sensitized_threshold_ms
    return state.default_threshold_ms


def step(state: BaselineState, sample: BehaviorSample) -> tuple[BaselineState, bool]:
    """Advance by one behavior sample; pure, returns (next state, alarm).

    Yawn times are recovered from the since-yawn signal while it is below
    saturation; a saturated value carries no event information.
    """
    if state.last_t_ms is not None and sample.t_ms <= state.last_t_ms:
        raise SampleOrderError(f"sample at {sample.t_ms} ms not after previous {state.last_t_ms} ms")
    last_yawn = state.last_yawn_at
    if sample.since_yawn_ms < YAWN_SATURATION_MS:
        observed = sample.t_ms - sample.since_yawn_ms
        if last_yawn is None or observed > last_yawn:
            last_yawn = observed
    threshold = active_threshold(replace(state, last_yawn_at=last_yawn), sample.t_ms)
    alarm = sample.eye_closure_ms >= threshold
    next_state = replace(state, last_yawn_at=last_yawn, alarm=alarm, last_t_ms=sample.t_ms)
    return next_state, alarm
