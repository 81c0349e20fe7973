"""Two-stage streaming runtime.

A producer context folds detector frames into 100 ms behavior samples; a
consumer context assembles sliding windows and runs both classifiers, emitting
one event per sample. The handoff is a bounded FIFO: in replay mode the
producer blocks when the consumer lags (zero loss); in realtime mode the
producer paces itself by sample timestamps and drops the oldest queued sample
under overload, counting every drop.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .baseline import BaselineState, step as baseline_step
from .features import (
    EYE_CLOSURE_CAP_MS,
    SAMPLE_PERIOD_MS,
    WINDOW_SAMPLES,
    YAWN_SATURATION_MS,
    BehaviorSample,
    ExtractorState,
    sample as read_sample,
    update as apply_frame,
)
from .ingest import FrameDetection
from .lstm import DEFAULT_ALARM_THRESHOLD, LstmModel, forward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    sample_period_ms: int = SAMPLE_PERIOD_MS
    window_len: int = WINDOW_SAMPLES
    stride: int = 1
    queue_capacity: int = 256
    probability_threshold: float = DEFAULT_ALARM_THRESHOLD
    realtime: bool = False

    def __post_init__(self) -> None:
        if self.sample_period_ms < 1:
            raise ValueError(f"sample_period_ms must be >= 1, got {self.sample_period_ms}")
        if self.window_len < 1:
            raise ValueError(f"window_len must be >= 1, got {self.window_len}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.queue_capacity < self.window_len:
            raise ValueError(
                f"queue_capacity ({self.queue_capacity}) must be >= window_len ({self.window_len})"
            )
        if not 0.0 < self.probability_threshold < 1.0:
            raise ValueError(f"probability_threshold must be inside (0,1), got {self.probability_threshold}")

    @property
    def warmup_samples(self) -> int:
        """Samples consumed before the first full window exists."""
        return self.window_len - 1


def warmed_up(sample_index: int, window_len: int = WINDOW_SAMPLES) -> bool:
    """True once the 0-based sample index completes a full window."""
    return sample_index >= window_len - 1


@dataclass(frozen=True)
class DrowsinessEvent:
    """Per-sample pipeline output; probability is None during warmup."""

    sample: BehaviorSample
    lstm_probability: float | None
    lstm_alarm: bool
    baseline_alarm: bool
    queue_latency_us: int
    infer_latency_us: int

    @property
    def t_ms(self) -> int:
        return self.sample.t_ms

    def payload(self) -> tuple:
        """Deterministic fields (latencies excluded)."""
        return (
            self.sample.t_ms,
            self.sample.eye_closure_ms,
            self.sample.since_yawn_ms,
            self.lstm_probability,
            self.lstm_alarm,
            self.baseline_alarm,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "t": self.sample.t_ms,
                "closure_ms": self.sample.eye_closure_ms,
                "since_yawn_ms": self.sample.since_yawn_ms,
                "p": self.lstm_probability,
                "lstm_alarm": self.lstm_alarm,
                "baseline_alarm": self.baseline_alarm,
                "queue_us": self.queue_latency_us,
                "infer_us": self.infer_latency_us,
            },
            separators=(",", ":"),
        )


@dataclass
class RunSummary:
    frames_read: int = 0
    samples_produced: int = 0
    samples_consumed: int = 0
    events_emitted: int = 0
    drops: int = 0
    drained: int = 0
    wall_time_s: float = 0.0
    samples_per_sec: float = 0.0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, separators=(",", ":"))


class PipelineError(RuntimeError):
    """Run aborted; .summary holds the accounting up to the abort point."""

    def __init__(self, message: str, summary: RunSummary):
        super().__init__(message)
        self.summary = summary


class _Aborted(Exception):
    """Producer stopped because the consumer died."""


_DONE = object()


def run(
    config: PipelineConfig,
    source: Iterable[FrameDetection],
    model: LstmModel,
    sink: Callable[[DrowsinessEvent], None],
) -> RunSummary:
    """Drive the two worker contexts over a frame source until exhaustion.

    Every produced sample is consumed exactly once and in order (replay mode);
    produced == consumed + drained + drops always holds, with drained and
    drops zero in clean replay runs. Source or sink failures abort the run and
    re-raise as PipelineError carrying the partial summary.
    """
    work: queue.Queue = queue.Queue(maxsize=config.queue_capacity)
    summary = RunSummary()
    abort = threading.Event()
    failures: dict[str, BaseException] = {}
    start = time.perf_counter()

    def enqueue(item) -> None:
        if config.realtime:
            while True:
                try:
                    work.put_nowait(item)
                    return
                except queue.Full:
                    try:
                        work.get_nowait()
                        summary.drops += 1
                    except queue.Empty:
                        pass
        else:
            while not abort.is_set():
                try:
                    work.put(item, timeout=0.05)
                    return
                except queue.Full:
                    continue
            raise _Aborted()

    def pace(t_ms: int) -> None:
        target = start + t_ms / 1000.0
        delay = target - time.perf_counter()
        if delay > 0:
            time.sleep(delay)

    def emit(sample: BehaviorSample) -> None:
        if config.realtime:
            pace(sample.t_ms)
        enqueue((sample, time.perf_counter_ns()))
        summary.samples_produced += 1

    def produce() -> None:
        state = ExtractorState()
        next_tick = 0
        try:
            for frame in source:
                if abort.is_set():
                    return
                summary.frames_read += 1
                while next_tick < frame.timestamp_ms:
                    emit(read_sample(state, next_tick))
                    next_tick += config.sample_period_ms
                state = apply_frame(state, frame)
            if state.last_frame is not None:
                while next_tick <= state.last_frame.timestamp_ms:
                    if abort.is_set():
                        return
                    emit(read_sample(state, next_tick))
                    next_tick += config.sample_period_ms
        except _Aborted:
            pass
        except BaseException as exc:
            failures.setdefault("source", exc)
            abort.set()
        finally:
            while True:
                try:
                    work.put(_DONE, timeout=0.05)
                    break
                except queue.Full:
                    if abort.is_set() and "sink" in failures:
                        break  # consumer gone; queue drained by the caller

    scale = np.array([EYE_CLOSURE_CAP_MS, YAWN_SATURATION_MS], dtype=np.float64)

    def consume() -> None:
        window_buf: deque[BehaviorSample] = deque(maxlen=config.window_len)
        bstate = BaselineState()
        lstm_alarm = False
        index = 0
        try:
            while True:
                item = work.get()
                if item is _DONE:
                    return
                sample, enqueued_ns = item
                dequeued_ns = time.perf_counter_ns()
                summary.samples_consumed += 1
                window_buf.append(sample)
                bstate, baseline_alarm = baseline_step(bstate, sample)
                probability = None
                infer_start = time.perf_counter_ns()
                if (
                    len(window_buf) == config.window_len
                    and (index - (config.window_len - 1)) % config.stride == 0
                ):
                    x = np.array(
                        [(s.eye_closure_ms, s.since_yawn_ms) for s in window_buf],
                        dtype=np.float64,
                    )
                    x /= scale
                    probability = forward(model, x)
                    lstm_alarm = probability >= config.probability_threshold
                infer_us = (time.perf_counter_ns() - infer_start) // 1000
                event = DrowsinessEvent(
                    sample=sample,
                    lstm_probability=probability,
                    lstm_alarm=lstm_alarm if warmed_up(index, config.window_len) else False,
                    baseline_alarm=baseline_alarm,
                    queue_latency_us=(dequeued_ns - enqueued_ns) // 1000,
                    infer_latency_us=infer_us,
                )
                sink(event)
                summary.events_emitted += 1
                index += 1
        except BaseException as exc:
            failures.setdefault("sink", exc)
            abort.set()

    producer = threading.Thread(target=produce, name="drowsewatch-producer")
    consumer = threading.Thread(target=consume, name="drowsewatch-consumer")
    producer.start()
    consumer.start()
    producer.join()
    consumer.join()
    # Account for anything left in the queue after an abort.
    while True:
        try:
            if work.get_nowait() is not _DONE:
                summary.drained += 1
        except queue.Empty:
            break
    summary.wall_time_s = time.perf_counter() - start
    if summary.wall_time_s > 0:
        summary.samples_per_sec = summary.samples_consumed / summary.wall_time_s
    if failures:
        stage, exc = next(iter(failures.items()))
        raise PipelineError(f"{stage} failure: {exc}", summary) from exc
    logger.debug("run complete: %s", summary.to_json())
    return summary


def write_events_jsonl(path, events: Iterable[DrowsinessEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for event in events:
            fh.write(event.to_json() + "\n")
