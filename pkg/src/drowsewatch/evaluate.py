"""Window-level scoring and side-by-side comparison of the two classifiers.

Both methods are always driven from the same recorded sample stream so their
decisions are directly comparable; lead times are measured against the
ground-truth regime-switch timestamps.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .baseline import BaselineState, active_threshold, step as baseline_step
from .features import WINDOW_SAMPLES, BehaviorSample, Window
from .lstm import DEFAULT_ALARM_THRESHOLD, LstmModel, forward
from .simulate import Regime, label_window_majority

Predictor = Callable[[np.ndarray], float]


def _as_predictor(model: LstmModel | Predictor) -> Predictor:
    if isinstance(model, LstmModel):
        return lambda x: forward(model, x)
    if callable(model):
        return model
    raise TypeError(f"model must be an LstmModel or a callable, got {type(model)!r}")


@dataclass(frozen=True)
class MethodMetrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        predicted = self.tp + self.fp
        return self.tp / predicted if predicted else 0.0

    @property
    def recall(self) -> float:
        actual = self.tp + self.fn
        return self.tp / actual if actual else 0.0

    @property
    def f1(self) -> float:
        denom = self.precision + self.recall
        return 2 * self.precision * self.recall / denom if denom else 0.0


@dataclass(frozen=True)
class EpisodeLead:
    """First-alarm timing for one contiguous ground-truth drowsy episode.

    Alarm delays are first_alarm - onset in ms (negative means the method
    fired before the labeled onset); None when the method never fired during
    the episode.
    """

    onset_ms: int
    end_ms: int
    lstm_delay_ms: int | None
    baseline_delay_ms: int | None


@dataclass(eq=False)
class EvalReport:
    windows_scored: int
    lstm: MethodMetrics
    baseline: MethodMetrics
    episodes: list[EpisodeLead]

    def format_text(self) -> str:
        lines = [
            f"windows scored: {self.windows_scored}",
            "method    accuracy  precision  recall    f1        tp     fp     tn     fn",
        ]
        for name, m in (("lstm", self.lstm), ("baseline", self.baseline)):
            lines.append(
                f"{name:<9} {m.accuracy:<9.4f} {m.precision:<10.4f} {m.recall:<9.4f} "
                f"{m.f1:<9.4f} {m.tp:<6d} {m.fp:<6d} {m.tn:<6d} {m.fn:<6d}"
            )
        lines.append(f"drowsy episodes: {len(self.episodes)}")
        for k, ep in enumerate(self.episodes):
            lines.append(
                f"  episode {k}: onset={ep.onset_ms}ms"
                f" lstm_delay={_fmt_delay(ep.lstm_delay_ms)}"
                f" baseline_delay={_fmt_delay(ep.baseline_delay_ms)}"
            )
        return "\n".join(lines)


def _fmt_delay(delay: int | None) -> str:
    return "never" if delay is None else f"{delay}ms"


@dataclass(frozen=True)
class TraceRow:
    """One sample of the side-by-side comparison table."""

    t_ms: int
    eye_closure_ms: int
    since_yawn_ms: int
    lstm_probability: float | None
    lstm_alarm: bool
    baseline_alarm: bool
    divergence: bool
    early_warning: bool

    def to_tsv(self) -> str:
        prob = "" if self.lstm_probability is None else f"{self.lstm_probability:.6f}"
        return "\t".join(
            (
                str(self.t_ms),
                str(self.eye_closure_ms),
                str(self.since_yawn_ms),
                prob,
                str(int(self.lstm_alarm)),
                str(int(self.baseline_alarm)),
                str(int(self.divergence)),
                str(int(self.early_warning)),
            )
        )


TRACE_HEADER = "t_ms\tclosure_ms\tsince_yawn_ms\tlstm_p\tlstm_alarm\tbaseline_alarm\tdivergence\tearly_warning"


def compare_traces(
    model: LstmModel | Predictor,
    samples: Sequence[BehaviorSample],
    threshold: float = DEFAULT_ALARM_THRESHOLD,
    baseline: BaselineState | None = None,
) -> list[TraceRow]:
    """Run both classifiers over one stream, one row per sample.

    Rows flag divergence (the two alarms disagree once the window is full) and
    early warning (the window classifier alarms while the closure value is
    still below the baseline's active threshold).
    """
    samples = list(samples)
    predict = _as_predictor(model)
    bstate = baseline if baseline is not None else BaselineState()
    rows: list[TraceRow] = []
    buffer: deque[BehaviorSample] = deque(maxlen=WINDOW_SAMPLES)
    for sample in samples:
        buffer.append(sample)
        bstate, balarm = baseline_step(bstate, sample)
        probability = None
        lstm_alarm = False
        if len(buffer) == WINDOW_SAMPLES:
            window = Window(tuple(buffer))
            probability = predict(window.normalized())
            lstm_alarm = probability >= threshold
        divergence = probability is not None and lstm_alarm != balarm
        early = lstm_alarm and sample.eye_closure_ms < active_threshold(bstate, sample.t_ms)
        rows.append(
            TraceRow(
                t_ms=sample.t_ms,
                eye_closure_ms=sample.eye_closure_ms,
                since_yawn_ms=sample.since_yawn_ms,
                lstm_probability=probability,
                lstm_alarm=lstm_alarm,
                baseline_alarm=balarm,
                divergence=divergence,
                early_warning=early,
            )
        )
    return rows


def _episode_spans(truth: Sequence[Regime], samples: Sequence[BehaviorSample]) -> list[tuple[int, int]]:
    spans = []
    start = None
    for k, regime in enumerate(truth):
        if regime is Regime.DROWSY and start is None:
            start = k
        elif regime is not Regime.DROWSY and start is not None:
            spans.append((samples[start].t_ms, samples[k - 1].t_ms))
            start = None
    if start is not None:
        spans.append((samples[start].t_ms, samples[-1].t_ms))
    return spans


def _first_alarm_delay(
    rows: Sequence[TraceRow], onset_ms: int, end_ms: int, method: str
) -> int | None:
    for row in rows:
        if row.t_ms > end_ms:
            break
        fired = row.lstm_alarm if method == "lstm" else row.baseline_alarm
        if fired and row.t_ms >= onset_ms:
            return row.t_ms - onset_ms
    return None


def evaluate(
    model: LstmModel | Predictor,
    samples: Sequence[BehaviorSample],
    truth: Sequence[Regime],
    threshold: float = DEFAULT_ALARM_THRESHOLD,
) -> EvalReport:
    """Score both methods window-by-window against majority ground truth.

    The window classifier is scored on every full window (stride 1); the
    baseline's window decision is its alarm state at the window-end sample, so
    both methods see exactly the same inputs.
    """
    samples = list(samples)
    truth = list(truth)
    if not samples:
        raise ValueError("empty stream")
    if len(truth) != len(samples):
        raise ValueError(f"ground truth length {len(truth)} != sample count {len(samples)}")
    rows = compare_traces(model, samples, threshold)
    counts = {"lstm": [0, 0, 0, 0], "baseline": [0, 0, 0, 0]}  # tp, fp, tn, fn
    scored = max(0, len(samples) - WINDOW_SAMPLES + 1)
    if scored == 0:
        raise ValueError(f"stream of {len(samples)} samples is shorter than one window")
    for window_index in range(scored):
        end = window_index + WINDOW_SAMPLES - 1
        actual = label_window_majority(truth[window_index : window_index + WINDOW_SAMPLES])
        row = rows[end]
        for method, predicted in (("lstm", row.lstm_alarm), ("baseline", row.baseline_alarm)):
            slot = (0 if actual else 1) if predicted else (3 if actual else 2)
            counts[method][slot] += 1
    episodes = [
        EpisodeLead(
            onset_ms=onset,
            end_ms=end,
            lstm_delay_ms=_first_alarm_delay(rows, onset, end, "lstm"),
            baseline_delay_ms=_first_alarm_delay(rows, onset, end, "baseline"),
        )
        for onset, end in _episode_spans(truth, samples)
    ]
    return EvalReport(
        windows_scored=scored,
        lstm=MethodMetrics(*counts["lstm"]),
        baseline=MethodMetrics(*counts["baseline"]),
        episodes=episodes,
    )
