"""Detector-agnostic drowsiness engine.

Turns per-frame facial-state detections into a two-dimensional temporal
behavior signal (eye-closure duration, time since last yawn), classifies 5 s
sliding windows with a from-scratch LSTM, and runs that side by side with a
threshold-only baseline inside a two-stage streaming pipeline.
"""

__version__ = "0.1.0"

from .baseline import BaselineState, active_threshold
from .baseline import step as baseline_step
from .features import (
    EYE_CLOSURE_CAP_MS,
    SAMPLE_PERIOD_MS,
    WINDOW_SAMPLES,
    YAWN_SATURATION_MS,
    BehaviorSample,
    ExtractorState,
    Window,
    export_series,
    extract_samples,
    import_series,
    sample,
    update,
    windows,
)
from .ingest import (
    BoundingBox,
    Detection,
    DetectionLabel,
    FrameDetection,
    ParticipantCode,
    format_participant_code,
    parse_annotation_xml,
    parse_detection_log,
    parse_participant_code,
)
from .lstm import (
    LabeledSequence,
    LstmModel,
    TrainConfig,
    TrainResult,
    backward,
    classify,
    forward,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .evaluate import EvalReport, compare_traces, evaluate
from .pipeline import DrowsinessEvent, PipelineConfig, PipelineError, RunSummary, run
from .simulate import Regime, RegimeParams, Scenario, Segment, generate_frames, generate_training_set
