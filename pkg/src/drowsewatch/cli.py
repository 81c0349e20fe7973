"""Operator entry point: simulate | extract | train | run | eval | compare.

Every command is seeded, writes its outputs plus a manifest.json into
--out-dir, and exits 0 on success, 1 on usage errors, 2 on data errors, 3 on
internal failures. Option precedence: command line > --config file (key=value
lines) > built-in defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
import traceback
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from . import __version__
from .evaluate import TRACE_HEADER, compare_traces, evaluate
from .features import export_series, extract_samples
from .ingest import format_detection_record, parse_detection_log
from .lstm import TrainConfig, load_checkpoint, save_checkpoint, train
from .pipeline import PipelineConfig, PipelineError, run as run_pipeline
from .simulate import (
    Regime,
    RegimeParams,
    Scenario,
    Segment,
    generate_frames,
    generate_training_set,
)

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad command line or config file; exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


_DEFAULTS: dict[str, dict] = {
    "simulate": {"segments": "alert:30,drowsy:30", "fps": 30},
    "extract": {},
    "train": {
        "scenarios": 200,
        "epochs": 100,
        "batch_size": 64,
        "learning_rate": 0.05,
        "hidden_dim": 16,
        "scenario_s": 60,
        "window_stride": 5,
    },
    "run": {"threshold": 0.5, "realtime": False, "queue_capacity": 256},
    "eval": {"threshold": 0.5},
    "compare": {"threshold": 0.5},
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="drowsewatch", description=__doc__)
    parser.add_argument("--version", action="version", version=f"drowsewatch {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    common.add_argument("--config", type=Path, default=None, help="key=value config file")
    common.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic detection log")
    p.add_argument("--segments", default=None, help='timeline, e.g. "alert:30,drowsy:30" (seconds)')
    p.add_argument("--fps", type=int, default=None)

    p = sub.add_parser("extract", parents=[common], help="detection log -> two-column series")
    p.add_argument("--log", type=Path, required=True)

    p = sub.add_parser("train", parents=[common], help="train the window classifier on simulated data")
    p.add_argument("--scenarios", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--scenario-s", type=int, default=None)
    p.add_argument("--window-stride", type=int, default=None)

    p = sub.add_parser("run", parents=[common], help="replay a log through the two-stage pipeline")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--realtime", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--queue-capacity", type=int, default=None)

    p = sub.add_parser("eval", parents=[common], help="score both methods against ground truth")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("compare", parents=[common], help="side-by-side alarm trace for one stream")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=None)
    return parser


def _load_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(raw: str, like) -> object:
    if isinstance(like, bool):
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"expected boolean, got {raw!r}")
    for kind in (int, float):
        if isinstance(like, kind):
            try:
                return kind(raw)
            except ValueError:
                raise UsageError(f"expected {kind.__name__}, got {raw!r}") from None
    return raw


def _merge_options(args: argparse.Namespace) -> dict:
    """Built-in defaults, overlaid by the config file, overlaid by explicit flags."""
    options = dict(_DEFAULTS[args.command])
    options["seed"] = 0
    if args.config is not None:
        if not args.config.is_file():
            raise UsageError(f"config file not found: {args.config}")
        for key, raw in _load_config_file(args.config).items():
            if key not in options:
                raise UsageError(f"unknown config key {key!r} for command {args.command!r}")
            options[key] = _coerce(raw, options[key])
    for key, default in list(options.items()):
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            options[key] = flag_value
    return options


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    out_dir: Path,
    command: str,
    options: dict,
    inputs: dict[str, Path],
    outputs: dict[str, Path],
    started: float,
    extra: dict | None = None,
) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "argv": sys.argv[1:],
        "options": {k: (str(v) if isinstance(v, Path) else v) for k, v in options.items()},
        "seed": options.get("seed"),
        "inputs": {name: str(p) for name, p in inputs.items()},
        "outputs": {
            name: {"path": str(p), "sha256": _sha256(p), "bytes": p.stat().st_size}
            for name, p in outputs.items()
        },
        "started_utc": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "elapsed_s": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _parse_segments(spec: str) -> Scenario:
    segments = []
    for part in spec.split(","):
        name, _, seconds = part.strip().partition(":")
        try:
            regime = Regime(name.strip())
        except ValueError:
            raise UsageError(f"unknown regime {name!r} in --segments") from None
        try:
            duration = float(seconds)
        except ValueError:
            raise UsageError(f"bad duration {seconds!r} in --segments") from None
        if duration <= 0:
            raise UsageError(f"segment duration must be positive, got {seconds!r}")
        segments.append(Segment(regime, int(duration * 1000)))
    return Scenario(tuple(segments))


def _read_truth(path: Path) -> list[Regime]:
    labels = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            labels.append(Regime(line.strip()))
        except ValueError:
            raise ValueError(f"{path}:{line_no}: unknown regime label {line.strip()!r}") from None
    return labels


def _load_model(path: Path):
    return load_checkpoint(path.read_bytes())


def _read_log_samples(path: Path) -> list:
    with open(path, "rb") as fh:
        return list(extract_samples(parse_detection_log(fh)))


def cmd_simulate(options: dict, out_dir: Path) -> dict[str, Path]:
    scenario = _parse_segments(options["segments"])
    params = RegimeParams(seed=options["seed"])
    frames, truth = generate_frames(scenario, params, fps=options["fps"])
    log_path = out_dir / "detections.jsonl"
    with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
        for frame in frames:
            fh.write(format_detection_record(frame) + "\n")
    truth_path = out_dir / "truth.txt"
    with open(truth_path, "w", encoding="utf-8", newline="\n") as fh:
        for regime in truth:
            fh.write(regime.value + "\n")
    print(f"wrote {len(frames)} frames, {len(truth)} truth labels to {out_dir}")
    return {"detections": log_path, "truth": truth_path}


def cmd_extract(options: dict, out_dir: Path) -> dict[str, Path]:
    samples = _read_log_samples(options["log"])
    series_path = out_dir / "series.txt"
    with open(series_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(export_series(samples))
    print(f"wrote {len(samples)} samples to {series_path}")
    return {"series": series_path}


def cmd_train(options: dict, out_dir: Path) -> tuple[dict[str, Path], dict]:
    params = RegimeParams(seed=options["seed"])
    dataset = generate_training_set(
        options["scenarios"],
        params,
        scenario_ms=options["scenario_s"] * 1000,
        window_stride=options["window_stride"],
    )
    config = TrainConfig(
        epochs=options["epochs"],
        batch_size=options["batch_size"],
        learning_rate=options["learning_rate"],
        seed=options["seed"],
        hidden_dim=options["hidden_dim"],
    )
    logger.info(
        "training on %d windows (drowsy fraction %.3f)",
        len(dataset.sequences), dataset.drowsy_fraction,
    )
    result = train(dataset.sequences, config)
    checkpoint_path = out_dir / "checkpoint.bin"
    checkpoint_path.write_bytes(save_checkpoint(result.model))
    trace_path = out_dir / "loss_trace.txt"
    with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch train_loss val_loss val_accuracy\n")
        rows = zip(result.train_losses, result.val_losses, result.val_accuracies)
        for epoch, (train_loss, val_loss, val_acc) in enumerate(rows):
            fh.write(f"{epoch} {train_loss:.6f} {val_loss:.6f} {val_acc:.4f}\n")
    print(
        f"trained {options['epochs']} epochs on {len(dataset.sequences)} windows; "
        f"best epoch {result.best_epoch} val_accuracy {result.val_accuracy:.4f}"
    )
    extra = {
        "windows": len(dataset.sequences),
        "drowsy_fraction": round(dataset.drowsy_fraction, 4),
        "best_epoch": result.best_epoch,
        "val_accuracy": result.val_accuracy,
    }
    return {"checkpoint": checkpoint_path, "loss_trace": trace_path}, extra


def cmd_run(options: dict, out_dir: Path) -> tuple[dict[str, Path], dict]:
    model = _load_model(options["checkpoint"])
    config = PipelineConfig(
        probability_threshold=options["threshold"],
        realtime=options["realtime"],
        queue_capacity=options["queue_capacity"],
    )
    events_path = out_dir / "events.jsonl"
    with open(options["log"], "rb") as log_fh, open(
        events_path, "w", encoding="utf-8", newline="\n"
    ) as events_fh:
        summary = run_pipeline(
            config,
            parse_detection_log(log_fh),
            model,
            lambda event: events_fh.write(event.to_json() + "\n"),
        )
    print(summary.to_json())
    return {"events": events_path}, {"summary": json.loads(summary.to_json())}


def cmd_eval(options: dict, out_dir: Path) -> tuple[dict[str, Path], dict]:
    model = _load_model(options["checkpoint"])
    samples = _read_log_samples(options["log"])
    truth = _read_truth(options["truth"])
    report = evaluate(model, samples, truth, threshold=options["threshold"])
    report_path = out_dir / "report.txt"
    report_path.write_text(report.format_text() + "\n", encoding="utf-8")
    print(report.format_text())
    extra = {
        "lstm_accuracy": report.lstm.accuracy,
        "baseline_accuracy": report.baseline.accuracy,
        "windows_scored": report.windows_scored,
    }
    return {"report": report_path}, extra


def cmd_compare(options: dict, out_dir: Path) -> tuple[dict[str, Path], dict]:
    model = _load_model(options["checkpoint"])
    samples = _read_log_samples(options["log"])
    rows = compare_traces(model, samples, threshold=options["threshold"])
    trace_path = out_dir / "trace.tsv"
    with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRACE_HEADER + "\n")
        for row in rows:
            fh.write(row.to_tsv() + "\n")
    divergences = sum(row.divergence for row in rows)
    early = sum(row.early_warning for row in rows)
    print(f"{len(rows)} samples, {divergences} divergent, {early} early-warning flagged -> {trace_path}")
    return {"trace": trace_path}, {"divergences": divergences, "early_warnings": early}


def _dispatch(args: argparse.Namespace) -> int:
    options = _merge_options(args)
    out_dir: Path = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    inputs: dict[str, Path] = {}
    for name in ("log", "truth", "checkpoint"):
        path = getattr(args, name, None)
        if path is not None:
            if not path.is_file():
                raise ValueError(f"{name} file not found: {path}")
            inputs[name] = path
            options[name] = path
    extra: dict | None = None
    if args.command == "simulate":
        outputs = cmd_simulate(options, out_dir)
    elif args.command == "extract":
        outputs = cmd_extract(options, out_dir)
    elif args.command == "train":
        outputs, extra = cmd_train(options, out_dir)
    elif args.command == "run":
        outputs, extra = cmd_run(options, out_dir)
    elif args.command == "eval":
        outputs, extra = cmd_eval(options, out_dir)
    elif args.command == "compare":
        outputs, extra = cmd_compare(options, out_dir)
    else:  # pragma: no cover - argparse enforces the choices
        raise UsageError(f"unknown command {args.command!r}")
    _write_manifest(out_dir, args.command, options, inputs, outputs, started, extra)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        return _dispatch(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc.__cause__, (ValueError, OSError)) else 3
    except (ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
