"""Parsers at the detector boundary: detection logs, image annotations,
and the participant folder naming grammar.

Everything here is pure and stream-friendly; no image or video handling.
"""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator


class DetectionLabel(Enum):
    """Facial-state classes emitted by the upstream detector."""

    FACE = "face"
    OPENED_EYE = "opened_eye"
    CLOSED_EYE = "closed_eye"
    MOUTH = "mouth"
    YAWN = "yawn"
    EYEBROW = "eyebrow"

    @classmethod
    def parse(cls, name: str) -> "DetectionLabel":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown detection label {name!r}") from None


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box; min corner strictly inside max corner."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        for name in ("x_min", "y_min", "x_max", "y_max"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError(
                f"degenerate box ({self.x_min},{self.y_min})..({self.x_max},{self.y_max})"
            )


@dataclass(frozen=True)
class Detection:
    label: DetectionLabel
    box: BoundingBox
    confidence: float

    def __post_init__(self) -> None:
        conf = float(self.confidence)
        if not 0.0 <= conf <= 1.0:
            raise ValueError(f"confidence must be in [0,1], got {self.confidence!r}")
        object.__setattr__(self, "confidence", conf)


@dataclass(frozen=True)
class FrameDetection:
    """All labeled boxes found in one video frame."""

    timestamp_ms: int
    detections: tuple[Detection, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.timestamp_ms, int) or self.timestamp_ms < 0:
            raise ValueError(f"timestamp_ms must be a non-negative integer, got {self.timestamp_ms!r}")
        object.__setattr__(self, "detections", tuple(self.detections))

    def count(self, label: DetectionLabel) -> int:
        return sum(1 for d in self.detections if d.label is label)

    def has(self, label: DetectionLabel) -> bool:
        return any(d.label is label for d in self.detections)


class DetectionLogError(ValueError):
    """Problem in a detection log; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class RecordFormatError(DetectionLogError):
    """A single log line that does not parse as a frame record."""


class StreamOrderError(DetectionLogError):
    """Frame timestamps went backwards or repeated."""


def _iter_lines(source: bytes | str | Iterable[bytes | str]) -> Iterator[str]:
    if isinstance(source, bytes):
        yield from source.decode("utf-8").splitlines()
    elif isinstance(source, str):
        yield from source.splitlines()
    else:
        for raw in source:
            yield raw.decode("utf-8") if isinstance(raw, bytes) else raw


def _frame_from_record(record: object, line_no: int) -> FrameDetection:
    if not isinstance(record, dict) or set(record) != {"t", "d"}:
        raise RecordFormatError(line_no, 'record must be an object with keys "t" and "d"')
    t = record["t"]
    if not isinstance(t, int) or isinstance(t, bool):
        raise RecordFormatError(line_no, f'"t" must be an integer, got {t!r}')
    if not isinstance(record["d"], list):
        raise RecordFormatError(line_no, '"d" must be a list')
    detections = []
    for entry in record["d"]:
        if not (isinstance(entry, list) and len(entry) == 3):
            raise RecordFormatError(line_no, f"detection entry must be [label, box, confidence], got {entry!r}")
        label_name, box, conf = entry
        if not isinstance(label_name, str):
            raise RecordFormatError(line_no, f"label must be a string, got {label_name!r}")
        if not (isinstance(box, list) and len(box) == 4):
            raise RecordFormatError(line_no, f"box must be [x_min,y_min,x_max,y_max], got {box!r}")
        if not isinstance(conf, (int, float)) or isinstance(conf, bool):
            raise RecordFormatError(line_no, f"confidence must be a number, got {conf!r}")
        try:
            detections.append(Detection(DetectionLabel.parse(label_name), BoundingBox(*box), float(conf)))
        except ValueError as exc:
            raise RecordFormatError(line_no, str(exc)) from None
    try:
        return FrameDetection(t, tuple(detections))
    except ValueError as exc:
        raise RecordFormatError(line_no, str(exc)) from None


def parse_detection_log(source: bytes | str | Iterable[bytes | str]) -> Iterator[FrameDetection]:
    """Yield frames from a line-delimited detection log, in stream order.

    One record per line: ``{"t":<int ms>,"d":[[<label>,[x0,y0,x1,y1],<conf>],...]}``.
    Blank lines are ignored. Raises RecordFormatError for a malformed line and
    StreamOrderError when timestamps fail to strictly increase.
    """
    last_t: int | None = None
    for line_no, line in enumerate(_iter_lines(source), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordFormatError(line_no, f"invalid JSON: {exc.msg}") from None
        frame = _frame_from_record(record, line_no)
        if last_t is not None and frame.timestamp_ms <= last_t:
            raise StreamOrderError(
                line_no, f"timestamp {frame.timestamp_ms} not after previous {last_t}"
            )
        last_t = frame.timestamp_ms
        yield frame


def format_detection_record(frame: FrameDetection) -> str:
    """One log line for a frame (inverse of parse_detection_log, sans newline)."""
    entries = [
        [d.label.value, [d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max], d.confidence]
        for d in frame.detections
    ]
    return json.dumps({"t": frame.timestamp_ms, "d": entries}, separators=(",", ":"))


class AnnotationError(ValueError):
    """Malformed or out-of-vocabulary image annotation file."""


def _int_text(text: str, tag: str) -> int:
    try:
        value = float(text.strip())
    except ValueError:
        raise AnnotationError(f"<{tag}> is not a number: {text!r}") from None
    if not value.is_integer():
        raise AnnotationError(f"<{tag}> must be an integer pixel coordinate, got {text!r}")
    return int(value)


def parse_annotation_xml(text: str) -> list[tuple[DetectionLabel, BoundingBox]]:
    """Parse one per-image annotation file into (label, box) pairs, in file order.

    Expected layout: repeated ``<object><name>LABEL</name><bndbox><xmin/><ymin/>
    <xmax/><ymax/></bndbox></object>`` elements under any root.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise AnnotationError(f"malformed XML: {exc}") from None
    entries: list[tuple[DetectionLabel, BoundingBox]] = []
    for obj in root.iter("object"):
        name_el = obj.find("name")
        if name_el is None or name_el.text is None:
            raise AnnotationError("object element without a <name>")
        try:
            label = DetectionLabel.parse(name_el.text.strip())
        except ValueError as exc:
            raise AnnotationError(str(exc)) from None
        bndbox = obj.find("bndbox")
        if bndbox is None:
            raise AnnotationError(f"object {label.value!r} without a <bndbox>")
        coords = {}
        for tag in ("xmin", "ymin", "xmax", "ymax"):
            el = bndbox.find(tag)
            if el is None or el.text is None:
                raise AnnotationError(f"bndbox missing <{tag}>")
            coords[tag] = _int_text(el.text, tag)
        try:
            box = BoundingBox(coords["xmin"], coords["ymin"], coords["xmax"], coords["ymax"])
        except ValueError as exc:
            raise AnnotationError(str(exc)) from None
        entries.append((label, box))
    return entries


class Gender(Enum):
    FEMALE = "female"
    MALE = "male"


class Lighting(Enum):
    BRIGHT = "bright"
    DARK = "dark"


class ParticipantCodeError(ValueError):
    """String does not match the participant naming grammar."""


_CODE_RE = re.compile(r"^(F|M)(B|D)(G|Ng)([0-9]+)$")


@dataclass(frozen=True)
class ParticipantCode:
    """Decoded participant folder name, e.g. FBNg21 or MDG3."""

    gender: Gender
    lighting: Lighting
    glasses: bool
    index: int

    def __post_init__(self) -> None:
        if not isinstance(self.index, int) or self.index < 1:
            raise ValueError(f"participant index must be a positive integer, got {self.index!r}")

    def __str__(self) -> str:
        return format_participant_code(self)


def parse_participant_code(code: str) -> ParticipantCode:
    """Decode a participant folder name; raises ParticipantCodeError otherwise."""
    match = _CODE_RE.match(code)
    if match is None:
        raise ParticipantCodeError(f"invalid participant code {code!r}")
    gender = Gender.FEMALE if match.group(1) == "F" else Gender.MALE
    lighting = Lighting.BRIGHT if match.group(2) == "B" else Lighting.DARK
    glasses = match.group(3) == "G"
    index = int(match.group(4))
    if index < 1:
        raise ParticipantCodeError(f"participant index must be positive in {code!r}")
    return ParticipantCode(gender, lighting, glasses, index)


def format_participant_code(code: ParticipantCode) -> str:
    """Canonical string form; inverse of parse for canonical inputs."""
    return "".join(
        (
            "F" if code.gender is Gender.FEMALE else "M",
            "B" if code.lighting is Lighting.BRIGHT else "D",
            "G" if code.glasses else "Ng",
            str(code.index),
        )
    )
