"""Detector output records and their JSON Lines form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from ..errors import SchemaError

CLASSES = ("person", "car", "bus", "motorbike", "bicycle", "truck")


@dataclass(frozen=True)
class Detection:
    cls: str
    confidence: float
    bbox: tuple         # (x, y, w, h) pixels, (x, y) the top-left corner

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise SchemaError(f"unknown class {self.cls!r}")
        if not (isinstance(self.confidence, (int, float)) and 0.0 <= self.confidence <= 1.0):
            raise SchemaError(f"confidence {self.confidence!r} outside [0, 1]")
        if len(self.bbox) != 4 or not all(math.isfinite(v) for v in self.bbox):
            raise SchemaError(f"malformed bbox {self.bbox!r}")
        if not (self.bbox[2] > 0 and self.bbox[3] > 0):
            raise SchemaError(f"bbox needs positive width and height, got {self.bbox!r}")

    def to_dict(self) -> dict:
        return {"class": self.cls, "confidence": self.confidence, "bbox": list(self.bbox)}


@dataclass(frozen=True)
class FrameDetections:
    camera_id: str
    clip_id: str
    frame_index: int
    timestamp: datetime
    detections: tuple = ()

    def to_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "clip_id": self.clip_id,
            "frame_index": self.frame_index,
            "timestamp": format_timestamp(self.timestamp),
            "detections": [d.to_dict() for d in self.detections],
        }


def format_timestamp(ts: datetime) -> str:
    """RFC 3339 in UTC with a ``Z`` suffix; microseconds only when present."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    spec = "microseconds" if ts.microsecond else "seconds"
    return ts.replace(tzinfo=None).isoformat(timespec=spec) + "Z"


def parse_timestamp(text: str) -> datetime:
    """RFC 3339 timestamp (``Z`` or numeric offset) as an aware UTC datetime."""
    if not isinstance(text, str):
        raise ValueError(f"timestamp must be a string, got {text!r}")
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    if "T" not in s and "t" not in s and " " not in s:
        raise ValueError(f"not an RFC 3339 date-time: {text!r}")
    ts = datetime.fromisoformat(s.replace("t", "T"))
    if ts.tzinfo is None:
        raise ValueError(f"timestamp lacks a UTC offset: {text!r}")
    return ts.astimezone(timezone.utc)


def _frame_from_dict(rec) -> FrameDetections:
    if not isinstance(rec, dict):
        raise SchemaError("record is not a JSON object")
    missing = {"camera_id", "clip_id", "frame_index", "timestamp", "detections"} - rec.keys()
    if missing:
        raise SchemaError(f"missing fields {sorted(missing)}")
    if not isinstance(rec["camera_id"], str) or not isinstance(rec["clip_id"], str):
        raise SchemaError("camera_id and clip_id must be strings")
    idx = rec["frame_index"]
    if isinstance(idx, bool) or not isinstance(idx, int) or idx < 0:
        raise SchemaError(f"frame_index must be a non-negative integer, got {idx!r}")
    try:
        ts = parse_timestamp(rec["timestamp"])
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    if not isinstance(rec["detections"], list):
        raise SchemaError("detections must be an array")
    dets = []
    for d in rec["detections"]:
        if not isinstance(d, dict) or {"class", "confidence", "bbox"} - d.keys():
            raise SchemaError("detection needs class, confidence and bbox")
        bbox = d["bbox"]
        if not isinstance(bbox, list) or len(bbox) != 4 or \
                not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox):
            raise SchemaError(f"malformed bbox {bbox!r}")
        conf = d["confidence"]
        if isinstance(conf, bool) or not isinstance(conf, (int, float)):
            raise SchemaError(f"confidence must be a number, got {conf!r}")
        dets.append(Detection(d["class"], conf, tuple(bbox)))
    return FrameDetections(rec["camera_id"], rec["clip_id"], idx, ts, tuple(dets))


def ingest_detections(path):
    """Stream ``FrameDetections`` from a JSON Lines file.

    Blank lines are skipped. Schema problems raise ``SchemaError`` naming
    the 1-based line; timestamps must not decrease within a clip.
    """
    last = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                frame = _frame_from_dict(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            except SchemaError as exc:
                raise SchemaError(exc.message, line=lineno) from exc
            prev = last.get(frame.clip_id)
            if prev is not None and frame.timestamp < prev:
                raise SchemaError("timestamps decrease within the clip", line=lineno)
            last[frame.clip_id] = frame.timestamp
            yield frame


def write_detections(path, frames) -> None:
    lines = [json.dumps(f.to_dict()) for f in frames]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
