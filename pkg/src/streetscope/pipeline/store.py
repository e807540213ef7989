"""Append-only metrics store.

Records live in one log file as ``length | crc32 | JSON`` frames. Each
append is a single ``write`` of a complete frame followed by a flush and
fsync, so a crash leaves at worst a truncated tail, which readers ignore.
An in-memory index per camera is rebuilt on open and topped up from the
file whenever it has grown.
"""

from __future__ import annotations

import bisect
import json
import os
import struct
import threading
import zlib
from datetime import datetime
from pathlib import Path

from ..errors import CorruptRecord, SchemaError
from .detections import format_timestamp, parse_timestamp

ENV_DATA_DIR = "STREETSCOPE_DATA_DIR"
LOG_NAME = "metrics.log"
STABILITY_DIR = "stability"

_HEADER = struct.Struct("<II")
_MAX_RECORD = 64 << 20


def default_root() -> Path:
    """Store root from ``STREETSCOPE_DATA_DIR`` or ``./streetscope-data``."""
    return Path(os.environ.get(ENV_DATA_DIR) or "streetscope-data")


def _validate(record) -> datetime:
    if not isinstance(record, dict):
        raise SchemaError("store record must be a JSON object")
    if not isinstance(record.get("camera_id"), str) or not record["camera_id"]:
        raise SchemaError("store record needs a non-empty camera_id")
    try:
        return parse_timestamp(record.get("timestamp"))
    except ValueError as exc:
        raise SchemaError(f"store record timestamp: {exc}") from exc


class MetricsStore:
    """Single-writer, many-reader record log keyed by camera and time."""

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else default_root()
        self.root.mkdir(parents=True, exist_ok=True)
        self.path = self.root / LOG_NAME
        self.path.touch(exist_ok=True)
        self._lock = threading.RLock()
        self._offset = 0
        self._seq = 0
        self._index = {}            # camera_id -> sorted [(timestamp, seq, record)]
        self.corrupt = 0
        self.refresh()

    # ---- reading
    def refresh(self) -> None:
        """Index any records appended to the file since the last read."""
        with self._lock, open(self.path, "rb") as fh:
            fh.seek(self._offset)
            data = fh.read()
            pos = 0
            while pos + _HEADER.size <= len(data):
                length, crc = _HEADER.unpack_from(data, pos)
                end = pos + _HEADER.size + length
                if length > _MAX_RECORD:
                    # a garbled length field makes the rest unreadable
                    self.corrupt += 1
                    pos = len(data)
                    break
                if end > len(data):
                    break           # incomplete tail; a writer may still be busy
                body = data[pos + _HEADER.size:end]
                pos = end
                try:
                    if zlib.crc32(body) != crc:
                        raise CorruptRecord("checksum mismatch")
                    record = json.loads(body.decode("utf-8"))
                    ts = _validate(record)
                except (CorruptRecord, SchemaError, ValueError, UnicodeDecodeError):
                    self.corrupt += 1
                    continue
                self._insert(record, ts)
            self._offset += pos

    def _insert(self, record, ts):
        rows = self._index.setdefault(record["camera_id"], [])
        bisect.insort(rows, (ts, self._seq, record))
        self._seq += 1

    def cameras(self) -> list:
        with self._lock:
            return sorted(self._index)

    def query(self, camera_id: str, start=None, end=None) -> list:
        """Records of ``camera_id`` with ``start <= timestamp <= end``, in time order."""
        start = _coerce(start)
        end = _coerce(end)
        if start is not None and end is not None and start > end:
            raise ValueError("query window start is after its end")
        self.refresh()
        with self._lock:
            rows = self._index.get(camera_id, [])
            keys = [r[0] for r in rows]
            lo = 0 if start is None else bisect.bisect_left(keys, start)
            hi = len(rows) if end is None else bisect.bisect_right(keys, end)
            return [r[2] for r in rows[lo:hi]]

    # ---- writing
    def append(self, record: dict) -> None:
        ts = _validate(record)
        body = json.dumps(record, sort_keys=True, separators=(",", ":")).encode("utf-8")
        frame = _HEADER.pack(len(body), zlib.crc32(body)) + body
        with self._lock:
            self.refresh()
            with open(self.path, "ab") as fh:
                fh.write(frame)
                fh.flush()
                os.fsync(fh.fileno())
            self._offset += len(frame)
            self._insert(json.loads(body), ts)

    # ---- stability snapshots
    def put_stability(self, status_dict: dict) -> None:
        """Replace a camera's stability status (write-then-rename)."""
        d = self.root / STABILITY_DIR
        d.mkdir(exist_ok=True)
        cam = status_dict["camera_id"]
        tmp = d / f".{cam}.json.tmp"
        tmp.write_text(json.dumps(status_dict, sort_keys=True, indent=2) + "\n")
        os.replace(tmp, d / f"{cam}.json")

    def get_stability(self, camera_id: str):
        p = self.root / STABILITY_DIR / f"{camera_id}.json"
        if not p.is_file():
            return None
        return json.loads(p.read_text())

    def stability_cameras(self) -> list:
        d = self.root / STABILITY_DIR
        if not d.is_dir():
            return []
        return sorted(p.stem for p in d.glob("*.json"))


def _coerce(t):
    if t is None or isinstance(t, datetime):
        if isinstance(t, datetime) and t.tzinfo is None:
            raise ValueError("naive datetime in query bounds")
        return t
    return parse_timestamp(t)


def store_append(record: dict, root=None) -> None:
    MetricsStore(root).append(record)


def store_query(camera_id: str, start=None, end=None, root=None) -> list:
    return MetricsStore(root).query(camera_id, start, end)


__all__ = ["MetricsStore", "store_append", "store_query", "default_root", "format_timestamp"]
