"""Clip processing and batch orchestration under the real-time budget.

A batch keeps pace with the cameras when its wall time does not exceed the
footage it covers. Clips run on a bounded process pool; results come back
in manifest order and are persisted by the parent alone, so the store has
a single writer and the output does not depend on the worker count.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from ..calibration import load_camera
from ..errors import StreetscopeError
from ..groups import GroupConfig, detect_groups, scene_metrics
from ..registration import load_registration
from ..stability import load_status
from .detections import format_timestamp, ingest_detections

CLIP_SECONDS = 10.0
STATUSES = ("processed", "rejected_unstable", "rejected_uncalibrated", "failed")


@dataclass(frozen=True)
class BatchConfig:
    workers: int | None = None
    t_c: float = 0.7
    t_d: float = 6.0
    penalty: float | None = None
    camera_dir: str | None = None      # holds <id>.cam.json, <id>.reg.json, <id>.stability.json
    store_dir: str | None = None
    clip_seconds: float = CLIP_SECONDS

    @property
    def group_config(self) -> GroupConfig:
        return GroupConfig(self.t_c, self.t_d)

    @classmethod
    def from_file(cls, path):
        """Read ``{workers, t_c, t_d, penalty, paths: {cameras, store}}``."""
        path = Path(path)
        d = json.loads(path.read_text())
        paths = d.get("paths", {}) or {}

        def resolve(p):
            return None if p is None else str((path.parent / p).resolve())

        return cls(workers=d.get("workers"), t_c=float(d.get("t_c", 0.7)), t_d=float(d.get("t_d", 6.0)),
                   penalty=d.get("penalty"), camera_dir=resolve(paths.get("cameras")),
                   store_dir=resolve(paths.get("store")),
                   clip_seconds=float(d.get("clip_seconds", CLIP_SECONDS)))


@dataclass(frozen=True)
class ClipResult:
    clip_id: str
    camera_id: str
    status: str
    record: dict | None = None          # scene metrics record when processed
    reason: str | None = None
    processing_duration: float = 0.0
    footage_seconds: float = CLIP_SECONDS
    frames: tuple = field(default=(), repr=False)

    def to_dict(self, timing: bool = False) -> dict:
        d = {"clip_id": self.clip_id, "camera_id": self.camera_id, "status": self.status,
             "reason": self.reason, "metrics": self.record, "footage_seconds": self.footage_seconds}
        if timing:
            d["processing_duration"] = self.processing_duration
        return d


@dataclass(frozen=True)
class BatchReport:
    batch_size: int
    footage_seconds: float
    wall_seconds: float
    counts: dict
    results: tuple = field(default=(), repr=False)

    @property
    def budget_exceeded(self) -> bool:
        return self.wall_seconds > self.footage_seconds

    def to_dict(self, timing: bool = False) -> dict:
        """Report as JSON data; wall-clock fields only with ``timing=True``."""
        d = {"batch_size": self.batch_size, "footage_seconds": self.footage_seconds,
             "counts": dict(self.counts), "clips": [r.to_dict(timing) for r in self.results]}
        if timing:
            d["wall_seconds"] = self.wall_seconds
            d["budget_exceeded"] = self.budget_exceeded
        return d


def clip_record(frames, metrics) -> dict:
    """Store record summarising one processed clip."""
    first = frames[0]
    return {
        "camera_id": first.camera_id,
        "clip_id": first.clip_id,
        "timestamp": format_timestamp(first.timestamp),
        "frames": len(frames),
        "people": sum(fg.i_n for fg in metrics.frames),
        "max_groups_per_frame": metrics.max_groups_per_frame,
        "min_group_distance": metrics.min_group_distance,
        "mean_group_distance": metrics.mean_group_distance,
    }


def process_clip(frames, cam, reg, config: GroupConfig | None = None, stability=None,
                 store=None, footage_seconds: float = CLIP_SECONDS) -> ClipResult:
    """Groups and scene metrics for one clip, or the reason it was skipped.

    Never raises for data problems: they become a ``failed`` result.
    """
    t0 = time.perf_counter()
    clip_id = camera_id = ""
    try:
        frames = list(frames)
        if not frames:
            raise StreetscopeError("clip has no frames")
        clip_id, camera_id = frames[0].clip_id, frames[0].camera_id
        if cam is None or reg is None:
            return ClipResult(clip_id, camera_id, "rejected_uncalibrated", reason="camera has no calibration "
                              "or registration", processing_duration=time.perf_counter() - t0,
                              footage_seconds=footage_seconds)
        if stability is not None and stability.is_unstable(frames[0].timestamp):
            return ClipResult(clip_id, camera_id, "rejected_unstable",
                              reason=f"camera state {stability.state} at clip time",
                              processing_duration=time.perf_counter() - t0, footage_seconds=footage_seconds)
        per_frame = tuple(detect_groups(f, cam, reg, config) for f in frames)
        metrics = scene_metrics(per_frame)
        record = clip_record(frames, metrics)
        if store is not None:
            store.append(record)
        return ClipResult(clip_id, camera_id, "processed", record,
                          processing_duration=time.perf_counter() - t0,
                          footage_seconds=footage_seconds, frames=per_frame)
    except (StreetscopeError, OSError, ValueError) as exc:
        return ClipResult(clip_id, camera_id, "failed", reason=f"{type(exc).__name__}: {exc}",
                          processing_duration=time.perf_counter() - t0, footage_seconds=footage_seconds)


@lru_cache(maxsize=256)
def _camera_assets(camera_dir: str | None, camera_id: str):
    if camera_dir is None:
        return None, None, None
    base = Path(camera_dir)
    cam_p, reg_p, st_p = (base / f"{camera_id}.{kind}.json" for kind in ("cam", "reg", "stability"))
    cam = load_camera(cam_p) if cam_p.is_file() else None
    reg = load_registration(reg_p) if reg_p.is_file() else None
    status = load_status(st_p) if st_p.is_file() else None
    return cam, reg, status


def process_clip_file(path, config: BatchConfig, footage_seconds: float) -> ClipResult:
    """Load a clip's detections and its camera assets, then process it."""
    try:
        frames = list(ingest_detections(path))
        if not frames:
            raise StreetscopeError("clip has no frames")
        cam, reg, status = _camera_assets(config.camera_dir, frames[0].camera_id)
    except (StreetscopeError, OSError, ValueError) as exc:
        return ClipResult(Path(path).stem, "", "failed", reason=f"{type(exc).__name__}: {exc}",
                          footage_seconds=footage_seconds)
    return process_clip(frames, cam, reg, config.group_config, status, footage_seconds=footage_seconds)


def _entries(manifest, config):
    out = []
    for item in manifest:
        if isinstance(item, dict):
            out.append((str(item["path"]), float(item.get("duration_s", config.clip_seconds))))
        else:
            out.append((str(item), config.clip_seconds))
    return out


def _run_one(args):
    processor, path, config, seconds = args
    try:
        return processor(path, config, seconds)
    except Exception as exc:  # a worker bug must not take the batch down
        return ClipResult(Path(path).stem, "", "failed", reason=f"{type(exc).__name__}: {exc}",
                          footage_seconds=seconds)


def run_batch(manifest, config: BatchConfig | None = None, processor=process_clip_file,
              store=None) -> BatchReport:
    """Process every clip of ``manifest`` on a bounded worker pool.

    ``manifest`` items are paths or ``{"path", "duration_s"}`` mappings.
    ``processor(path, config, seconds) -> ClipResult`` is injectable (it
    must be picklable for more than one worker). Processed records are
    appended to ``store`` in manifest order.
    """
    config = config or BatchConfig()
    entries = _entries(manifest, config)
    if not entries:
        raise ValueError("manifest is empty")
    workers = config.workers or os.cpu_count() or 1
    jobs = [(processor, p, config, s) for p, s in entries]
    t0 = time.perf_counter()
    if workers == 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            chunk = max(1, len(jobs) // (4 * workers))
            results = list(pool.map(_run_one, jobs, chunksize=chunk))
    if store is not None:
        for r in results:
            if r.status == "processed" and r.record is not None:
                store.append(r.record)
        # publish the stability status each camera was judged against
        for cam_id in sorted({r.camera_id for r in results if r.camera_id}):
            status = _camera_assets(config.camera_dir, cam_id)[2]
            if status is not None:
                store.put_stability(status.to_dict())
    wall = time.perf_counter() - t0
    counts = {s: 0 for s in STATUSES}
    for r in results:
        counts[r.status] += 1
    return BatchReport(len(results), float(sum(s for _, s in entries)), wall, counts, tuple(results))


def read_manifest(path) -> list:
    """Manifest file: JSON array, or one clip path per line (``#`` comments).

    Relative paths are taken relative to the manifest's directory.
    """
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("["):
        items = json.loads(text)
    else:
        items = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]

    def fix(p):
        p = Path(p)
        return str(p if p.is_absolute() else path.parent / p)

    out = []
    for it in items:
        if isinstance(it, dict):
            out.append({**it, "path": fix(it["path"])})
        else:
            out.append(fix(it))
    return out
