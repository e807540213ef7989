"""Detection ingestion, clip/batch orchestration, persistence and the REST service."""

from .batch import BatchConfig, BatchReport, ClipResult, process_clip, read_manifest, run_batch
from .detections import CLASSES, Detection, FrameDetections, ingest_detections, write_detections
from .service import serve_metrics
from .store import MetricsStore, store_append, store_query

__all__ = [
    "BatchConfig", "BatchReport", "ClipResult", "process_clip", "read_manifest", "run_batch",
    "CLASSES", "Detection", "FrameDetections", "ingest_detections", "write_detections",
    "MetricsStore", "store_append", "store_query", "serve_metrics",
]
