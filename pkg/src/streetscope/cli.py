"""``streetscope`` command line.

Subcommands mirror the library stages: ``edges``, ``calibrate``,
``register``, ``stability``, ``groups``, ``batch``, ``serve`` and
``synth``. All outputs are JSON (or JSON Lines / PGM) written with sorted
keys so identical inputs give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import OrderedDict
from datetime import datetime
from pathlib import Path

from . import calibration, imaging, registration, stability
from .errors import StreetscopeError
from .groups import T_C, T_D, GroupConfig, detect_groups, metrics_jsonl, scene_metrics

log = logging.getLogger("streetscope")

_IMAGE_SUFFIXES = (".pgm", ".png")


def _frame_paths(directory) -> list:
    d = Path(directory)
    if not d.is_dir():
        raise StreetscopeError(f"not a directory: {d}")
    paths = sorted(p for p in d.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    if not paths:
        raise StreetscopeError(f"no .pgm/.png frames in {d}")
    return paths


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# subcommands

def cmd_edges(args) -> int:
    img = imaging.load_image(args.frame)
    low, high = args.low, args.high
    params = imaging.CannyParams(args.sigma, low, high)
    edges = imaging.canny(img, params)
    imaging.write_pgm(args.out, edges.to_image())
    print(f"{int(edges.edge.sum())} edge pixels -> {args.out}")
    return 0


def _parse_height_object(text: str) -> dict:
    try:
        bu, bv, tu, tv, hm = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected bottom_u,bottom_v,top_u,top_v,height_m") from None
    return {"bottom": (bu, bv), "top": (tu, tv), "physical_height": hm}


def cmd_calibrate(args) -> int:
    frames = [imaging.load_image(p) for p in _frame_paths(args.frames)]
    dims = (frames[0].width, frames[0].height)
    u0, v0, u1 = calibration.estimate_scene_vanishing_points(frames)
    if args.height_object:
        cam = calibration.build_camera(dims, u0, v0, u1, 1.0, camera_id=args.camera_id)
        h = calibration.estimate_height(cam, args.height_object)
    elif args.height is not None:
        h = args.height
    else:
        raise StreetscopeError("give --height-object (repeatable) or --height")
    cam = calibration.build_camera(dims, u0, v0, u1, h, camera_id=args.camera_id)
    calibration.save_camera(args.out, cam)
    print(f"u0={u0:.2f} v0={v0:.2f} u1={u1:.2f} f={cam.f:.2f} h={h:.3f} -> {args.out}")
    return 0


def cmd_register(args) -> int:
    cam = calibration.load_camera(args.cam)
    anchors = registration.load_anchors(args.anchors)
    reg = registration.fit_registration(anchors, cam)
    extra = {"camera_id": cam.camera_id,
             "pairwise_error": registration.pairwise_distance_error(anchors, reg, cam)}
    if args.validate:
        report = registration.leave_one_out([(anchors, cam)], seed=args.seed)
        extra["validation"] = report.to_dict()
        print(f"in-sample {report.in_sample_error:.4f} m, holdout {report.holdout_error:.4f} m")
    registration.save_registration(args.out, reg, extra)
    theta, *k = reg.decomposition()
    print(f"theta={theta:.6f} k={tuple(round(x, 6) for x in k)} -> {args.out}")
    return 0


def _stamped_frames(directory):
    out = []
    for p in _frame_paths(directory):
        ts = stability.timestamp_from_name(p.name)
        if ts is None:
            log.warning("skipping %s: no date in file name", p.name)
            continue
        if not stability._STAMP.search(p.name).group(2):
            ts = ts.replace(hour=12)     # date-only names count as the noon frame
        out.append((ts, imaging.load_image(p)))
    if not out:
        raise StreetscopeError("no dated frames (names need YYYY-MM-DD[THHMMSS])")
    return out


def cmd_stability(args) -> int:
    frames = _stamped_frames(args.frames)
    reference = stability.build_reference(frames, args.reference_window)
    usable = [(t, img) for t, img in frames if not stability.is_erroneous(img)]
    daily = stability.select_daily_frames(usable)
    series = stability.similarity_series(reference, daily, stability.SsimParams(args.window),
                                         camera_id=args.camera_id)
    cps = stability.pelt(series, penalty=args.penalty)
    rereferenced = [datetime.fromisoformat(d).date() for d in args.rereferenced]
    status = stability.classify_stability(series, cps, args.max_cp, args.max_std, rereferenced)
    stability.save_status(args.out, status)
    if args.series_out:
        Path(args.series_out).write_text(stability.series_to_csv(series))
    print(f"{len(series)} days, {len(cps)} change point(s), state {status.state} -> {args.out}")
    return 0


def cmd_groups(args) -> int:
    from .pipeline.detections import ingest_detections

    cam = calibration.load_camera(args.cam)
    reg = registration.load_registration(args.reg)
    config = GroupConfig(args.tc, args.td)
    clips = OrderedDict()
    for frame in ingest_detections(args.detections):
        clips.setdefault((frame.camera_id, frame.clip_id), []).append(frame)
    chunks = []
    for (camera_id, clip_id), frames in clips.items():
        per_frame = [detect_groups(f, cam, reg, config) for f in frames]
        chunks.append(metrics_jsonl(per_frame, scene_metrics(per_frame),
                                    {"camera_id": camera_id, "clip_id": clip_id}))
    Path(args.out).write_text("".join(chunks))
    print(f"{len(clips)} clip(s) -> {args.out}")
    return 0


def cmd_batch(args) -> int:
    from dataclasses import replace

    from .pipeline.batch import BatchConfig, read_manifest, run_batch
    from .pipeline.store import MetricsStore

    config = BatchConfig.from_file(args.config) if args.config else BatchConfig()
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    store = None if args.no_store else MetricsStore(config.store_dir)
    report = run_batch(read_manifest(args.manifest), config, store=store)
    if args.out:
        _write_json(args.out, report.to_dict(timing=args.timing))
    c = report.counts
    print(f"{report.batch_size} clips: {c['processed']} processed, {c['rejected_unstable']} unstable, "
          f"{c['rejected_uncalibrated']} uncalibrated, {c['failed']} failed", file=sys.stderr)
    print(f"wall {report.wall_seconds:.2f} s for {report.footage_seconds:.0f} s of footage"
          f"{' (BUDGET EXCEEDED)' if report.budget_exceeded else ''}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from .pipeline.service import serve_metrics
    from .pipeline.store import MetricsStore

    store = MetricsStore(args.data_dir)
    print(f"serving {store.root} on http://{args.host}:{args.port}", file=sys.stderr)
    try:
        serve_metrics(store, args.host, args.port)
    except KeyboardInterrupt:
        pass
    return 0


def cmd_synth(args) -> int:
    from .synth import write_bundle

    spec = json.loads(Path(args.spec).read_text())
    truth = write_bundle(spec, args.out)
    print(f"scene for {truth['camera_id']} -> {args.out}")
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="streetscope", description="Traffic-camera street metrics.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("edges", help="Canny edge map of one frame")
    s.add_argument("frame")
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--low", type=float, default=None)
    s.add_argument("--high", type=float, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_edges)

    s = sub.add_parser("calibrate", help="camera model from frames of a scene")
    s.add_argument("--frames", required=True, help="directory of .pgm/.png frames")
    s.add_argument("--out", required=True)
    s.add_argument("--height-object", type=_parse_height_object, action="append", default=[],
                   metavar="BU,BV,TU,TV,HEIGHT_M")
    s.add_argument("--height", type=float, default=None, help="known camera height in metres")
    s.add_argument("--camera-id", default="")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("register", help="affine world-plane to BNG fit from anchors")
    s.add_argument("--cam", required=True)
    s.add_argument("--anchors", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--validate", action="store_true", help="leave-one-out check")
    s.add_argument("--seed", type=int, default=registration.DEFAULT_SEED)
    s.set_defaults(func=cmd_register)

    s = sub.add_parser("stability", help="SSIM drift series and change points")
    s.add_argument("--frames", required=True, help="directory of frames named with YYYY-MM-DD[THHMMSS]")
    s.add_argument("--reference-window", type=int, default=stability.REFERENCE_DAYS)
    s.add_argument("--penalty", type=float, default=None)
    s.add_argument("--window", type=int, default=8, help="SSIM window side")
    s.add_argument("--max-cp", type=int, default=stability.MAX_CHANGE_POINTS)
    s.add_argument("--max-std", type=float, default=stability.MAX_DIFF_STD)
    s.add_argument("--rereferenced", action="append", default=[], metavar="YYYY-MM-DD")
    s.add_argument("--camera-id", default="")
    s.add_argument("--series-out", default=None, help="also write the SSIM series as CSV")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stability)

    s = sub.add_parser("groups", help="pedestrian groups and scene metrics for clips")
    s.add_argument("--detections", required=True)
    s.add_argument("--cam", required=True)
    s.add_argument("--reg", required=True)
    s.add_argument("--tc", type=float, default=T_C)
    s.add_argument("--td", type=float, default=T_D)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_groups)

    s = sub.add_parser("batch", help="process a manifest of clips")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", default=None, help="report JSON")
    s.add_argument("--timing", action="store_true", help="include wall-clock fields in the report")
    s.add_argument("--no-store", action="store_true")
    s.set_defaults(func=cmd_batch)

    s = sub.add_parser("serve", help="REST metrics service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8080)
    s.add_argument("--data-dir", default=None, help="store root (default $STREETSCOPE_DATA_DIR)")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("synth", help="write a synthetic scene bundle")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (StreetscopeError, OSError, ValueError) as exc:
        print(f"streetscope {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
