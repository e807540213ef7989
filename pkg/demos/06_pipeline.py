"""
Batch processing, storage and the REST service
==============================================

A synthetic camera produces 100 ten-second clips. The batch runner
processes them on a worker pool, checks the real-time budget, appends
scene metrics to the on-disk store, and the JSON service answers queries
over HTTP.
"""

import json
import tempfile
import urllib.request
from pathlib import Path

from streetscope import synth
from streetscope.calibration import build_camera, save_camera
from streetscope.pipeline import BatchConfig, MetricsStore, read_manifest, run_batch, serve_metrics
from streetscope.registration import RegistrationTransform, save_registration

work = Path(tempfile.mkdtemp(prefix="streetscope-demo-"))
spec = {"seed": 3, "yaw_deg": -12, "pitch_deg": 20, "f": 360, "h": 9.0, "camera_id": "cam0",
        "n_clips": 100, "n_frames": 1}
synth.write_bundle(spec, work / "bundle")

# the digital twin of the camera: calibration and registration
scene = synth.make_scene(seed=3, yaw_deg=-12, pitch_deg=20, f=360, h=9.0)
(work / "cams").mkdir()
save_camera(work / "cams" / "cam0.cam.json", build_camera(scene.dims, *scene.vanishing_points(), scene.h))
save_registration(work / "cams" / "cam0.reg.json",
                  RegistrationTransform(*scene.registration_A.ravel(), *scene.registration_t))

store = MetricsStore(work / "store")
config = BatchConfig(workers=4, camera_dir=str(work / "cams"))
report = run_batch(read_manifest(work / "bundle" / "manifest.json"), config, store=store)
print(f"{report.batch_size} clips, {report.footage_seconds:.0f} s of footage in {report.wall_seconds:.2f} s")
print("counts:", report.counts, "| budget exceeded:", report.budget_exceeded)

server = serve_metrics(store, "127.0.0.1", 0, background=True)
base = f"http://127.0.0.1:{server.server_address[1]}"
with urllib.request.urlopen(base + "/cameras") as r:
    print("GET /cameras ->", json.loads(r.read()))
url = base + "/cameras/cam0/metrics?from=2020-04-01T12:00:00Z&to=2020-04-01T12:30:00Z"
with urllib.request.urlopen(url) as r:
    rows = json.loads(r.read())
print(f"GET metrics for the first half hour -> {len(rows)} records")
print("first:", json.dumps(rows[0], sort_keys=True))
server.shutdown()
print("store written to", store.path)
