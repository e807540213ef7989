import sys
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def raster_line(p0, p1, shape):
    """Integer pixels of the segment p0 -> p1 (dense sampling, rounded)."""
    n = int(np.ceil(np.hypot(p1[0] - p0[0], p1[1] - p0[1]))) * 4 + 1
    t = np.linspace(0.0, 1.0, n)
    u = np.rint(p0[0] + t * (p1[0] - p0[0])).astype(int)
    v = np.rint(p0[1] + t * (p1[1] - p0[1])).astype(int)
    mask = np.zeros(shape, dtype=bool)
    mask[v, u] = True
    return mask


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CHAIN_SPEC = {"seed": 3, "yaw_deg": -12, "pitch_deg": 20, "f": 360, "h": 9.0, "camera_id": "cam0",
              "n_clips": 6, "n_anchors": 8}
CHAIN_OUTPUTS = ("bundle/truth.json", "bundle/detections.jsonl", "bundle/manifest.json", "cams/cam0.cam.json",
                 "cams/cam0.reg.json", "groups.jsonl", "report.json", "store/metrics.log")


def run_chain(root, spec=CHAIN_SPEC, workers=2):
    """synth -> calibrate -> register -> groups -> batch through the CLI entry point."""
    import json
    from pathlib import Path

    from streetscope.cli import main

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "spec.json").write_text(json.dumps(spec))
    (root / "cams").mkdir(exist_ok=True)
    (root / "cfg.json").write_text(json.dumps({"workers": workers, "t_c": 0.7, "t_d": 6.0,
                                               "paths": {"cameras": "cams", "store": "store"}}))
    b = root / "bundle"
    assert main(["synth", "--spec", str(root / "spec.json"), "--out", str(b)]) == 0
    truth = json.loads((b / "truth.json").read_text())
    objs = [f"--height-object={o['bottom'][0]!r},{o['bottom'][1]!r},{o['top'][0]!r},{o['top'][1]!r},"
            f"{o['physical_height']!r}" for o in truth["height_objects"]]
    cam = root / "cams" / "cam0.cam.json"
    reg = root / "cams" / "cam0.reg.json"
    assert main(["calibrate", "--frames", str(b / "frames"), "--out", str(cam), "--camera-id", "cam0", *objs]) == 0
    assert main(["register", "--cam", str(cam), "--anchors", str(b / "anchors.json"), "--out", str(reg)]) == 0
    assert main(["groups", "--detections", str(b / "detections.jsonl"), "--cam", str(cam), "--reg", str(reg),
                 "--out", str(root / "groups.jsonl")]) == 0
    assert main(["batch", "--manifest", str(b / "manifest.json"), "--config", str(root / "cfg.json"),
                 "--out", str(root / "report.json")]) == 0
    return {name: (root / name).read_bytes() for name in CHAIN_OUTPUTS}


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is not None and acc.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acc.RESULTS:
            terminalreporter.write_line(line)
