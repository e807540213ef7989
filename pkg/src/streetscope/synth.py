"""Synthetic cameras, line imagery and pedestrian detections with known truth.

Everything here is built from an explicit pinhole projection
``P = K R [I | -C]`` rather than from the four-parameter calibration, so
it serves as an independent oracle for the calibration, registration and
grouping code.

World frame: X along the road, Y across it, Z up. The camera sits at
``(0, 0, h)``; its optical axis points at azimuth ``45 deg + yaw`` from X
and is pitched down by ``pitch``. Keeping ``|yaw| < 45 deg`` puts both
ground axes in front of the camera.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import InvalidSpec
from .imaging import GrayImage, LineSegment

BNG_ORIGIN = (530000.0, 180000.0)
PERSON_HEIGHT_M = 1.7
BUS_HEIGHT_M = 4.95


@dataclass(frozen=True)
class SceneSpec:
    image_width: int = 352
    image_height: int = 288
    f: float = 350.0
    h: float = 9.6
    yaw_deg: float = -25.0
    pitch_deg: float = 20.0
    n_objects: int = 10
    seed: int = 0


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    spec: SceneSpec
    K: np.ndarray
    R: np.ndarray
    P: np.ndarray
    registration_A: np.ndarray
    registration_t: np.ndarray
    objects: list = field(default_factory=list)

    @property
    def f(self):
        return self.spec.f

    @property
    def h(self):
        return self.spec.h

    @property
    def seed(self):
        return self.spec.seed

    @property
    def dims(self):
        return (self.spec.image_width, self.spec.image_height)

    @property
    def ground_homography(self) -> np.ndarray:
        """Projection restricted to Z = 0 (columns X, Y, 1)."""
        return self.P[:, [0, 1, 3]]

    def vanishing_points(self):
        """(u0, v0, u1) from projecting the X and Y ground directions."""
        vx = self.P[:, 0]
        vy = self.P[:, 1]
        return (float(vx[0] / vx[2]), float(vx[1] / vx[2]), float(vy[0] / vy[2]))

    @property
    def horizon(self) -> float:
        return self.vanishing_points()[1]

    def project(self, xyz) -> np.ndarray:
        """World points ``(..., 3)`` to pixels ``(..., 2)``."""
        xyz = np.asarray(xyz, dtype=float)
        flat = xyz.reshape(-1, 3)
        hom = np.column_stack([flat, np.ones(len(flat))]) @ self.P.T
        if np.any(hom[:, 2] <= 0):
            raise InvalidSpec("point behind the synthetic camera")
        return (hom[:, :2] / hom[:, 2:]).reshape(xyz.shape[:-1] + (2,))

    def project_ground(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return self.project(np.concatenate([xy, np.zeros(xy.shape[:-1] + (1,))], axis=-1))

    def backproject_ground(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        flat = uv.reshape(-1, 2)
        hom = np.column_stack([flat, np.ones(len(flat))]) @ np.linalg.inv(self.ground_homography).T
        return (hom[:, :2] / hom[:, 2:]).reshape(uv.shape)

    def to_bng(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return xy @ self.registration_A.T + self.registration_t


def _rotation(yaw_deg: float, pitch_deg: float) -> np.ndarray:
    alpha = math.radians(45.0 + yaw_deg)
    phi = math.radians(pitch_deg)
    forward = np.array([math.cos(alpha), math.sin(alpha), 0.0])
    up = np.array([0.0, 0.0, 1.0])
    x_c = np.array([math.sin(alpha), -math.cos(alpha), 0.0])
    z_c = math.cos(phi) * forward - math.sin(phi) * up
    y_c = np.cross(z_c, x_c)
    return np.vstack([x_c, y_c, z_c])


def sample_ground_points(scene: SyntheticScene, n: int, rng, margin: float = 8.0,
                         horizon_gap: float = 30.0) -> np.ndarray:
    """Uniform pixel positions in the lower image, back-projected to the ground."""
    w, h = scene.dims
    top = max(scene.horizon + horizon_gap, margin)
    if top >= h - margin:
        raise InvalidSpec("no visible ground below the horizon")
    uv = np.column_stack([rng.uniform(margin, w - margin, n), rng.uniform(top, h - margin, n)])
    return scene.backproject_ground(uv)


def make_scene(spec: SceneSpec | dict | None = None, **overrides) -> SyntheticScene:
    """Build a seeded synthetic camera with anchors, buses and pedestrians."""
    if spec is None:
        spec = SceneSpec(**overrides)
    elif isinstance(spec, dict):
        spec = SceneSpec(**{**spec, **overrides})
    elif overrides:
        spec = SceneSpec(**{**spec.__dict__, **overrides})
    w, h = spec.image_width, spec.image_height
    if w < 16 or h < 16:
        raise InvalidSpec("image too small")
    if not (spec.f > 0 and spec.h > 0):
        raise InvalidSpec("focal length and height must be positive")
    if not abs(spec.yaw_deg) < 45.0:
        raise InvalidSpec("|yaw| must be below 45 degrees")
    if not 0.0 < spec.pitch_deg < 90.0:
        raise InvalidSpec("pitch must lie in (0, 90) degrees")
    K = np.array([[spec.f, 0.0, w / 2.0], [0.0, spec.f, h / 2.0], [0.0, 0.0, 1.0]])
    R = _rotation(spec.yaw_deg, spec.pitch_deg)
    C = np.array([0.0, 0.0, spec.h])
    P = K @ np.hstack([R, (-R @ C)[:, None]])
    v0 = h / 2.0 - spec.f * math.tan(math.radians(spec.pitch_deg))
    if v0 >= h - 16:
        raise InvalidSpec("horizon leaves no ground in view")

    rng = np.random.default_rng(spec.seed)
    theta = rng.uniform(0, 2 * math.pi)
    A = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    t = np.array(BNG_ORIGIN) + rng.uniform(-2000, 2000, 2)
    scene = SyntheticScene(spec, K, R, P, A, t)
    kinds = ["anchor", "bus", "pedestrian"]
    pos = sample_ground_points(scene, spec.n_objects, rng) if spec.n_objects else np.zeros((0, 2))
    for i, xy in enumerate(pos):
        kind = kinds[i % 3]
        height = {"anchor": 0.0, "bus": BUS_HEIGHT_M, "pedestrian": PERSON_HEIGHT_M}[kind]
        scene.objects.append({"kind": kind, "plane": (float(xy[0]), float(xy[1])),
                              "physical_height": height})
    return scene


# --------------------------------------------------------------------------
# line imagery

@dataclass(frozen=True)
class RenderedLine:
    segment: LineSegment          # projected centreline
    label: str                    # "edge" (parallel to X) or "perpendicular"
    polygon: np.ndarray           # rendered stripe outline in pixels, (4, 2)


def _clip_t_range(scene, origin, direction, band_top, margin):
    """Parameter interval where ground line ``origin + t*direction`` is visible."""
    w, h = scene.dims
    G = scene.ground_homography
    # homogeneous pixel is a + t*b; with positive depth every image bound
    # is a linear inequality in t
    a = G @ np.array([origin[0], origin[1], 1.0])
    b = G @ np.array([direction[0], direction[1], 0.0])
    lo, hi = -1e6, 1e6
    constraints = [
        (a[2] - 1e-6, b[2]),                                    # depth > 0
        (a[0] - margin * a[2], b[0] - margin * b[2]),           # u >= margin
        ((w - 1 - margin) * a[2] - a[0], (w - 1 - margin) * b[2] - b[0]),
        (a[1] - band_top * a[2], b[1] - band_top * b[2]),       # v >= band_top
        ((h - 1 - margin) * a[2] - a[1], (h - 1 - margin) * b[2] - b[1]),
    ]
    for c0, c1 in constraints:  # c0 + c1 * t >= 0
        if abs(c1) < 1e-15:
            if c0 < 0:
                return None
        elif c1 > 0:
            lo = max(lo, -c0 / c1)
        else:
            hi = min(hi, -c0 / c1)
    if hi - lo < 1e-6:
        return None
    return lo, hi


def _stripe_pixel_width(scene, origin, direction, t, width_m):
    """Image width of a ground stripe, measured across its projected line."""
    normal = np.array([-direction[1], direction[0]])
    c = origin + np.multiply.outer(t, direction)
    side = scene.project_ground(np.stack([c - 0.5 * width_m * normal, c + 0.5 * width_m * normal]))
    ahead = scene.project_ground(c + 1e-3 * direction)
    along = ahead - scene.project_ground(c)
    along /= np.linalg.norm(along, axis=-1, keepdims=True)
    across = side[1] - side[0]
    return np.abs(across[..., 0] * along[..., 1] - across[..., 1] * along[..., 0])


def _trim_narrow(scene, origin, direction, span, width_m, min_px, n=512):
    """Shrink ``span`` to the part where the stripe is at least ``min_px`` wide."""
    ts = np.linspace(span[0], span[1], n)
    width = _stripe_pixel_width(scene, origin, direction, ts, width_m) - min_px
    wide = width >= 0
    if not wide.any():
        return None
    # width falls monotonically with depth, so the wide part is one interval;
    # its ends are interpolated between samples
    i, j = np.flatnonzero(wide)[[0, -1]]

    def cross(a, b):
        return ts[a] + (ts[b] - ts[a]) * width[a] / (width[a] - width[b])

    lo = ts[0] if i == 0 else cross(i, i - 1)
    hi = ts[-1] if j == n - 1 else cross(j, j + 1)
    if hi - lo < 1e-6:
        return None
    return lo, hi


def _stripe_polygon(scene, a, b, axis, width_m):
    n = np.array([0.0, 1.0]) if axis == 0 else np.array([1.0, 0.0])
    off = 0.5 * width_m * n
    corners = np.array([a - off, b - off, b + off, a + off])
    return scene.project_ground(corners)


def _edge_distances(poly, u, v):
    """Signed distances of points to each polygon edge, positive inside."""
    area = 0.0
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        area += p[0] * q[1] - q[0] * p[1]
    sign = 1.0 if area >= 0 else -1.0
    out = []
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        e = q - p
        cross = e[0] * (v - p[1]) - e[1] * (u - p[0])
        out.append(sign * cross / math.hypot(*e))
    return np.stack(out)


def _edge_halfplanes(poly, margin):
    """Edge half-planes ``a*u + b*v + c > 0`` widened outward by ``margin``."""
    area = 0.0
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        area += p[0] * q[1] - q[0] * p[1]
    sign = 1.0 if area >= 0 else -1.0
    out = []
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        e = q - p
        n = math.hypot(*e)
        a, b = -sign * e[1] / n, sign * e[0] / n
        out.append((a, b, -(a * p[0] + b * p[1]) + margin))
    return out


def _rasterize(polys, shape, fg, bg, ss=4):
    """Area-sampled convex polygon fill; returns image and per-pixel coverage."""
    h, w = shape
    offs = (np.arange(ss) + 0.5) / ss - 0.5
    du, dv = np.meshgrid(offs, offs)
    du, dv = du.ravel(), dv.ravel()
    cover = np.zeros(shape)
    for poly in polys:
        lo = np.floor(poly.min(axis=0)).astype(int) - 1
        hi = np.ceil(poly.max(axis=0)).astype(int) + 1
        u0, v0 = max(lo[0], 0), max(lo[1], 0)
        u1, v1 = min(hi[0], w - 1), min(hi[1], h - 1)
        if u1 < u0 or v1 < v0:
            continue
        # a pixel square can only touch the polygon if its centre is within
        # sqrt(2)/2 of every edge half-plane; per row that is a u interval
        rows = np.arange(v0, v1 + 1, dtype=float)
        left = np.full(rows.size, float(u0))
        right = np.full(rows.size, float(u1))
        for a, b, c in _edge_halfplanes(poly, 0.75):
            # a*u + b*v + c > 0
            if abs(a) < 1e-12:
                bad = b * rows + c <= 0
                right[bad] = -1.0
                continue
            bound = -(b * rows + c) / a
            if a > 0:
                left = np.maximum(left, np.floor(bound) + 1)
            else:
                right = np.minimum(right, np.ceil(bound) - 1)
        left = np.maximum(left, u0).astype(int)
        right = np.minimum(right, u1).astype(int)
        counts = np.maximum(right - left + 1, 0)
        if counts.sum() == 0:
            continue
        vv = np.repeat(rows, counts)
        start = np.repeat(left - np.cumsum(counts) + counts, counts)
        uu = (start + np.arange(counts.sum())).astype(float)
        # pixels whose square lies wholly inside need no supersampling
        inner = np.all(_edge_distances(poly, uu, vv) >= 0.75, axis=0)
        iu, iv = uu[inner].astype(int), vv[inner].astype(int)
        cover[iv, iu] = 1.0
        uu, vv = uu[~inner], vv[~inner]
        d = _edge_distances(poly, uu[:, None] + du, vv[:, None] + dv)
        frac = np.all(d >= 0, axis=0).mean(axis=1)
        iu, iv = uu.astype(int), vv.astype(int)
        cover[iv, iu] = np.maximum(cover[iv, iu], frac)
    img = bg - cover * (bg - fg)
    return img, cover


def _line_layout(scene, n_lines, axis, rng, band_top, margin):
    """Ground offsets for lines parallel to ``axis`` spread across the view."""
    w, h = scene.dims
    # sample the view along a row low in the frame and back-project
    row = h - 1 - margin - 4
    if axis == 0:
        us = np.linspace(margin + 10, w - margin - 10, n_lines + 2)[1:-1]
        us = us + rng.uniform(-0.3, 0.3, n_lines) * (us[1] - us[0] if n_lines > 1 else 10)
        ground = scene.backproject_ground(np.column_stack([us, np.full(n_lines, row)]))
        return ground[:, 1]
    vs = np.linspace(band_top + 15, h - margin - 10, n_lines)
    ground = scene.backproject_ground(np.column_stack([np.full(n_lines, w / 2.0), vs]))
    return ground[:, 0]


def render_line_image(scene: SyntheticScene, n_road_lines: int = 6, n_perp_lines: int = 6,
                      noise_px: float = 0.0, seed: int | None = None, stripe_width_m=(0.6, 1.2),
                      layout_seed: int | None = None, min_stripe_px: float = 3.0):
    """Render painted ground stripes parallel to both ground axes.

    Each stripe is a thin ground rectangle, so both of its long borders
    project onto lines through the true vanishing point. ``noise_px``
    jitters every projected corner by at most that many pixels; ``seed``
    drives the jitter and ``layout_seed`` (default: the scene seed) the
    stripe placement, so successive frames of one scene share a layout.
    ``stripe_width_m`` is one width or an (edge, perpendicular) pair.
    Stripes are cut where they would be narrower than ``min_stripe_px``;
    further away both borders blur into one another and bend the
    detected edges.

    Returns ``(GrayImage, [RenderedLine, ...])``.
    """
    if n_road_lines < 2 or n_perp_lines < 2:
        raise InvalidSpec("need at least two lines per direction")
    w, h = scene.dims
    margin = 2.0
    band_top = max(0.25 * h, scene.horizon + 12.0)
    layout_rng = np.random.default_rng(scene.seed if layout_seed is None else layout_seed)
    jitter_rng = np.random.default_rng(seed)
    polys, rendered = [], []
    widths = np.broadcast_to(np.asarray(stripe_width_m, dtype=float), (2,))
    for axis, count, label in ((0, n_road_lines, "edge"), (1, n_perp_lines, "perpendicular")):
        width_m = float(widths[axis])
        offsets = _line_layout(scene, count, axis, layout_rng, band_top, margin)
        direction = np.array([1.0, 0.0]) if axis == 0 else np.array([0.0, 1.0])
        for off in offsets:
            origin = np.array([0.0, off]) if axis == 0 else np.array([off, 0.0])
            span = _clip_t_range(scene, origin, direction, band_top + 2, margin + 2)
            if span is not None and min_stripe_px > 0:
                span = _trim_narrow(scene, origin, direction, span, width_m, min_stripe_px)
            if span is None:
                continue
            a = origin + span[0] * direction
            b = origin + span[1] * direction
            poly = _stripe_polygon(scene, a, b, axis, width_m)
            if noise_px > 0:
                r = noise_px * np.sqrt(jitter_rng.uniform(0, 1, 4))
                phi = jitter_rng.uniform(0, 2 * math.pi, 4)
                poly = poly + np.column_stack([r * np.cos(phi), r * np.sin(phi)])
            ends = scene.project_ground(np.array([a, b]))
            polys.append(poly)
            rendered.append(RenderedLine(LineSegment(tuple(ends[0]), tuple(ends[1])), label, poly))
    img, _ = _rasterize(polys, (h, w), fg=40.0, bg=200.0)
    return GrayImage(np.clip(np.rint(img), 0, 255).astype(np.uint8)), rendered


def coverage_mask(rendered, shape) -> np.ndarray:
    """Pixels touched by any rendered stripe (coverage > 0)."""
    _, cover = _rasterize([r.polygon for r in rendered], shape, 0.0, 1.0)
    return cover > 0


# --------------------------------------------------------------------------
# pedestrians

@dataclass(frozen=True)
class Walker:
    start: tuple        # ground-plane metres
    velocity: tuple     # metres per frame
    confidence: float = 0.9


def plant_clusters(scene, n_clusters, per_cluster, rng, spread=1.0, min_gap=12.0,
                   confidence=(0.75, 0.99)):
    """Walkers in tight, well separated clusters sharing a common velocity."""
    centres = []
    tries = 0
    while len(centres) < n_clusters:
        tries += 1
        if tries > 10000:
            raise InvalidSpec("cannot place separated clusters in view")
        c = sample_ground_points(scene, 1, rng, margin=40.0, horizon_gap=60.0)[0]
        if all(np.hypot(*(c - o)) > min_gap + 4 * spread for o in centres):
            centres.append(c)
    walkers = []
    for c in centres:
        vel = rng.normal(0, 0.05, 2)
        for _ in range(per_cluster):
            p = c + rng.uniform(-spread, spread, 2)
            walkers.append(Walker(tuple(p), tuple(vel), float(rng.uniform(*confidence))))
    return walkers


def render_detections(scene: SyntheticScene, frames: int, walkers, camera_id: str = "cam0",
                      clip_id: str = "clip0", start: datetime | None = None,
                      frame_interval_s: float = 1.0):
    """Detections whose bbox bottom-centre is the exact projection of each walker.

    Returns ``(list of FrameDetections, tracks)`` where ``tracks`` has
    shape ``(frames, n_walkers, 2)`` in BNG metres.
    """
    from .pipeline.detections import Detection, FrameDetections

    start = start or datetime(2020, 4, 1, 12, 0, tzinfo=timezone.utc)
    walkers = list(walkers)
    tracks = np.zeros((frames, len(walkers), 2))
    out = []
    for k in range(frames):
        dets = []
        for j, wk in enumerate(walkers):
            xy = np.array(wk.start) + k * np.array(wk.velocity)
            tracks[k, j] = scene.to_bng(xy)
            foot = scene.project(np.array([xy[0], xy[1], 0.0]))
            head = scene.project(np.array([xy[0], xy[1], PERSON_HEIGHT_M]))
            bh = float(foot[1] - head[1])
            bw = 0.4 * bh
            dets.append(Detection("person", wk.confidence,
                                  (float(foot[0] - bw / 2), float(head[1]), bw, bh)))
        ts = start + timedelta(seconds=k * frame_interval_s)
        out.append(FrameDetections(camera_id, clip_id, k, ts, tuple(dets)))
    return out, tracks


def object_pixels(scene: SyntheticScene, plane_xy, physical_height: float):
    """Bottom and top pixels of a vertical object standing at ``plane_xy``."""
    x, y = plane_xy
    bottom = scene.project(np.array([x, y, 0.0]))
    top = scene.project(np.array([x, y, physical_height]))
    return bottom, top


def anchors_for(scene: SyntheticScene, n: int, rng, bng_noise: float = 0.0,
                pixel_noise: float = 0.0):
    """Ground anchors with pixel position and (optionally noisy) BNG truth."""
    from .registration import Anchor

    xy = sample_ground_points(scene, n, rng)
    uv = scene.project_ground(xy)
    bng = scene.to_bng(xy)
    if pixel_noise:
        uv = uv + rng.normal(0, pixel_noise, uv.shape)
    if bng_noise:
        bng = bng + rng.normal(0, bng_noise, bng.shape)
    return [Anchor(f"a{i}", (float(uv[i, 0]), float(uv[i, 1])), (float(bng[i, 0]), float(bng[i, 1])),
                   "synthetic") for i in range(n)]


def write_bundle(spec: dict, out_dir) -> dict:
    """Materialise a synthetic scene on disk for the command-line chain.

    Writes ``frames/*.pgm`` (line imagery), ``detections.jsonl`` (the
    first clip), ``clips/*.jsonl`` and ``manifest.json`` when ``n_clips``
    exceeds one, ``anchors.json`` and ``truth.json``; returns the truth
    mapping.
    """
    from .imaging import write_pgm
    from .pipeline.detections import write_detections
    from .registration import save_anchors

    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    scene_keys = set(SceneSpec.__dataclass_fields__)
    scene = make_scene({k: v for k, v in spec.items() if k in scene_keys})
    seed = scene.seed
    n_frames = int(spec.get("n_frames", 20))
    noise = float(spec.get("noise_px", 0.5))
    for k in range(n_frames):
        img, _ = render_line_image(scene, int(spec.get("n_road_lines", 6)),
                                   int(spec.get("n_perp_lines", 6)), noise, seed=seed * 1000 + k)
        write_pgm(out / "frames" / f"frame_{k:04d}.pgm", img)

    rng = np.random.default_rng(seed + 1)
    walkers = plant_clusters(scene, int(spec.get("n_clusters", 3)), int(spec.get("per_cluster", 4)), rng)
    camera_id = str(spec.get("camera_id", "cam0"))
    clip_frames = int(spec.get("clip_frames", 10))
    start = datetime(2020, 4, 1, 12, 0, tzinfo=timezone.utc)
    frames, tracks = render_detections(scene, clip_frames, walkers, camera_id=camera_id,
                                       clip_id=f"{camera_id}-clip0", start=start)
    write_detections(out / "detections.jsonl", frames)
    n_clips = int(spec.get("n_clips", 1))
    if n_clips > 1:
        (out / "clips").mkdir(exist_ok=True)
        manifest = []
        for c in range(n_clips):
            # each clip replays the walkers from a fresh start five minutes apart
            clip, _ = render_detections(scene, clip_frames, walkers, camera_id=camera_id,
                                        clip_id=f"{camera_id}-clip{c}",
                                        start=start + timedelta(minutes=5 * c))
            name = f"clips/{camera_id}-clip{c:04d}.jsonl"
            write_detections(out / name, clip)
            manifest.append({"path": name, "duration_s": 10.0})
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    anchors = anchors_for(scene, int(spec.get("n_anchors", 6)), rng)
    save_anchors(out / "anchors.json", anchors)

    buses = []
    for obj in scene.objects:
        if obj["kind"] == "bus":
            b, t = object_pixels(scene, obj["plane"], BUS_HEIGHT_M)
            buses.append({"bottom": [float(b[0]), float(b[1])], "top": [float(t[0]), float(t[1])],
                          "physical_height": BUS_HEIGHT_M})
    u0, v0, u1 = scene.vanishing_points()
    truth = {
        "camera_id": camera_id,
        "image_width": scene.dims[0], "image_height": scene.dims[1],
        "u0": u0, "v0": v0, "u1": u1, "h": scene.h, "f": scene.f,
        "registration": {"A": scene.registration_A.tolist(), "t": scene.registration_t.tolist()},
        "height_objects": buses,
        "tracks_bng": tracks.tolist(),
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    return truth
