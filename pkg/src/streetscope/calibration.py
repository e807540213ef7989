"""Single-view calibration from two orthogonal ground-plane vanishing points.

The camera follows the simplified pinhole model: square pixels, principal
point at the image centre, no lens distortion, zero roll and a flat
ground plane ``Z = 0``. Four numbers describe a scene: the road-edge
vanishing point ``(u0, v0)``, the perpendicular vanishing point
``(u1, v0)`` on the same horizon row, and the camera height ``h``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (BehindCamera, DegenerateVanishingPoints, EmptyInput,
                     HorizonOrAbove, InsufficientLines, InvalidObject,
                     NoConvergence, NoIntersection, SchemaError, SingularHomography)
from .imaging import (CannyParams, canny, default_horizon_band, hough_lines,
                      split_orthogonal_sets)

VP_BIN_SIZE = 5.0
PARALLEL_TOL = 1e-3
HORIZON_MARGIN = 0.5
BUS_HEIGHT_M = 4.95


@dataclass(frozen=True)
class VanishingEstimate:
    point: tuple
    votes: int
    bin_size: float


@dataclass(frozen=True, eq=False)
class CameraModel:
    image_width: int
    image_height: int
    u0: float
    v0: float
    u1: float
    h: float
    f: float
    H: np.ndarray
    H_inv: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    r3: np.ndarray
    camera_id: str = ""

    @property
    def centre(self):
        return (self.image_width / 2.0, self.image_height / 2.0)

    @property
    def K(self) -> np.ndarray:
        cx, cy = self.centre
        return np.array([[self.f, 0.0, cx], [0.0, self.f, cy], [0.0, 0.0, 1.0]])

    def projection_matrix(self) -> np.ndarray:
        """Full 3x4 projection of world ``(X, Y, Z, 1)``."""
        return self.K @ np.column_stack([self.d0, self.d1, self.r3, -self.h * self.r3])

    def with_height(self, h: float) -> "CameraModel":
        return build_camera((self.image_width, self.image_height), self.u0, self.v0,
                            self.u1, h, camera_id=self.camera_id)

    def to_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "u0": self.u0, "v0": self.v0, "u1": self.u1,
            "h": self.h, "f": self.f,
            "H": [float(x) for x in self.H.ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return build_camera((int(d["image_width"]), int(d["image_height"])),
                            float(d["u0"]), float(d["v0"]), float(d["u1"]), float(d["h"]),
                            camera_id=str(d.get("camera_id", "")))


@dataclass(frozen=True)
class UncertaintyReport:
    dX: float
    dY: float
    rel_dX: float | None
    rel_dY: float | None
    per_parameter: dict


def save_camera(path, cam: CameraModel) -> None:
    Path(path).write_text(json.dumps(cam.to_dict(), indent=2, sort_keys=True) + "\n")


def load_camera(path) -> CameraModel:
    try:
        return CameraModel.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: not a camera file ({exc!r})") from exc


# --------------------------------------------------------------------------
# vanishing points

def _intersections(lines) -> np.ndarray:
    """Pairwise intersections of the infinite lines, skipping near-parallel pairs."""
    angles = np.array([seg.angle for seg in lines])
    homog = np.array([seg.homogeneous() for seg in lines])
    i, j = np.triu_indices(len(lines), k=1)
    diff = np.abs(angles[i] - angles[j])
    usable = np.minimum(diff, math.pi - diff) >= PARALLEL_TOL
    x = np.cross(homog[i[usable]], homog[j[usable]])
    x = x[np.abs(x[:, 2]) > 1e-300]
    return x[:, :2] / x[:, 2:]


def estimate_vanishing_point(lines, bin_size: float = VP_BIN_SIZE) -> VanishingEstimate:
    """Mode of the pairwise line intersections on a ``bin_size`` grid.

    Returns the centroid of the intersections in the most populated bin.
    The result does not depend on the order of ``lines``.
    """
    lines = list(lines)
    if len(lines) < 2:
        raise InsufficientLines(f"need at least 2 lines, got {len(lines)}")
    pts = _intersections(lines)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if len(pts) == 0:
        raise NoIntersection("all line pairs are near-parallel")
    # canonical order makes binning ties and the centroid sum order-free
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    bins = np.floor(pts / bin_size).astype(np.int64)
    keys, inverse, counts = np.unique(bins, axis=0, return_inverse=True, return_counts=True)
    best = int(np.argmax(counts))  # np.unique sorts keys, so ties resolve deterministically
    members = pts[inverse.ravel() == best]
    centre = members.mean(axis=0)
    return VanishingEstimate(point=(float(centre[0]), float(centre[1])),
                             votes=int(counts[best]), bin_size=float(bin_size))


def aggregate_scene_estimates(per_frame):
    """Average per-frame (road edge, perpendicular) estimates into (u0, v0, u1)."""
    per_frame = list(per_frame)
    if not per_frame:
        raise EmptyInput("no frame estimates")
    edge = np.array([e.point for e, _ in per_frame], dtype=float)
    perp = np.array([p.point for _, p in per_frame], dtype=float)
    u0 = float(edge[:, 0].mean())
    u1 = float(perp[:, 0].mean())
    v0 = float(np.concatenate([edge[:, 1], perp[:, 1]]).mean())
    return u0, v0, u1


def frame_vanishing_points(img, canny_params: CannyParams | None = None,
                           bin_size: float = VP_BIN_SIZE, horizon_band: float | None = None,
                           **hough_kw):
    """Run edges, lines and both vanishing-point votes on one frame."""
    edges = canny(img, canny_params)
    lines = hough_lines(edges, **hough_kw)
    if horizon_band is None:
        horizon_band = default_horizon_band(img.height)
    sets = split_orthogonal_sets(lines, horizon_band)
    return (estimate_vanishing_point(sets.road_edges, bin_size),
            estimate_vanishing_point(sets.road_perpendiculars, bin_size))


def estimate_scene_vanishing_points(frames, canny_params=None, bin_size=VP_BIN_SIZE,
                                    horizon_band=None, **hough_kw):
    """Per-frame votes averaged over ``frames``; frames without usable lines are skipped."""
    per_frame = []
    for img in frames:
        try:
            per_frame.append(frame_vanishing_points(img, canny_params, bin_size, horizon_band, **hough_kw))
        except (InsufficientLines, NoIntersection):
            continue
    return aggregate_scene_estimates(per_frame)


# --------------------------------------------------------------------------
# camera construction and mapping

def focal_from_vanishing_points(u0, v0, u1, cx, cy) -> float:
    f2 = -((u0 - cx) * (u1 - cx) + (v0 - cy) ** 2)
    if not f2 > 0:
        raise DegenerateVanishingPoints(
            f"vanishing points ({u0}, {v0}), ({u1}, {v0}) imply f^2 = {f2} <= 0")
    return math.sqrt(f2)


def build_camera(dims, u0: float, v0: float, u1: float, h: float, camera_id: str = "") -> CameraModel:
    """Assemble the pinhole camera and its ground-plane homography.

    The focal length follows from requiring the two back-projected
    vanishing directions to be orthogonal. World axis X runs towards
    ``(u0, v0)``, Y towards ``(u1, v0)``, and the plane normal is oriented
    so that pixels below the horizon land in front of the camera.
    """
    width, height = int(dims[0]), int(dims[1])
    if not h > 0:
        raise ValueError("camera height must be positive")
    cx, cy = width / 2.0, height / 2.0
    f = focal_from_vanishing_points(u0, v0, u1, cx, cy)
    K = np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])
    d0 = np.array([(u0 - cx) / f, (v0 - cy) / f, 1.0])
    d1 = np.array([(u1 - cx) / f, (v0 - cy) / f, 1.0])
    d0 /= np.linalg.norm(d0)
    d1 /= np.linalg.norm(d1)
    r3 = np.cross(d0, d1)
    r3 /= np.linalg.norm(r3)
    # probe ray one pixel below the horizon: its ground hit must have positive depth
    probe = np.linalg.solve(K, [cx, v0 + 1.0, 1.0])
    M = np.column_stack([d0, d1, -h * r3])
    if np.linalg.solve(M, probe)[2] < 0:
        r3 = -r3
        M = np.column_stack([d0, d1, -h * r3])
    H = K @ M
    if abs(np.linalg.det(H)) < 1e-12 * np.abs(H).max() ** 3:
        raise SingularHomography("ground-plane homography is singular")
    H_inv = np.linalg.inv(H)
    for a in (H, H_inv, d0, d1, r3):
        a.setflags(write=False)
    return CameraModel(width, height, float(u0), float(v0), float(u1), float(h), f,
                       H, H_inv, d0, d1, r3, camera_id=camera_id)


def image_to_world(cam: CameraModel, uv) -> np.ndarray:
    """Map pixel(s) ``(..., 2)`` to ground-plane metres ``(..., 2)``."""
    uv = np.asarray(uv, dtype=float)
    flat = uv.reshape(-1, 2)
    if np.any(flat[:, 1] - cam.v0 < HORIZON_MARGIN):
        raise HorizonOrAbove("pixel is not below the horizon row")
    hom = np.column_stack([flat, np.ones(len(flat))]) @ cam.H_inv.T
    # camera-frame depth of the ground hit has the sign of the homogeneous scale
    if np.any(hom[:, 2] <= 0):
        raise HorizonOrAbove("pixel maps behind the camera")
    return (hom[:, :2] / hom[:, 2:]).reshape(uv.shape)


def world_to_image(cam: CameraModel, xy) -> np.ndarray:
    """Map ground-plane point(s) ``(..., 2)`` to pixels ``(..., 2)``."""
    xy = np.asarray(xy, dtype=float)
    flat = xy.reshape(-1, 2)
    hom = np.column_stack([flat, np.ones(len(flat))]) @ cam.H.T
    if np.any(hom[:, 2] <= 0):
        raise BehindCamera("ground point has non-positive depth")
    return (hom[:, :2] / hom[:, 2:]).reshape(xy.shape)


def project_point(cam: CameraModel, xyz) -> np.ndarray:
    """Project a 3-D world point ``(X, Y, Z)`` with the full pinhole model."""
    p = cam.projection_matrix() @ np.append(np.asarray(xyz, dtype=float), 1.0)
    if p[2] <= 0:
        raise BehindCamera("point has non-positive depth")
    return p[:2] / p[2]


# --------------------------------------------------------------------------
# camera height

def _top_residual(cam: CameraModel, h: float, bottom, top, physical_height: float) -> float:
    trial = cam.with_height(h)
    ground = image_to_world(trial, bottom)
    P = trial.projection_matrix()
    p = P @ np.array([ground[0], ground[1], physical_height, 1.0])
    if p[2] <= 0:
        # top beyond the image plane: with the camera this low it sits
        # unboundedly high in the image
        return -math.inf
    return p[1] / p[2] - top[1]


def _height_for_object(cam, bottom, top, physical_height, lo=0.1, hi=100.0, tol_px=1e-6):
    bottom = np.asarray(bottom, dtype=float)
    top = np.asarray(top, dtype=float)
    if not physical_height > 0 or not top[1] < bottom[1]:
        raise InvalidObject("top must be above bottom and height positive")
    r_lo = _top_residual(cam, lo, bottom, top, physical_height)
    r_hi = _top_residual(cam, hi, bottom, top, physical_height)
    if not (r_lo < 0 < r_hi):
        raise NoConvergence(f"no height in [{lo}, {hi}] explains the object")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = _top_residual(cam, mid, bottom, top, physical_height)
        if abs(r) < tol_px:
            return mid
        if r < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * hi:
            break
    # bracket has collapsed to float resolution
    if abs(_top_residual(cam, 0.5 * (lo + hi), bottom, top, physical_height)) < tol_px:
        return 0.5 * (lo + hi)
    raise NoConvergence("bisection did not reach the pixel tolerance")


def estimate_height(cam: CameraModel, objects) -> float:
    """Camera height from vertical objects of known size.

    ``objects`` is one mapping or a list of mappings with ``bottom`` and
    ``top`` pixels and ``physical_height`` in metres. The projected top of
    each object grows monotonically towards its bottom as the assumed
    height rises, so each object is solved by bisection on ``[0.1, 100]``
    and the per-object heights are averaged.
    """
    if isinstance(objects, dict):
        objects = [objects]
    objects = list(objects)
    if not objects:
        raise EmptyInput("no reference objects")
    hs = [_height_for_object(cam, o["bottom"], o["top"], float(o["physical_height"])) for o in objects]
    return float(np.mean(hs))


# --------------------------------------------------------------------------
# uncertainty

_PARAMS = ("u0", "v0", "u1", "h")


def _world_with(cam, params, uv):
    trial = build_camera((cam.image_width, cam.image_height), params["u0"], params["v0"],
                         params["u1"], params["h"])
    return image_to_world(trial, uv)


def position_uncertainty(cam: CameraModel, uv, deltas: dict) -> UncertaintyReport:
    """First-order (total differential) error in the mapped ground position.

    Partial derivatives come from central differences over each of
    ``u0, v0, u1, h``; ``deltas`` holds the parameter uncertainties.
    """
    uv = np.asarray(uv, dtype=float)
    base = {k: getattr(cam, k) for k in _PARAMS}
    X, Y = image_to_world(cam, uv)
    contrib = {}
    for k in _PARAMS:
        delta = float(deltas.get(k, 0.0))
        if delta < 0:
            raise ValueError(f"delta for {k} must be non-negative")
        step = max(1e-4, 1e-6 * abs(base[k]))
        plus = _world_with(cam, {**base, k: base[k] + step}, uv)
        minus = _world_with(cam, {**base, k: base[k] - step}, uv)
        grad = (plus - minus) / (2 * step)
        contrib[k] = (abs(grad[0]) * delta, abs(grad[1]) * delta)
    dX = math.fsum(c[0] for c in contrib.values())
    dY = math.fsum(c[1] for c in contrib.values())
    rel_dX = dX / abs(X) if abs(X) >= 1e-9 else None
    rel_dY = dY / abs(Y) if abs(Y) >= 1e-9 else None
    return UncertaintyReport(dX=dX, dY=dY, rel_dX=rel_dX, rel_dY=rel_dY, per_parameter=contrib)
