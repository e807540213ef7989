"""World plane to British National Grid registration from street furniture.

Anchors are fixed objects whose pixel position and BNG coordinates are
both known. Their pixels are mapped to the world plane through the
camera and a general 2D affine map is fitted by linear least squares.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import CameraModel, image_to_world
from .errors import DegenerateConfiguration, SchemaError, TooFewAnchors

MIN_ANCHORS = 4
DEFAULT_SEED = 0


@dataclass(frozen=True)
class Anchor:
    id: str
    pixel: tuple        # (u, v)
    bng: tuple          # (easting, northing) metres
    label: str = ""

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (*self.pixel, *self.bng)):
            raise SchemaError(f"anchor {self.id!r}: non-finite coordinates")


@dataclass(frozen=True, eq=False)
class RegistrationTransform:
    """Affine map ``bng = A @ plane + t`` with diagnostic residuals.

    The decomposition follows ``A = [[k1 cos, k3 sin], [-k2 sin, k4 cos]]``
    with the rotation taken as ``atan2(a12 - a21, a11 + a22)``, i.e. the
    angle of the closest similarity. Scale factors multiplying a vanishing
    sine or cosine are reported as 0.
    """

    a11: float
    a12: float
    a21: float
    a22: float
    tx: float
    ty: float
    residuals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)), repr=False)

    @property
    def A(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def t(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    def decomposition(self):
        """``(theta, k1, k2, k3, k4)`` with ``from_decomposition`` as inverse."""
        theta = math.atan2(self.a12 - self.a21, self.a11 + self.a22)
        c, s = math.cos(theta), math.sin(theta)
        tiny = 1e-12 * max(1.0, float(np.abs(self.A).max()))
        if (abs(c) < 1e-9 and max(abs(self.a11), abs(self.a22)) > tiny) or \
                (abs(s) < 1e-9 and max(abs(self.a12), abs(self.a21)) > tiny):
            # the form has one redundant angle; move off the axis it cannot reach
            theta += math.pi / 4
            c, s = math.cos(theta), math.sin(theta)
        k1 = self.a11 / c if abs(c) >= 1e-9 else 0.0
        k4 = self.a22 / c if abs(c) >= 1e-9 else 0.0
        k3 = self.a12 / s if abs(s) >= 1e-9 else 0.0
        k2 = -self.a21 / s if abs(s) >= 1e-9 else 0.0
        return theta, k1, k2, k3, k4

    @property
    def theta(self) -> float:
        return self.decomposition()[0]

    @property
    def k(self) -> tuple:
        return self.decomposition()[1:]

    @classmethod
    def from_decomposition(cls, theta, k1, k2, k3, k4, tx, ty):
        c, s = math.cos(theta), math.sin(theta)
        return cls(k1 * c, k3 * s, -k2 * s, k4 * c, tx, ty)

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        theta, k1, k2, k3, k4 = self.decomposition()
        return {
            "a11": self.a11, "a12": self.a12, "a21": self.a21, "a22": self.a22,
            "tx": self.tx, "ty": self.ty,
            "theta": theta, "k1": k1, "k2": k2, "k3": k3, "k4": k4,
            "residuals": np.asarray(self.residuals).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict):
        try:
            return cls(*(float(d[key]) for key in ("a11", "a12", "a21", "a22", "tx", "ty")),
                       residuals=np.asarray(d.get("residuals", []), dtype=float).reshape(-1, 2))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad registration record: {exc}") from exc


@dataclass(frozen=True)
class ValidationReport:
    in_sample_error: float
    holdout_error: float
    discrepancy: float
    holdout_residuals: tuple
    removed: tuple
    median_error: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "in_sample_error": self.in_sample_error,
            "holdout_error": self.holdout_error,
            "discrepancy": self.discrepancy,
            "median_error": self.median_error,
            "holdout_residuals": list(self.holdout_residuals),
            "removed": list(self.removed),
            "seed": self.seed,
        }


def _plane_points(anchors, cam):
    uv = np.array([a.pixel for a in anchors], dtype=float).reshape(-1, 2)
    return image_to_world(cam, uv)


def fit_affine(plane: np.ndarray, bng: np.ndarray) -> RegistrationTransform:
    """Least-squares affine map from ``plane`` to ``bng`` point arrays."""
    plane = np.asarray(plane, dtype=float)
    bng = np.asarray(bng, dtype=float)
    n = len(plane)
    if n < 3:
        raise DegenerateConfiguration("an affine map needs three non-collinear points")
    # centring keeps the normal equations well conditioned at BNG magnitudes
    pc, bc = plane.mean(axis=0), bng.mean(axis=0)
    P, B = plane - pc, bng - bc
    scale = np.sqrt((P ** 2).sum(axis=1).mean())
    sv = np.linalg.svd(P, compute_uv=False)
    if scale == 0 or sv[-1] <= 1e-9 * max(sv[0], 1.0):
        raise DegenerateConfiguration("anchor plane points are collinear or coincident")
    At, *_ = np.linalg.lstsq(P, B, rcond=None)
    A = At.T
    if abs(np.linalg.det(A)) <= 1e-12:
        raise DegenerateConfiguration("fitted affine map is singular")
    t = bc - A @ pc
    resid = bng - (plane @ A.T + t)
    return RegistrationTransform(float(A[0, 0]), float(A[0, 1]), float(A[1, 0]), float(A[1, 1]),
                                 float(t[0]), float(t[1]), residuals=resid)


def fit_registration(anchors, cam: CameraModel) -> RegistrationTransform:
    """Fit the plane-to-BNG affine map from at least four anchors."""
    anchors = list(anchors)
    if len(anchors) < MIN_ANCHORS:
        raise TooFewAnchors(f"need at least {MIN_ANCHORS} anchors, got {len(anchors)}")
    bng = np.array([a.bng for a in anchors], dtype=float)
    return fit_affine(_plane_points(anchors, cam), bng)


def apply_registration(reg: RegistrationTransform, q) -> np.ndarray:
    """Map plane point(s) ``(..., 2)`` to BNG; the residual term is not added."""
    q = np.asarray(q, dtype=float)
    return q @ reg.A.T + reg.t


def _pairwise(points):
    i, j = np.triu_indices(len(points), k=1)
    return np.hypot(*(points[i] - points[j]).T)


def pairwise_distance_error(anchors, reg: RegistrationTransform, cam: CameraModel) -> float:
    """Mean squared difference between true and mapped anchor pair distances.

    Returns epsilon in square metres; its square root is the headline
    distance error.
    """
    anchors = list(anchors)
    if len(anchors) < 2:
        raise TooFewAnchors("pairwise error needs at least 2 anchors")
    truth = np.array([a.bng for a in anchors], dtype=float)
    mapped = apply_registration(reg, _plane_points(anchors, cam))
    return float(np.mean((_pairwise(truth) - _pairwise(mapped)) ** 2))


def leave_one_out(scenes, seed: int = DEFAULT_SEED) -> ValidationReport:
    """Drop one random anchor per scene, refit, and measure it.

    ``scenes`` is a sequence of ``(anchors, cam)``. The in-sample error is
    the mean over scenes of sqrt(epsilon) for the full fit; the holdout
    error is the mean Euclidean miss at the removed anchors.
    """
    scenes = [(list(a), cam) for a, cam in scenes]
    for i, (anchors, _) in enumerate(scenes):
        if len(anchors) < MIN_ANCHORS + 1:
            raise TooFewAnchors(f"scene {i}: leave-one-out needs at least {MIN_ANCHORS + 1} anchors")
    rng = np.random.default_rng(seed)
    in_sample, holdout, removed = [], [], []
    for anchors, cam in scenes:
        full = fit_registration(anchors, cam)
        in_sample.append(math.sqrt(pairwise_distance_error(anchors, full, cam)))
        k = int(rng.integers(len(anchors)))
        rest = anchors[:k] + anchors[k + 1:]
        reg = fit_registration(rest, cam)
        miss = apply_registration(reg, _plane_points([anchors[k]], cam))[0] - np.array(anchors[k].bng)
        holdout.append(float(np.hypot(*miss)))
        removed.append(anchors[k].id)
    ins = float(np.mean(in_sample)) if in_sample else 0.0
    hold = float(np.mean(holdout)) if holdout else 0.0
    return ValidationReport(ins, hold, abs(hold - ins), tuple(holdout), tuple(removed),
                            float(np.median(in_sample)) if in_sample else 0.0, seed)


# --------------------------------------------------------------------------
# files

def anchors_to_json(anchors) -> list:
    return [{"id": a.id, "u": a.pixel[0], "v": a.pixel[1], "easting": a.bng[0],
             "northing": a.bng[1], "label": a.label} for a in anchors]


def anchors_from_json(data) -> list:
    if not isinstance(data, list):
        raise SchemaError("anchor file must hold a JSON array")
    out = []
    for i, rec in enumerate(data):
        try:
            out.append(Anchor(str(rec["id"]), (float(rec["u"]), float(rec["v"])),
                              (float(rec["easting"]), float(rec["northing"])), str(rec.get("label", ""))))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"anchor {i}: {exc}") from exc
    return out


def save_anchors(path, anchors) -> None:
    Path(path).write_text(json.dumps(anchors_to_json(anchors), indent=2) + "\n")


def load_anchors(path) -> list:
    return anchors_from_json(json.loads(Path(path).read_text()))


def save_registration(path, reg: RegistrationTransform, extra: dict | None = None) -> None:
    d = reg.to_dict()
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def load_registration(path) -> RegistrationTransform:
    try:
        return RegistrationTransform.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: not a registration file ({exc!r})") from exc
