"""Pedestrian groups from georeferenced detections.

Per frame, confident person detections are mapped to BNG, triangulated,
and Delaunay edges no longer than ``t_d`` are kept; the connected
components of that graph are the groups. Because the Euclidean minimum
spanning tree is a Delaunay subgraph, the partition equals that of the
complete distance-threshold graph.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .calibration import HORIZON_MARGIN, CameraModel
from .delaunay import delaunay
from .errors import EmptyScene, TooFewPoints
from .registration import RegistrationTransform, apply_registration

T_C = 0.7
T_D = 6.0
LOESS_SPAN = 0.05


@dataclass(frozen=True)
class GroupConfig:
    t_c: float = T_C
    t_d: float = T_D

    def __post_init__(self):
        if not 0.0 < self.t_c <= 1.0:
            raise ValueError("t_c must lie in (0, 1]")
        if not self.t_d > 0:
            raise ValueError("t_d must be positive")


@dataclass(frozen=True)
class Group:
    members: tuple
    i_l: int
    i_d: float | None
    centre: tuple

    def to_dict(self) -> dict:
        return {"members": list(self.members), "i_l": self.i_l, "i_d": self.i_d,
                "centre": list(self.centre)}


@dataclass(frozen=True)
class FrameGroups:
    frame_index: int
    i_n: int
    g_n: int
    groups: tuple
    dropped: int = 0          # detections at or above the horizon
    camera_id: str = ""
    clip_id: str = ""
    timestamp: object = None

    def to_dict(self) -> dict:
        from .pipeline.detections import format_timestamp

        return {
            "type": "frame",
            "camera_id": self.camera_id,
            "clip_id": self.clip_id,
            "frame_index": self.frame_index,
            "timestamp": format_timestamp(self.timestamp) if self.timestamp is not None else None,
            "i_n": self.i_n,
            "g_n": self.g_n,
            "dropped": self.dropped,
            "groups": [g.to_dict() for g in self.groups],
        }


@dataclass(frozen=True)
class SceneMetrics:
    max_groups_per_frame: int
    min_group_distance: float | None
    mean_group_distance: float | None
    frames: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "type": "scene",
            "max_groups_per_frame": self.max_groups_per_frame,
            "min_group_distance": self.min_group_distance,
            "mean_group_distance": self.mean_group_distance,
            "frames": len(self.frames),
        }


# --------------------------------------------------------------------------
# union-find

class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        a, b = self.find(i), self.find(j)
        if a == b:
            return
        if self.rank[a] < self.rank[b]:
            a, b = b, a
        self.parent[b] = a
        if self.rank[a] == self.rank[b]:
            self.rank[a] += 1

    def labels(self) -> np.ndarray:
        """Component labels numbered by first appearance."""
        seen = {}
        out = np.empty(len(self.parent), dtype=np.int64)
        for i in range(len(self.parent)):
            out[i] = seen.setdefault(self.find(i), len(seen))
        return out


def partition(points, t_d: float) -> np.ndarray:
    """Component label per input point of the ``<= t_d`` Delaunay graph.

    Labels are numbered by first appearance in the input; duplicates
    share a label.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64)
    tri = delaunay(pts)
    uf = UnionFind(len(tri.points))
    lengths = tri.edge_lengths()
    for (i, j), d in zip(tri.edges.tolist(), lengths.tolist()):
        if d <= t_d:
            uf.union(i, j)
    vertex_label = np.array([uf.find(i) for i in range(len(tri.points))], dtype=np.int64)
    raw = vertex_label[tri.index]
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    return rank[inverse.ravel()]


def _mean_pair_distance(p: np.ndarray) -> float | None:
    if len(p) < 2:
        return None
    i, j = np.triu_indices(len(p), k=1)
    d = p[i] - p[j]
    return float(np.hypot(d[:, 0], d[:, 1]).mean())


def groups_from_points(points, t_d: float):
    """Group records for BNG points in input order."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    labels = partition(pts, t_d)
    out = []
    for g in range(int(labels.max()) + 1 if len(labels) else 0):
        members = np.flatnonzero(labels == g)
        p = pts[members]
        centre = p.mean(axis=0)
        out.append(Group(tuple(int(m) for m in members), len(members), _mean_pair_distance(p),
                         (float(centre[0]), float(centre[1]))))
    return tuple(out)


# --------------------------------------------------------------------------
# detections to groups

def ground_pixel(det) -> tuple:
    """Bottom centre of the bounding box, the person's foot point."""
    x, y, w, h = det.bbox
    return (x + w / 2.0, y + h)


def ground_point(det, cam: CameraModel, reg: RegistrationTransform) -> np.ndarray:
    """BNG position of a detection's foot point."""
    from .calibration import image_to_world

    return apply_registration(reg, image_to_world(cam, np.array(ground_pixel(det))))


def _map_feet(dets, cam, reg):
    """Vectorised foot mapping; returns (bng points, kept mask)."""
    if not dets:
        return np.zeros((0, 2)), np.zeros(0, dtype=bool)
    uv = np.array([ground_pixel(d) for d in dets], dtype=float)
    hom = np.column_stack([uv, np.ones(len(uv))]) @ cam.H_inv.T
    ok = (uv[:, 1] - cam.v0 >= HORIZON_MARGIN) & (hom[:, 2] > 0)
    plane = hom[ok, :2] / hom[ok, 2:]
    return apply_registration(reg, plane), ok


def detect_groups(frame, cam: CameraModel, reg: RegistrationTransform,
                  config: GroupConfig | None = None) -> FrameGroups:
    """Groups among the confident people of one frame.

    Detections whose foot point is not below the horizon are dropped and
    counted in ``dropped``. Member indices refer to the retained people in
    detection order.
    """
    config = config or GroupConfig()
    people = [d for d in frame.detections if d.cls == "person" and d.confidence >= config.t_c]
    pts, ok = _map_feet(people, cam, reg)
    groups = groups_from_points(pts, config.t_d)
    return FrameGroups(frame.frame_index, len(pts), len(groups), groups, int((~ok).sum()),
                       frame.camera_id, frame.clip_id, frame.timestamp)


def scene_metrics(frames) -> SceneMetrics:
    """Scene summary over frames.

    For frames with at least two groups the group centres are
    triangulated; the scene minimum is the least such edge over frames and
    the scene mean averages the per-frame mean edge lengths.
    """
    frames = tuple(frames)
    if not frames:
        raise EmptyScene("no frames")
    minima, means = [], []
    for fg in frames:
        if fg.g_n < 2:
            continue
        tri = delaunay(np.array([g.centre for g in fg.groups]))
        # coincident centres are merged by the triangulation; each extra
        # copy contributes a zero-length edge to its representative
        lengths = np.concatenate([tri.edge_lengths(), np.zeros(fg.g_n - len(tri.points))])
        if lengths.size == 0:
            continue
        minima.append(float(lengths.min()))
        means.append(float(lengths.mean()))
    return SceneMetrics(max(fg.g_n for fg in frames),
                        min(minima) if minima else None,
                        float(np.mean(means)) if means else None,
                        frames)


def metrics_jsonl(frames, scene: SceneMetrics, extra: dict | None = None) -> str:
    """One JSON line per frame followed by the scene summary line."""
    lines = [json.dumps(fg.to_dict(), sort_keys=True) for fg in frames]
    summary = scene.to_dict()
    if extra:
        summary.update(extra)
    lines.append(json.dumps(summary, sort_keys=True))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# smoothing

def loess_smooth(x, y=None, span: float = LOESS_SPAN) -> np.ndarray:
    """Local linear regression over the ``ceil(span n)`` nearest points.

    Accepts ``(x, y)`` arrays or a single sequence of pairs. Tricube
    weights are scaled by the largest distance in each window; a window
    with no spread in x falls back to the weighted mean.
    """
    if y is None:
        xy = np.asarray(x, dtype=float).reshape(-1, 2)
        x, y = xy[:, 0], xy[:, 1]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if not 0.0 < span <= 1.0:
        raise ValueError("span must lie in (0, 1]")
    if n < 2:
        raise TooFewPoints("need at least 2 points")
    k = math.ceil(span * n)
    if k < 2:
        raise TooFewPoints(f"span {span} keeps {k} point(s) per window; need 2")
    out = np.empty(n)
    for i in range(n):
        dist = np.abs(x - x[i])
        idx = np.argsort(dist, kind="stable")[:k]
        d = dist[idx]
        dmax = d[-1]
        w = (1.0 - (d / dmax) ** 3) ** 3 if dmax > 0 else np.ones(k)
        dx = x[idx] - x[i]
        yy = y[idx]
        s0 = w.sum()
        if s0 <= 0:
            out[i] = yy.mean()
            continue
        # centred weighted least squares stays accurate for clustered x
        xbar, ybar = (w * dx).sum() / s0, (w * yy).sum() / s0
        cx = dx - xbar
        sxx = (w * cx * cx).sum()
        if sxx <= 1e-12 * (w * dx * dx).sum() or sxx == 0:
            out[i] = ybar
        else:
            out[i] = ybar - xbar * (w * cx * (yy - ybar)).sum() / sxx
    return out
