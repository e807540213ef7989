"""Scene drift monitoring: SSIM against a reference and kernel PELT.

A reference frame is averaged from the first week of footage, every day's
noon frame is scored against it, and the resulting similarity series is
segmented with an exact penalised change-point search.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, NoUsableFrames, SeriesTooShort
from .imaging import GrayImage

MIN_SEGMENT = 2
ERRONEOUS_STD = 2.0
MAX_CHANGE_POINTS = 3
MAX_DIFF_STD = 0.05
REFERENCE_DAYS = 7

_PRUNE_TOL = 1e-9


@dataclass(frozen=True)
class SsimParams:
    window: int = 8
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 3:
            raise ValueError("window must be an integer >= 3")
        if not (self.k1 > 0 and self.k2 > 0 and self.dynamic_range > 0):
            raise ValueError("k1, k2 and the dynamic range must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


@dataclass(frozen=True, eq=False)
class SimilaritySeries:
    camera_id: str
    timestamps: tuple
    values: np.ndarray

    def __post_init__(self):
        ts = list(self.timestamps)
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if len(self.values) != len(ts):
            raise ValueError("one value per timestamp")

    def __len__(self):
        return len(self.timestamps)


@dataclass(frozen=True)
class ChangePoint:
    index: int
    timestamp: object = None


@dataclass(frozen=True)
class StabilityStatus:
    camera_id: str
    state: str                      # stable | drifting | excluded
    change_points: tuple
    variability: float
    unstable_intervals: tuple = ()  # (start, end or None) pairs, end exclusive

    def is_unstable(self, when) -> bool:
        """True if ``when`` (date or datetime) falls in a rejected period."""
        if self.state == "excluded":
            return True
        day = when.date() if isinstance(when, datetime) else when
        for start, end in self.unstable_intervals:
            if day >= start and (end is None or day < end):
                return True
        return False

    def to_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "change_points": [{"index": cp.index, "date": _iso(cp.timestamp)} for cp in self.change_points],
            "state": self.state,
            "variability": self.variability,
            "unstable_intervals": [[_iso(a), _iso(b)] for a, b in self.unstable_intervals],
        }

    @classmethod
    def from_dict(cls, d: dict):
        cps = tuple(ChangePoint(int(c["index"]), _parse_day(c.get("date"))) for c in d.get("change_points", []))
        intervals = tuple((_parse_day(a), _parse_day(b)) for a, b in d.get("unstable_intervals", []))
        return cls(str(d["camera_id"]), str(d["state"]), cps, float(d["variability"]), intervals)


def _iso(day):
    return None if day is None else day.isoformat()


def _parse_day(s):
    return None if s is None else date.fromisoformat(s)


# --------------------------------------------------------------------------
# SSIM

def _window_sums(a: np.ndarray, win: int) -> np.ndarray:
    """Exact integer sums over every ``win x win`` window (stride 1)."""
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.int64)
    s[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    return s[win:, win:] - s[:-win, win:] - s[win:, :-win] + s[:-win, :-win]


def ssim_map(x: GrayImage, y: GrayImage, params: SsimParams | None = None) -> np.ndarray:
    """Per-window SSIM with uniform weights and unbiased moments."""
    params = params or SsimParams()
    a = np.asarray(getattr(x, "pixels", x))
    b = np.asarray(getattr(y, "pixels", y))
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    win = int(params.window)
    if min(a.shape) < win:
        raise DimensionMismatch(f"images smaller than the {win}x{win} window")
    a = a.astype(np.int64)
    b = b.astype(np.int64)
    n = win * win
    sa, sb = _window_sums(a, win), _window_sums(b, win)
    saa, sbb, sab = _window_sums(a * a, win), _window_sums(b * b, win), _window_sums(a * b, win)
    # integer numerators keep x<->y symmetry and ssim(x, x) == 1 exact
    norm = float(n * (n - 1))
    var_a = (n * saa - sa * sa) / norm
    var_b = (n * sbb - sb * sb) / norm
    cov = (n * sab - sa * sb) / norm
    mu_a, mu_b = sa / n, sb / n
    c1, c2 = params.c1, params.c2
    num = (2.0 * (mu_a * mu_b) + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(x: GrayImage, y: GrayImage, params: SsimParams | None = None) -> float:
    """Mean SSIM over all stride-1 windows."""
    return float(ssim_map(x, y, params).mean())


# --------------------------------------------------------------------------
# reference and series

def is_erroneous(img: GrayImage, min_std: float = ERRONEOUS_STD) -> bool:
    """Blank or frozen frames (pixel std below ``min_std``)."""
    return float(np.std(img.pixels.astype(float))) < min_std


def build_reference(frames, window_days: int = REFERENCE_DAYS) -> GrayImage:
    """Pixelwise mean of the usable frames in the first ``window_days`` days.

    ``frames`` holds ``(timestamp, GrayImage)`` pairs; the window starts at
    the earliest timestamp. Frames with pixel std below 2 are dropped.
    """
    frames = list(frames)
    if not frames:
        raise NoUsableFrames("no frames supplied")
    start = min(_as_datetime(t) for t, _ in frames)
    end = start + timedelta(days=window_days)
    keep = [img for t, img in frames if _as_datetime(t) < end and not is_erroneous(img)]
    if not keep:
        raise NoUsableFrames("every frame in the reference window is erroneous")
    shapes = {img.pixels.shape for img in keep}
    if len(shapes) > 1:
        raise DimensionMismatch(f"reference frames differ in shape: {sorted(shapes)}")
    total = np.zeros(keep[0].pixels.shape, dtype=np.int64)
    for img in keep:
        total += img.pixels
    # integer round-half-up of total / count
    count = len(keep)
    mean = (2 * total + count) // (2 * count)
    return GrayImage(mean.astype(np.uint8))


def _as_datetime(t):
    if isinstance(t, datetime):
        return t
    if isinstance(t, date):
        return datetime(t.year, t.month, t.day)
    raise TypeError(f"not a date/datetime: {t!r}")


def similarity_series(reference: GrayImage, daily_frames, params: SsimParams | None = None,
                      camera_id: str = "") -> SimilaritySeries:
    """Score each day's frame against ``reference``.

    ``daily_frames`` is a list of ``(day, GrayImage)`` with at most one
    frame per day; days without a frame are simply absent.
    """
    items = sorted(((_day(t), img) for t, img in daily_frames), key=lambda p: p[0])
    days = [d for d, _ in items]
    if len(set(days)) != len(days):
        raise ValueError("more than one frame for a day")
    values = [ssim(reference, img, params) for _, img in items]
    return SimilaritySeries(camera_id, tuple(days), np.array(values, dtype=float))


def _day(t):
    return t.date() if isinstance(t, datetime) else t


def select_daily_frames(frames, noon: int = 12):
    """First frame at or after ``noon`` on each day, as ``(day, image)``."""
    by_day = {}
    for t, img in sorted(frames, key=lambda p: _as_datetime(p[0])):
        t = _as_datetime(t)
        if t.hour >= noon and t.date() not in by_day:
            by_day[t.date()] = img
    return sorted(by_day.items())


# --------------------------------------------------------------------------
# kernel change points

def median_gamma(y: np.ndarray) -> float:
    """Inverse median pairwise squared distance, 1 when that median is 0."""
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        return 1.0
    i, j = np.triu_indices(len(y), k=1)
    med = float(np.median((y[i] - y[j]) ** 2))
    return 1.0 / med if med > 0 else 1.0


class KernelCost:
    """RBF kernel segment cost with O(1) evaluation from 2-D prefix sums.

    ``cost(a, b)`` scores ``y[a:b]`` as the sum of self-similarities
    (each 1) minus the mean block similarity sum.
    """

    def __init__(self, y, gamma: float):
        y = np.asarray(y, dtype=float)
        self.n = len(y)
        gram = np.exp(-gamma * (y[:, None] - y[None, :]) ** 2)
        s = np.zeros((self.n + 1, self.n + 1))
        s[1:, 1:] = gram.cumsum(axis=0).cumsum(axis=1)
        self._s = s

    def block(self, a: int, b: int) -> float:
        s = self._s
        return s[b, b] - s[a, b] - s[b, a] + s[a, a]

    def cost(self, a: int, b: int) -> float:
        return float(b - a) - self.block(a, b) / (b - a)

    def costs_to(self, starts: np.ndarray, b: int) -> np.ndarray:
        """Vector of ``cost(a, b)`` for every ``a`` in ``starts``."""
        s = self._s
        blk = s[b, b] - s[starts, b] - s[b, starts] + s[starts, starts]
        length = (b - starts).astype(float)
        return length - blk / length


def _resolve(series, gamma):
    y = np.asarray(getattr(series, "values", series), dtype=float)
    if isinstance(gamma, str):
        if gamma != "median":
            raise ValueError(f"unknown gamma rule {gamma!r}")
        gamma = median_gamma(y)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return y, float(gamma)


def default_penalty(n: int) -> float:
    return 2.0 * math.log(max(n, 2))


def _check(y, penalty, min_segment):
    if len(y) < 2 * min_segment:
        raise SeriesTooShort(f"series of length {len(y)} is shorter than {2 * min_segment}")
    if not penalty > 0:
        raise ValueError("penalty must be positive")


def _backtrack(last, n):
    bounds = []
    t = n
    while t > 0:
        t = int(last[t])
        if t > 0:
            bounds.append(t)
    return bounds[::-1]


def pelt_boundaries(y, penalty: float, gamma: float, min_segment: int = MIN_SEGMENT):
    """Exact penalised segmentation of ``y``; returns ``(boundaries, objective)``.

    Minimises the summed kernel cost plus ``penalty`` per change point.
    Candidates are pruned with K = 0; because a segment must hold at least
    ``min_segment`` samples, a candidate found prunable at ``t`` is only
    dropped ``min_segment`` steps later.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    _check(y, penalty, min_segment)
    cost = KernelCost(y, gamma)
    F = np.full(n + 1, np.inf)
    F[0] = -penalty
    last = np.zeros(n + 1, dtype=np.int64)
    alive = np.zeros(0, dtype=np.int64)
    pending = {}
    for t in range(min_segment, n + 1):
        new = t - min_segment
        if new == 0 or new >= min_segment:
            alive = np.append(alive, new)
        drop = pending.pop(t, None)
        if drop is not None:
            alive = alive[~np.isin(alive, drop)]
        vals = F[alive] + cost.costs_to(alive, t)
        k = int(np.argmin(vals + penalty))
        F[t] = vals[k] + penalty
        last[t] = alive[k]
        prunable = alive[vals > F[t] + _PRUNE_TOL * max(1.0, abs(F[t]))]
        if prunable.size:
            pending[t + min_segment] = prunable
    return _backtrack(last, n), float(F[n])


def optimal_partition(y, penalty: float, gamma: float, min_segment: int = MIN_SEGMENT):
    """Unpruned O(n^2) dynamic programme on the same objective."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    _check(y, penalty, min_segment)
    cost = KernelCost(y, gamma)
    F = np.full(n + 1, np.inf)
    F[0] = -penalty
    last = np.zeros(n + 1, dtype=np.int64)
    for t in range(min_segment, n + 1):
        cand = np.array([a for a in range(0, t - min_segment + 1) if a == 0 or a >= min_segment])
        vals = F[cand] + cost.costs_to(cand, t)
        k = int(np.argmin(vals + penalty))
        F[t] = vals[k] + penalty
        last[t] = cand[k]
    return _backtrack(last, n), float(F[n])


def segmentation_objective(y, boundaries, penalty: float, gamma: float) -> float:
    """Summed kernel cost of the segmentation plus the change-point penalty."""
    cost = KernelCost(y, gamma)
    edges = [0, *boundaries, len(y)]
    return float(sum(cost.cost(a, b) for a, b in zip(edges, edges[1:])) + penalty * len(boundaries))


def pelt(series, penalty: float | None = None, gamma="median", min_segment: int = MIN_SEGMENT):
    """Change points of a similarity series (or plain array).

    ``penalty`` defaults to ``2 log n``; ``gamma`` may be a number or
    ``"median"`` for the median heuristic.
    """
    y, g = _resolve(series, gamma)
    if penalty is None:
        penalty = default_penalty(len(y))
    bounds, _ = pelt_boundaries(y, penalty, g, min_segment)
    stamps = getattr(series, "timestamps", None)
    return [ChangePoint(b, stamps[b] if stamps is not None else None) for b in bounds]


def classify_stability(series, change_points, max_cp: int = MAX_CHANGE_POINTS,
                       max_std: float = MAX_DIFF_STD, rereferenced=()) -> StabilityStatus:
    """Stable, drifting (one change) or excluded (many changes / noisy).

    Variability is the population std of the day-to-day SSIM differences.
    Unstable intervals run from the first change point to the next manual
    re-reference date (open-ended without one).
    """
    values = np.asarray(getattr(series, "values", series), dtype=float)
    diffs = np.diff(values)
    variability = float(np.std(diffs)) if diffs.size else 0.0
    cps = tuple(change_points)
    if len(cps) >= max_cp or variability > max_std:
        state = "excluded"
    elif len(cps) == 1:
        state = "drifting"
    else:
        state = "stable"
    intervals = []
    if cps and cps[0].timestamp is not None:
        start = _day(cps[0].timestamp)
        after = sorted(_day(r) for r in rereferenced if _day(r) > start)
        intervals.append((start, after[0] if after else None))
    return StabilityStatus(getattr(series, "camera_id", ""), state, cps, variability, tuple(intervals))


# --------------------------------------------------------------------------
# files

def series_to_csv(series: SimilaritySeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["camera_id", "date", "ssim"])
    for d, v in zip(series.timestamps, series.values):
        w.writerow([series.camera_id, d.isoformat(), repr(float(v))])
    return buf.getvalue()


def series_from_csv(text: str) -> SimilaritySeries:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        return SimilaritySeries("", (), np.zeros(0))
    cams = {r["camera_id"] for r in rows}
    if len(cams) != 1:
        raise ValueError("series file mixes cameras")
    return SimilaritySeries(cams.pop(), tuple(date.fromisoformat(r["date"]) for r in rows),
                            np.array([float(r["ssim"]) for r in rows]))


def save_status(path, status: StabilityStatus) -> None:
    Path(path).write_text(json.dumps(status.to_dict(), indent=2, sort_keys=True) + "\n")


def load_status(path) -> StabilityStatus:
    return StabilityStatus.from_dict(json.loads(Path(path).read_text()))


_STAMP = re.compile(r"(\d{4}-\d{2}-\d{2})(?:[T_ ](\d{2})[:\-]?(\d{2})[:\-]?(\d{2}))?")


def timestamp_from_name(name: str):
    """Parse ``YYYY-MM-DD`` with an optional ``THHMMSS`` part from a file name."""
    m = _STAMP.search(name)
    if m is None:
        return None
    day = date.fromisoformat(m.group(1))
    if m.group(2) is None:
        return datetime(day.year, day.month, day.day)
    return datetime(day.year, day.month, day.day, int(m.group(2)), int(m.group(3)), int(m.group(4)))
