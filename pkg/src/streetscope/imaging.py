"""Grayscale frames, Canny edges and Hough line extraction.

Frames are 8-bit grayscale held as ``(height, width)`` uint8 arrays. The
edge detector and the line extractor are written for small, noisy
traffic-camera frames (352x288 class) and are deterministic.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DecodeError, DimensionError

MIN_SIDE = 16

# Hough defaults tuned for 352x288-class feeds.
RHO_RES = 1.0
THETA_RES = math.pi / 180.0
MIN_VOTES = 30
MIN_LENGTH = 20.0
MAX_GAP = 4.0

ANGLE_SPLIT = math.radians(30.0)
HORIZON_FRACTION = 0.25


@dataclass(frozen=True, eq=False)
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise DimensionError(f"expected a 2-D pixel array, got shape {px.shape}")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise DecodeError("pixel values outside 0..255")
            px = px.astype(np.uint8)
        h, w = px.shape
        if w < MIN_SIDE or h < MIN_SIDE:
            raise DimensionError(f"image {w}x{h} is below {MIN_SIDE}x{MIN_SIDE}")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def data(self) -> bytes:
        """Row-major intensities, ``width * height`` bytes."""
        return self.pixels.tobytes()

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "GrayImage":
        if len(data) != width * height:
            raise DimensionError(f"expected {width * height} bytes, got {len(data)}")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width))

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True)
class CannyParams:
    """Canny settings. ``None`` thresholds are derived per image."""

    gaussian_sigma: float = 1.0
    low_threshold: float | None = None
    high_threshold: float | None = None
    contrast_factors: tuple = (1.0,)

    def __post_init__(self):
        if not self.gaussian_sigma > 0:
            raise ValueError("gaussian_sigma must be positive")
        lo, hi = self.low_threshold, self.high_threshold
        if (lo is None) != (hi is None):
            raise ValueError("give both thresholds or neither")
        if lo is not None and not 0 < lo < hi:
            raise ValueError("need 0 < low_threshold < high_threshold")
        factors = tuple(float(c) for c in self.contrast_factors)
        if not factors or any(c <= 0 for c in factors):
            raise ValueError("contrast_factors must be non-empty and positive")
        object.__setattr__(self, "contrast_factors", factors)


@dataclass(frozen=True, eq=False)
class EdgeMap:
    """Boolean edge mask.

    ``offsets`` optionally holds a per-pixel ``(du, dv)`` sub-pixel
    displacement of the gradient peak; line fitting uses it when present.
    """

    edge: np.ndarray
    offsets: np.ndarray | None = field(default=None, repr=False)

    @property
    def width(self) -> int:
        return self.edge.shape[1]

    @property
    def height(self) -> int:
        return self.edge.shape[0]

    def __eq__(self, other):
        if not isinstance(other, EdgeMap):
            return NotImplemented
        return np.array_equal(self.edge, other.edge)

    __hash__ = None

    def to_image(self) -> GrayImage:
        return GrayImage(np.where(self.edge, 255, 0).astype(np.uint8))


@dataclass(frozen=True)
class LineSegment:
    """Image segment in (u, v) pixel coordinates, v pointing down."""

    p_start: tuple
    p_end: tuple
    support: int = 0
    angle: float = field(init=False)
    length: float = field(init=False)

    def __post_init__(self):
        p0 = (float(self.p_start[0]), float(self.p_start[1]))
        p1 = (float(self.p_end[0]), float(self.p_end[1]))
        du, dv = p1[0] - p0[0], p1[1] - p0[1]
        length = math.hypot(du, dv)
        if not length > 0:
            raise ValueError("degenerate segment")
        angle = math.atan2(dv, du) % math.pi
        if angle >= math.pi:
            angle = 0.0
        object.__setattr__(self, "p_start", p0)
        object.__setattr__(self, "p_end", p1)
        object.__setattr__(self, "angle", angle)
        object.__setattr__(self, "length", length)

    def homogeneous(self) -> np.ndarray:
        """Line coefficients ``(a, b, c)`` with ``a u + b v + c = 0``."""
        return np.cross([*self.p_start, 1.0], [*self.p_end, 1.0])


@dataclass(frozen=True)
class OrthogonalLineSets:
    road_edges: list
    road_perpendiculars: list


# --------------------------------------------------------------------------
# file I/O

_PGM_HEADER = re.compile(rb"\AP5(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def load_image(path) -> GrayImage:
    """Read a binary PGM (P5, maxval 255) or an 8-bit grayscale PNG."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"P5":
        m = _PGM_HEADER.match(raw)
        if m is None:
            raise DecodeError(f"{path}: malformed PGM header")
        w, h, maxval = (int(g) for g in m.groups())
        if maxval != 255:
            raise DecodeError(f"{path}: unsupported PGM maxval {maxval}")
        body = raw[m.end():]
        if len(body) < w * h:
            raise DecodeError(f"{path}: truncated PGM body")
        if w < MIN_SIDE or h < MIN_SIDE:
            raise DimensionError(f"{path}: image {w}x{h} is below {MIN_SIDE}x{MIN_SIDE}")
        return GrayImage.from_bytes(w, h, body[: w * h])
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(path)
    raise DecodeError(f"{path}: neither P5 PGM nor PNG")


def _load_png(path) -> GrayImage:
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            if im.mode != "L":
                raise DecodeError(f"{path}: PNG mode {im.mode!r} is not 8-bit grayscale")
            px = np.asarray(im, dtype=np.uint8)
    except DecodeError:
        raise
    except Exception as exc:  # Pillow raises a zoo of types on corrupt data
        raise DecodeError(f"{path}: {exc}") from exc
    h, w = px.shape
    if w < MIN_SIDE or h < MIN_SIDE:
        raise DimensionError(f"{path}: image {w}x{h} is below {MIN_SIDE}x{MIN_SIDE}")
    return GrayImage(px)


def write_pgm(path, img: GrayImage) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.data)


# --------------------------------------------------------------------------
# Canny

_SOBEL_U = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)
_SOBEL_V = _SOBEL_U.T
# diagonal responses rescaled to the Sobel gain of 8 per unit gradient
_DIAG_GAIN = 8.0 / (6.0 * math.sqrt(2.0))
_SOBEL_DOWN_RIGHT = np.array([[-2, -1, 0], [-1, 0, 1], [0, 1, 2]], dtype=float) * _DIAG_GAIN
_SOBEL_UP_RIGHT = np.array([[0, 1, 2], [-1, 0, 1], [-2, -1, 0]], dtype=float) * _DIAG_GAIN

# (row, col) neighbour offsets along each quantised gradient direction
_NMS_OFFSETS = ((0, 1), (1, 1), (1, 0), (-1, 1))


def gradients(pixels: np.ndarray, sigma: float):
    """Smoothed gradient magnitude and quantised direction index (0..3).

    Directions are 0: +u, 1: down-right, 2: +v, 3: up-right. The image is
    shifted to a zero minimum first so that a global intensity offset
    leaves every downstream value bit-identical.
    """
    img = pixels.astype(np.float64)
    img -= img.min()
    smooth = ndimage.gaussian_filter(img, sigma, mode="nearest")
    gu = ndimage.correlate(smooth, _SOBEL_U, mode="nearest")
    gv = ndimage.correlate(smooth, _SOBEL_V, mode="nearest")
    gdr = np.abs(ndimage.correlate(smooth, _SOBEL_DOWN_RIGHT, mode="nearest"))
    gur = np.abs(ndimage.correlate(smooth, _SOBEL_UP_RIGHT, mode="nearest"))
    magnitude = np.hypot(gu, gv)
    # strongest of the four directional responses picks the NMS direction
    au, av = np.abs(gu), np.abs(gv)
    direction = np.zeros(magnitude.shape, dtype=np.int8)
    best = au
    for d, resp in ((1, gdr), (2, av), (3, gur)):
        better = resp > best
        direction[better] = d
        best = np.where(better, resp, best)
    return magnitude, direction


def non_max_suppression(magnitude: np.ndarray, direction: np.ndarray) -> np.ndarray:
    h, w = magnitude.shape
    padded = np.pad(magnitude, 1)
    keep = np.zeros_like(magnitude, dtype=bool)
    for d, (dr, dc) in enumerate(_NMS_OFFSETS):
        ahead = padded[1 + dr:h + 1 + dr, 1 + dc:w + 1 + dc]
        behind = padded[1 - dr:h + 1 - dr, 1 - dc:w + 1 - dc]
        # asymmetric tie-break thins two-pixel plateaus to one pixel
        keep |= (direction == d) & (magnitude > ahead) & (magnitude >= behind)
    keep &= magnitude > 0
    keep[0, :] = keep[-1, :] = keep[:, 0] = keep[:, -1] = False
    return np.where(keep, magnitude, 0.0)


def default_thresholds(thin_magnitude: np.ndarray):
    nz = thin_magnitude[thin_magnitude > 0]
    if nz.size == 0:
        return None
    high = float(np.percentile(nz, 90))
    return 0.4 * high, high


def hysteresis(thin_magnitude: np.ndarray, low: float, high: float) -> np.ndarray:
    strong = thin_magnitude >= high
    candidate = thin_magnitude >= low
    labels, n = ndimage.label(candidate, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros_like(candidate)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


def peak_offsets(magnitude: np.ndarray, direction: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Sub-pixel ``(du, dv)`` of the magnitude peak along the NMS direction.

    Evaluated at the ``mask`` pixels, which must not touch the border; a
    parabola through the pixel and its two neighbours gives the vertex and
    the shift is clamped to half a step. Returns an ``(n, 2)`` array in
    ``np.nonzero(mask)`` order.
    """
    r, c = np.nonzero(mask)
    steps = np.array(_NMS_OFFSETS)[direction[r, c]]
    dr, dc = steps[:, 0], steps[:, 1]
    centre = magnitude[r, c]
    ahead = magnitude[r + dr, c + dc]
    behind = magnitude[r - dr, c - dc]
    curv = ahead - 2.0 * centre + behind
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(curv < 0, 0.5 * (behind - ahead) / curv, 0.0)
    t = np.clip(t, -0.5, 0.5)
    return np.column_stack([t * dc, t * dr])


def _canny_single(pixels: np.ndarray, params: CannyParams):
    magnitude, direction = gradients(pixels, params.gaussian_sigma)
    thin = non_max_suppression(magnitude, direction)
    if params.low_threshold is None:
        thresholds = default_thresholds(thin)
        if thresholds is None:
            return np.zeros(pixels.shape, dtype=bool), None
        low, high = thresholds
    else:
        low, high = params.low_threshold, params.high_threshold
    return hysteresis(thin, low, high), (magnitude, direction)


def canny(img: GrayImage, params: CannyParams | None = None) -> EdgeMap:
    """Canny edge map, unioned over the configured contrast gains."""
    params = params or CannyParams()
    edges = np.zeros(img.pixels.shape, dtype=bool)
    offsets = np.zeros(img.pixels.shape + (2,))
    for gain in params.contrast_factors:
        if gain == 1.0:
            px = img.pixels
        else:
            px = np.clip(np.rint(img.pixels * gain), 0, 255).astype(np.uint8)
        found, grad = _canny_single(px, params)
        new = found & ~edges
        if new.any():
            offsets[new] = peak_offsets(*grad, new)
        edges |= found
    return EdgeMap(edges, offsets)


# --------------------------------------------------------------------------
# Hough

def _fit_line(pts: np.ndarray):
    """Total least-squares line through ``pts``: centroid and unit direction."""
    centre = pts.mean(axis=0)
    d = pts - centre
    sxx = float(d[:, 0] @ d[:, 0])
    syy = float(d[:, 1] @ d[:, 1])
    sxy = float(d[:, 0] @ d[:, 1])
    phi = 0.5 * math.atan2(2.0 * sxy, sxx - syy)
    return centre, np.array([math.cos(phi), math.sin(phi)])


def _runs(t: np.ndarray, max_gap: float):
    """Split sorted positions into index ranges with gaps <= max_gap."""
    breaks = np.flatnonzero(np.diff(t) > max_gap) + 1
    starts = np.concatenate([[0], breaks])
    stops = np.concatenate([breaks, [len(t)]])
    return list(zip(starts, stops))


_DEAD_CELL = -(1 << 40)


def hough_lines(edges: EdgeMap, rho_res: float = RHO_RES, theta_res: float = THETA_RES,
                min_votes: int = MIN_VOTES, min_length: float = MIN_LENGTH,
                max_gap: float = MAX_GAP) -> list:
    """Extract line segments from an edge map.

    A (rho, theta) accumulator is voted by every edge pixel. The strongest
    cell is turned into maximal collinear runs of the pixels lying within
    ``rho_res`` of its line (gaps of at most ``max_gap``), each run is
    refined by a total least-squares fit, and the pixels of accepted runs
    are withdrawn from the accumulator. This repeats until no cell holds
    ``min_votes`` votes. Processing order is fully deterministic.
    """
    if not (rho_res > 0 and theta_res > 0):
        raise ValueError("resolutions must be positive")
    rows, cols = np.nonzero(edges.edge)
    if rows.size == 0:
        return []
    pix = np.column_stack([cols, rows]).astype(np.float64)
    pts = pix if edges.offsets is None else pix + edges.offsets[rows, cols]
    n_theta = max(1, int(round(math.pi / theta_res)))
    thetas = np.arange(n_theta) * (math.pi / n_theta)
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    rho_max = math.hypot(edges.width, edges.height)
    n_rho = int(math.ceil(2 * rho_max / rho_res)) + 1
    # float32 / int32 keep the (pixels x angles) vote table cheap
    trig = (np.vstack([cos_t, sin_t]) / rho_res).astype(np.float32)
    rho = pix.astype(np.float32) @ trig
    # shifted positive, so truncation after +0.5 rounds to the nearest cell
    rho += np.float32(rho_max / rho_res + 0.5)
    cells = rho.astype(np.int32)
    cells += (np.arange(n_theta, dtype=np.int32) * n_rho)[None, :]
    size = n_theta * n_rho
    acc = np.bincount(cells.ravel(), minlength=size)
    alive = np.ones(len(pts), dtype=bool)
    segments = []

    while True:
        best = int(np.argmax(acc))
        if acc[best] < min_votes:
            break
        ti, ri = divmod(best, n_rho)
        normal = np.array([cos_t[ti], sin_t[ti]])
        rho = ri * rho_res - rho_max
        idx = np.flatnonzero(alive)
        near = idx[np.abs(pix[idx] @ normal - rho) <= rho_res]
        accepted = []
        if near.size >= 2:
            centre, direction = _fit_line(pts[near])
            # re-gather around the refined line so the run is not clipped by
            # the accumulator's angular quantisation
            nrm = np.array([-direction[1], direction[0]])
            # pixels already claimed by an earlier line still bridge gaps,
            # so a crossing does not cut this line in two
            near = np.flatnonzero(np.abs((pts - centre) @ nrm) <= rho_res)
            t = (pts[near] - centre) @ direction
            order = np.argsort(t, kind="stable")
            near, t = near[order], t[order]
            for a, b in _runs(t, max_gap):
                run = near[a:b][alive[near[a:b]]]
                if run.size < min_votes:
                    continue
                span = (pts[run] - centre) @ direction
                if span.max() - span.min() < min_length:
                    continue
                seg = _segment_from_run(pts, pix, run, rho_res, min_votes, min_length)
                if seg is not None:
                    accepted.append((seg, run))
        if not accepted:
            acc[best] = _DEAD_CELL
            continue
        for seg, _ in accepted:
            segments.append(seg)
        used = np.concatenate([run for _, run in accepted])
        alive[used] = False
        np.subtract.at(acc, cells[used].ravel(), 1)
    return segments


def _segment_from_run(pts, pix, run, rho_res, min_votes, min_length):
    centre, direction = _fit_line(pts[run])
    nrm = np.array([-direction[1], direction[0]])
    # support is counted on the pixel centres themselves
    on_line = run[(np.abs((pts[run] - centre) @ nrm) <= rho_res)
                  & (np.abs((pix[run] - centre) @ nrm) <= rho_res)]
    if on_line.size < min_votes:
        return None
    t = (pts[on_line] - centre) @ direction
    lo, hi = float(t.min()), float(t.max())
    if hi - lo < min_length:
        return None
    p0 = centre + lo * direction
    p1 = centre + hi * direction
    return LineSegment(tuple(p0), tuple(p1), support=int(on_line.size))


def split_orthogonal_sets(lines, horizon_band: float, angle_split: float = ANGLE_SPLIT) -> OrthogonalLineSets:
    """Classify segments into road edges and road perpendiculars.

    Near-horizontal segments (within ``angle_split`` of the image
    horizontal) are perpendiculars; segments whose endpoints both sit above
    row ``horizon_band`` are dropped.
    """
    if not 0 < angle_split < math.pi / 2:
        raise ValueError("angle_split must lie in (0, pi/2)")
    edges, perps = [], []
    for seg in lines:
        if seg.p_start[1] < horizon_band and seg.p_end[1] < horizon_band:
            continue
        tilt = min(seg.angle, math.pi - seg.angle)
        (perps if tilt <= angle_split else edges).append(seg)
    return OrthogonalLineSets(road_edges=edges, road_perpendiculars=perps)


def default_horizon_band(height: int) -> float:
    return HORIZON_FRACTION * height
