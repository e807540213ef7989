"""Incremental Delaunay triangulation with exact predicates.

Bowyer-Watson insertion where the enclosing super-triangle is symbolic:
its apex is a single vertex at infinity, so hull edges carry "ghost"
triangles and no finite far-away vertices can distort the hull. Both
predicates use a floating-point filter with a rational fallback, so the
result is exact for any finite double input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

GHOST = -1

_EPS = 2.0 ** -53
_ORIENT_BOUND = (3.0 + 16.0 * _EPS) * _EPS
_INCIRCLE_BOUND = (10.0 + 96.0 * _EPS) * _EPS


def orient2d(ax, ay, bx, by, cx, cy) -> float:
    """Positive if a, b, c turn counter-clockwise, zero if collinear.

    The sign is exact; the magnitude is only meaningful when the float
    filter succeeds.
    """
    detl = (ax - cx) * (by - cy)
    detr = (ay - cy) * (bx - cx)
    det = detl - detr
    bound = _ORIENT_BOUND * (abs(detl) + abs(detr))
    if det > bound or -det > bound:
        return det
    ax, ay, bx, by, cx, cy = map(Fraction, (ax, ay, bx, by, cx, cy))
    exact = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx)
    return float((exact > 0) - (exact < 0))


def incircle(ax, ay, bx, by, cx, cy, dx, dy) -> float:
    """Positive if d lies inside the circle through counter-clockwise a, b, c."""
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    bc = bdx * cdy - cdx * bdy
    ca = cdx * ady - adx * cdy
    ab = adx * bdy - bdx * ady
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    det = alift * bc + blift * ca + clift * ab
    perm = ((abs(bdx * cdy) + abs(cdx * bdy)) * alift
            + (abs(cdx * ady) + abs(adx * cdy)) * blift
            + (abs(adx * bdy) + abs(bdx * ady)) * clift)
    bound = _INCIRCLE_BOUND * perm
    if det > bound or -det > bound:
        return det
    ax, ay, bx, by, cx, cy, dx, dy = map(Fraction, (ax, ay, bx, by, cx, cy, dx, dy))
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    exact = ((adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
             + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
             + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady))
    # only the sign is meaningful; a tiny rational could underflow a float
    return float((exact > 0) - (exact < 0))


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Delaunay triangulation of the distinct input points.

    ``points`` are the distinct coordinates (first-occurrence order),
    ``index`` maps every input point to its row in ``points`` and
    ``multiplicity`` counts the inputs merged into each row. ``edges``
    and ``triangles`` index ``points``.
    """

    points: np.ndarray
    edges: np.ndarray
    triangles: np.ndarray
    index: np.ndarray = field(repr=False)
    multiplicity: np.ndarray = field(repr=False)

    def edge_lengths(self) -> np.ndarray:
        if len(self.edges) == 0:
            return np.zeros(0)
        d = self.points[self.edges[:, 0]] - self.points[self.edges[:, 1]]
        return np.hypot(d[:, 0], d[:, 1])


def _unique(points: np.ndarray):
    """Merge exact duplicates keeping first-occurrence order."""
    _, first, inverse, counts = np.unique(points, axis=0, return_index=True,
                                          return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return points[first[order]], rank[inverse], counts[order]


def _chain(points: np.ndarray) -> np.ndarray:
    """Edges joining consecutive points in lexicographic order."""
    if len(points) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    order = np.lexsort((points[:, 1], points[:, 0]))
    e = np.column_stack([order[:-1], order[1:]])
    return np.sort(e, axis=1)


class _Mesh:
    """Triangles keyed by id; each directed edge maps to the triangle holding it."""

    def __init__(self, xs, ys):
        self.x = xs
        self.y = ys
        self.tris = {}
        self.edge = {}
        self._next = 0
        self.last = None

    def add(self, a, b, c):
        # ghosts are stored with the infinite vertex last
        if a == GHOST:
            a, b, c = b, c, a
        elif b == GHOST:
            a, b, c = c, a, b
        t = self._next
        self._next += 1
        self.tris[t] = (a, b, c)
        self.edge[(a, b)] = t
        self.edge[(b, c)] = t
        self.edge[(c, a)] = t
        if c != GHOST:
            self.last = t
        return t

    def remove(self, t):
        a, b, c = self.tris.pop(t)
        for e in ((a, b), (b, c), (c, a)):
            if self.edge.get(e) == t:
                del self.edge[e]

    def in_circle(self, t, px, py) -> bool:
        a, b, c = self.tris[t]
        x, y = self.x, self.y
        if c == GHOST:
            # open half-plane beyond the hull edge a->b, plus the open edge
            o = orient2d(x[a], y[a], x[b], y[b], px, py)
            if o > 0:
                return True
            if o < 0:
                return False
            return (min(x[a], x[b]) <= px <= max(x[a], x[b]) and min(y[a], y[b]) <= py <= max(y[a], y[b])
                    and (px, py) != (x[a], y[a]) and (px, py) != (x[b], y[b]))
        return incircle(x[a], y[a], x[b], y[b], x[c], y[c], px, py) > 0

    def locate(self, px, py):
        """Walk from the last real triangle to one whose circle holds p."""
        x, y = self.x, self.y
        t = self.last
        if t not in self.tris:
            t = next(k for k, tri in self.tris.items() if tri[2] != GHOST)
        for _ in range(4 * len(self.tris) + 8):
            a, b, c = self.tris[t]
            if c == GHOST:
                return t
            moved = False
            for u, v in ((a, b), (b, c), (c, a)):
                if orient2d(x[u], y[u], x[v], y[v], px, py) < 0:
                    t = self.edge[(v, u)]
                    moved = True
                    break
            if not moved:
                return t
        # walk failed to settle (cannot happen on a Delaunay mesh); scan
        for t in self.tris:
            if self.in_circle(t, px, py):
                return t
        raise RuntimeError("point location failed")

    def insert(self, p):
        px, py = self.x[p], self.y[p]
        start = self.locate(px, py)
        cavity = {start}
        stack = [start]
        while stack:
            t = stack.pop()
            a, b, c = self.tris[t]
            for u, v in ((a, b), (b, c), (c, a)):
                n = self.edge.get((v, u))
                if n is not None and n not in cavity and self.in_circle(n, px, py):
                    cavity.add(n)
                    stack.append(n)
        boundary = []
        for t in cavity:
            a, b, c = self.tris[t]
            for u, v in ((a, b), (b, c), (c, a)):
                n = self.edge.get((v, u))
                if n is None or n not in cavity:
                    boundary.append((u, v))
        for t in cavity:
            self.remove(t)
        for u, v in boundary:
            self.add(u, v, p)


def delaunay(points) -> Triangulation:
    """Delaunay triangulation of 2-D points.

    Exact duplicates are merged first. Fewer than three distinct points, or
    all of them collinear, give no triangles and the chain of consecutive
    points in sorted order as edges.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        empty = np.zeros((0, 2), dtype=np.int64)
        return Triangulation(pts, empty, np.zeros((0, 3), dtype=np.int64),
                             np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    uniq, index, mult = _unique(pts)
    n = len(uniq)
    xs = uniq[:, 0].tolist()
    ys = uniq[:, 1].tolist()
    # insertion in lexicographic order keeps the walk short
    order = np.lexsort((uniq[:, 1], uniq[:, 0])).tolist()
    seed = None
    if n >= 3:
        a, b = order[0], order[1]
        for c in order[2:]:
            if orient2d(xs[a], ys[a], xs[b], ys[b], xs[c], ys[c]) != 0:
                seed = (a, b, c)
                break
    if seed is None:
        return Triangulation(uniq, _chain(uniq), np.zeros((0, 3), dtype=np.int64), index, mult)

    a, b, c = seed
    if orient2d(xs[a], ys[a], xs[b], ys[b], xs[c], ys[c]) < 0:
        b, c = c, b
    mesh = _Mesh(xs, ys)
    mesh.add(a, b, c)
    mesh.add(b, a, GHOST)
    mesh.add(c, b, GHOST)
    mesh.add(a, c, GHOST)
    for p in order:
        if p not in seed:
            mesh.insert(p)

    tris = sorted(tuple(_rotate_min(t)) for t in mesh.tris.values() if GHOST not in t)
    edges = sorted({(min(u, v), max(u, v)) for t in tris for u, v in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))})
    return Triangulation(uniq, np.array(edges, dtype=np.int64).reshape(-1, 2),
                         np.array(tris, dtype=np.int64).reshape(-1, 3), index, mult)


def _rotate_min(t):
    k = t.index(min(t))
    return t[k:] + t[:k]
