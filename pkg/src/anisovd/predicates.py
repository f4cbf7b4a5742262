"""Planar predicates and constructions.

``orient2d`` uses a floating-point filter with an exact rational fallback, so
sign decisions never depend on rounding.  Everything else in this module is
built on top of it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

Point = tuple[float, float]

# Shewchuk's first-stage error bound for the orientation determinant.
_EPS = np.finfo(float).eps / 2.0
_ORIENT_BOUND = (3.0 + 16.0 * _EPS) * _EPS


def _as_point(p) -> Point:
    x, y = float(p[0]), float(p[1])
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValueError(f"non-finite point {p!r}")
    return x, y


def orient2d(a, b, c) -> int:
    """Sign of twice the signed area of triangle ``abc``.

    +1 for a counter-clockwise turn, -1 for clockwise, 0 for colinear.
    """
    ax, ay = _as_point(a)
    bx, by = _as_point(b)
    cx, cy = _as_point(c)
    detleft = (ax - cx) * (by - cy)
    detright = (ay - cy) * (bx - cx)
    det = detleft - detright
    if detleft > 0.0:
        if detright <= 0.0:
            return _sign(det)
        detsum = detleft + detright
    elif detleft < 0.0:
        if detright >= 0.0:
            return _sign(det)
        detsum = -detleft - detright
    else:
        return _sign(det)
    if abs(det) >= _ORIENT_BOUND * detsum:
        return _sign(det)
    return _orient2d_exact(ax, ay, bx, by, cx, cy)


def _orient2d_exact(ax, ay, bx, by, cx, cy) -> int:
    ax, ay, bx, by, cx, cy = map(Fraction, (ax, ay, bx, by, cx, cy))
    return _sign((ax - cx) * (by - cy) - (ay - cy) * (bx - cx))


def _sign(v) -> int:
    return (v > 0) - (v < 0)


def signed_area(poly: Sequence) -> float:
    """Shoelace area; positive for counter-clockwise vertex order."""
    pts = np.asarray(poly, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class HullChain:
    """Clockwise convex hull as indices into the input point list.

    ``colinear`` is set when every input point lies on one line; the chain
    then holds the two extreme points only.
    """

    vertices: tuple[int, ...]
    colinear: bool = False

    def edges(self) -> set[frozenset[int]]:
        n = len(self.vertices)
        if n < 2:
            return set()
        if n == 2:
            return {frozenset(self.vertices)}
        return {
            frozenset((self.vertices[i], self.vertices[(i + 1) % n]))
            for i in range(n)
        }


def convex_hull(points: Sequence) -> HullChain:
    """Monotone-chain hull, clockwise, with colinear boundary points dropped."""
    pts = [_as_point(p) for p in points]
    distinct = {p for p in pts}
    if len(distinct) < 2:
        raise ValueError("convex hull needs at least 2 distinct points")
    # keep the lowest index among duplicates
    first: dict[Point, int] = {}
    for i, p in enumerate(pts):
        first.setdefault(p, i)
    order = sorted(first, key=lambda p: (p[0], p[1]))

    def half(seq):
        chain: list[Point] = []
        for p in seq:
            # pop while the last turn is not strictly clockwise
            while len(chain) >= 2 and orient2d(chain[-2], chain[-1], p) >= 0:
                chain.pop()
            chain.append(p)
        return chain

    upper = half(order)
    lower = half(reversed(order))
    ring = upper[:-1] + lower[:-1]
    if len(ring) <= 2:
        ends = (first[order[0]], first[order[-1]])
        return HullChain(vertices=ends, colinear=True)
    return HullChain(vertices=tuple(first[p] for p in ring))


class SegmentRelation(enum.Enum):
    DISJOINT = "disjoint"
    SHARED_ENDPOINT = "shared-endpoint-only"
    PROPER_CROSSING = "proper-crossing"
    OVERLAPPING = "overlapping"


def _on_segment(p: Point, a: Point, b: Point) -> bool:
    # assumes p, a, b colinear
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def segment_intersection(s, t) -> SegmentRelation:
    """Classify how two closed segments ``s=(a,b)`` and ``t=(c,d)`` meet."""
    a, b = _as_point(s[0]), _as_point(s[1])
    c, d = _as_point(t[0]), _as_point(t[1])
    if a == b or c == d:
        raise ValueError("degenerate segment")
    o1 = orient2d(a, b, c)
    o2 = orient2d(a, b, d)
    o3 = orient2d(c, d, a)
    o4 = orient2d(c, d, b)

    if o1 == 0 and o2 == 0:
        # colinear: project on the dominant axis and compare intervals
        axis = 0 if a[0] != b[0] else 1
        lo1, hi1 = sorted((a[axis], b[axis]))
        lo2, hi2 = sorted((c[axis], d[axis]))
        lo, hi = max(lo1, lo2), min(hi1, hi2)
        if lo < hi:
            return SegmentRelation.OVERLAPPING
        if lo == hi:
            return SegmentRelation.SHARED_ENDPOINT
        return SegmentRelation.DISJOINT

    if o1 * o2 < 0 and o3 * o4 < 0:
        return SegmentRelation.PROPER_CROSSING

    shared = {a, b} & {c, d}
    touches = (
        (o1 == 0 and _on_segment(c, a, b))
        or (o2 == 0 and _on_segment(d, a, b))
        or (o3 == 0 and _on_segment(a, c, d))
        or (o4 == 0 and _on_segment(b, c, d))
    )
    if not touches:
        return SegmentRelation.DISJOINT
    if shared:
        # a shared endpoint plus a non-colinear partner cannot touch elsewhere
        return SegmentRelation.SHARED_ENDPOINT
    # an endpoint lies in the interior of the other segment
    return SegmentRelation.PROPER_CROSSING


class Containment(enum.Enum):
    INSIDE = "inside"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


def is_simple_polygon(face: Sequence) -> bool:
    pts = [_as_point(p) for p in face]
    n = len(pts)
    if n < 3 or len(set(pts)) != n:
        return False
    for i in range(n):
        s = (pts[i], pts[(i + 1) % n])
        for j in range(i + 1, n):
            t = (pts[j], pts[(j + 1) % n])
            rel = segment_intersection(s, t)
            adjacent = j == i + 1 or (i == 0 and j == n - 1)
            if adjacent:
                if rel is not SegmentRelation.SHARED_ENDPOINT:
                    return False
            elif rel is not SegmentRelation.DISJOINT:
                return False
    return True


def point_in_face(p, face: Sequence, check_simple: bool = True) -> Containment:
    """Point-in-polygon with exact boundary detection (crossing number)."""
    q = _as_point(p)
    pts = [_as_point(v) for v in face]
    if check_simple and not is_simple_polygon(pts):
        raise ValueError("face is not a simple polygon")
    n = len(pts)
    inside = False
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        o = orient2d(a, b, q)
        if o == 0 and _on_segment(q, a, b):
            return Containment.BOUNDARY
        if (a[1] > q[1]) != (b[1] > q[1]):
            # edge straddles the horizontal ray; crossing is to the right of q
            # iff q is on the left of the upward-directed edge
            up = o if b[1] > a[1] else -o
            if up > 0:
                inside = not inside
    return Containment.INSIDE if inside else Containment.OUTSIDE
