import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisovd.predicates import (
    Containment,
    SegmentRelation,
    convex_hull,
    is_simple_polygon,
    orient2d,
    point_in_face,
    segment_intersection,
    signed_area,
)

coord = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord)


def exact_orient(a, b, c) -> int:
    ax, ay, bx, by, cx, cy = map(Fraction, (*a, *b, *c))
    d = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (d > 0) - (d < 0)


@pytest.mark.parametrize("c, expected", [((0, 1), 1), ((2, 0), 0), ((0, -1), -1)])
def test_orient_examples(c, expected):
    assert orient2d((0, 0), (1, 0), c) == expected


@given(point, point, point)
def test_orient_matches_rational_arithmetic(a, b, c):
    assert orient2d(a, b, c) == exact_orient(a, b, c)


@given(point, point, point)
def test_orient_antisymmetric(a, b, c):
    assert orient2d(a, b, c) == -orient2d(b, a, c) == orient2d(b, c, a)


def test_orient_near_degenerate():
    # classic float trap: points nearly on y = x, off by one ulp
    a, b = (0.5, 0.5), (12.0, 12.0)
    for k in range(-4, 5):
        c = (np.nextafter(24.0, 24.0 + k) if k else 24.0, 24.0)
        assert orient2d(a, b, c) == exact_orient(a, b, c)


def test_orient_rejects_nan():
    with pytest.raises(ValueError):
        orient2d((0, 0), (1, float("nan")), (0, 1))


def test_hull_square_and_center():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    h = convex_hull(sq)
    assert sorted(h.vertices) == [0, 1, 2, 3]
    assert convex_hull(sq + [(0.5, 0.5)]).vertices == h.vertices


def test_hull_clockwise():
    h = convex_hull([(0, 0), (1, 0), (1, 1), (0, 1)])
    ring = [[(0, 0), (1, 0), (1, 1), (0, 1)][i] for i in h.vertices]
    assert signed_area(ring) < 0


def test_hull_colinear_reports_extremes():
    h = convex_hull([(0, 0), (2, 2), (1, 1), (3, 3)])
    assert h.colinear and set(h.vertices) == {0, 3}


def brute_hull(pts) -> set[int]:
    """A point is a hull vertex iff it is not in any closed triangle of others
    and not on the open segment between two others."""
    out = set()
    n = len(pts)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        covered = False
        for a, b, c in itertools.combinations(others, 3):
            o = [exact_orient(pts[a], pts[b], pts[i]), exact_orient(pts[b], pts[c], pts[i]), exact_orient(pts[c], pts[a], pts[i])]
            if (min(o) >= 0 or max(o) <= 0) and exact_orient(pts[a], pts[b], pts[c]) != 0:
                covered = True
                break
        if not covered:
            for a, b in itertools.combinations(others, 2):
                if exact_orient(pts[a], pts[b], pts[i]) == 0 and \
                        min(pts[a][0], pts[b][0]) <= pts[i][0] <= max(pts[a][0], pts[b][0]) and \
                        min(pts[a][1], pts[b][1]) <= pts[i][1] <= max(pts[a][1], pts[b][1]):
                    covered = True
                    break
        if not covered:
            out.add(i)
    return out


@pytest.mark.parametrize("seed", range(5))
def test_hull_matches_brute_force(seed):
    pts = [tuple(p) for p in np.random.default_rng(seed).uniform(0, 1, (20, 2))]
    assert set(convex_hull(pts).vertices) == brute_hull(pts)


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=3, max_size=12, unique=True))
def test_hull_matches_brute_force_on_lattice(pts):
    h = convex_hull(pts)
    if h.colinear:
        return
    assert set(h.vertices) == brute_hull(pts)


@pytest.mark.parametrize(
    "s, t, rel",
    [
        (((0, 0), (1, 1)), ((0, 1), (1, 0)), SegmentRelation.PROPER_CROSSING),
        (((0, 0), (1, 0)), ((1, 0), (2, 0)), SegmentRelation.SHARED_ENDPOINT),
        (((0, 0), (2, 0)), ((1, 0), (3, 0)), SegmentRelation.OVERLAPPING),
        (((0, 0), (1, 0)), ((0, 1), (1, 1)), SegmentRelation.DISJOINT),
    ],
)
def test_segment_examples(s, t, rel):
    assert segment_intersection(s, t) is rel
    assert segment_intersection(t, s) is rel


TRI = [(0, 0), (1, 0), (0, 1)]


@pytest.mark.parametrize("p, where", [((1 / 3, 1 / 3), Containment.INSIDE), ((0.5, 0), Containment.BOUNDARY),
                                      ((5, 5), Containment.OUTSIDE)])
def test_point_in_face_examples(p, where):
    assert point_in_face(p, TRI) is where


def test_point_in_face_rejects_bowtie():
    bowtie = [(0, 0), (1, 1), (1, 0), (0, 1)]
    assert not is_simple_polygon(bowtie)
    with pytest.raises(ValueError):
        point_in_face((0.5, 0.2), bowtie)
