"""Mechanical checks of the dual mesh and the discrete one-form index sum."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dual import DualMesh, boundary_cycle
from .metric import DELTA_REL, Ellipse, EllipseSide, MetricField, Spd2, eval_metric, ellipse_contains
from .predicates import SegmentRelation, convex_hull, orient2d, segment_intersection, signed_area

AREA_REL = 1e-12
GENERIC_REL = 1e-9
GUARD_REL = 1e-6
PROBES = 64
DIRECTION_RETRIES = 1000


@dataclass
class CheckRecord:
    """One report line.  A failing record always names a concrete witness."""

    name: str
    status: str  # "pass", "fail" or "skipped"
    reason: str = ""
    witness: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.status == "fail"


def _pass(name, **margins) -> CheckRecord:
    return CheckRecord(name, "pass", margins=margins)


def _fail(name, witness, **margins) -> CheckRecord:
    if not witness:
        raise ValueError("a failing check needs a witness")
    return CheckRecord(name, "fail", witness=witness, margins=margins)


def skipped(name, reason) -> CheckRecord:
    return CheckRecord(name, "skipped", reason=reason)


# --- empty circum-ellipse ----------------------------------------------------


@dataclass
class FaceEce:
    face: int
    passed: bool
    inside: list[int]
    marginal: list[int]
    margin: float  # min over outside sites of value / radius^2 - 1
    low_confidence: bool = False


def ece_for_cycle(cycle, witness_pos, mu, sites, field: MetricField, delta_rel: float = DELTA_REL) -> tuple[list, list, float]:
    """Sites inside / on the band of the witness ellipse, and the margin."""
    pts = np.asarray(sites, dtype=float)
    e = Ellipse(tuple(witness_pos), eval_metric(field.extended(), witness_pos), mu * mu)
    members = set(cycle)
    inside, marginal = [], []
    margin = math.inf
    for s in range(len(pts)):
        if s in members:
            continue
        side = ellipse_contains(e, pts[s], delta_rel)
        if side is EllipseSide.INSIDE:
            inside.append(s)
        elif side is EllipseSide.BOUNDARY:
            marginal.append(s)
        margin = min(margin, e.value(pts[s]) / e.radius_sq - 1.0)
    return inside, marginal, margin


def check_ece(mesh: DualMesh, sites, field: MetricField, delta_rel: float = DELTA_REL, grid_h: float | None = None) -> list[FaceEce]:
    """Per face: no site off the cycle lies strictly inside the witness ellipse.

    Unrefined witnesses widen the band to a few grid cells relative to the
    radius (``grid_h``) and are marked low confidence.
    """
    out = []
    for k, f in enumerate(mesh.faces):
        w = f.witness
        d = delta_rel
        low = not w.refined
        if low:
            h = grid_h if grid_h is not None else 0.0
            d = max(delta_rel, 4.0 * h / w.mu) if w.mu and math.isfinite(w.mu) else 1.0
        if not math.isfinite(w.mu) or w.mu <= 0:
            out.append(FaceEce(k, False, [], [], math.nan, True))
            continue
        inside, marginal, margin = ece_for_cycle(f.cycle, w.position, w.mu, sites, field, d)
        out.append(FaceEce(k, not inside, inside, marginal, margin, low))
    return out


def check_ece_triangles(mesh: DualMesh, sites, field: MetricField, delta_rel: float = DELTA_REL) -> list[FaceEce]:
    """Fan triangles with their parent face's witness."""
    out = []
    for t, tri in enumerate(mesh.triangles):
        w = mesh.faces[mesh.triangle_face[t]].witness
        if not w.refined or not math.isfinite(w.mu):
            out.append(FaceEce(t, False, [], [], math.nan, True))
            continue
        inside, marginal, margin = ece_for_cycle(tri, w.position, w.mu, sites, field, delta_rel)
        out.append(FaceEce(t, not inside, inside, marginal, margin))
    return out


def ece_record(faces: list[FaceEce], tris: list[FaceEce], mesh: DualMesh) -> CheckRecord:
    bad = [r for r in faces if not r.passed]
    bad_t = [r for r in tris if not r.passed]
    margins = {
        "faces": len(faces),
        "triangles": len(tris),
        "marginal": sum(len(r.marginal) for r in faces),
        "low_confidence": sum(r.low_confidence for r in faces),
        "min_margin": min((r.margin for r in faces if math.isfinite(r.margin)), default=math.nan),
    }
    if bad or bad_t:
        r = bad[0] if bad else bad_t[0]
        cyc = mesh.faces[r.face].cycle if bad else mesh.triangles[r.face]
        witness = {"face": "-".join(map(str, cyc)), "site": r.inside[0] if r.inside else "none"}
        return _fail("ece", witness, failed_faces=len(bad), failed_triangles=len(bad_t), **margins)
    return _pass("ece", **margins)


# --- nondegeneracy, convexity --------------------------------------------------


def check_nondegenerate(mesh: DualMesh, domain_area: float) -> list[tuple[str, float, bool]]:
    """``(cycle, area, ok)`` for every face and fan triangle."""
    a_min = AREA_REL * domain_area
    out = []
    polys = [f.cycle for f in mesh.faces] + list(mesh.triangles)
    for cyc in polys:
        a = signed_area(mesh.points[list(cyc)])
        out.append(("-".join(map(str, cyc)), a, abs(a) > a_min))
    return out


def check_face_convexity(mesh: DualMesh) -> list[tuple[int, int | None]]:
    """``(face, reflex_vertex)`` with None when every turn is strictly clockwise."""
    out = []
    for k, f in enumerate(mesh.faces):
        cyc = f.cycle
        m = len(cyc)
        bad = None
        for t in range(m):
            if orient2d(mesh.points[cyc[t - 1]], mesh.points[cyc[t]], mesh.points[cyc[(t + 1) % m]]) != -1:
                bad = cyc[t]
                break
        out.append((k, bad))
    return out


# --- boundary versus hull ----------------------------------------------------------


@dataclass
class HullComparison:
    equal: bool
    boundary: set
    hull: set
    # hull chain refined through sites lying on hull segments
    hull_through_colinear: set
    only_colinear_difference: bool


def _on_open_segment(p, a, b) -> bool:
    if orient2d(a, b, p) != 0:
        return False
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1]) and \
        not (tuple(p) == tuple(a) or tuple(p) == tuple(b))


def check_boundary_equals_hull(mesh: DualMesh, sites) -> HullComparison:
    pts = np.asarray(sites, dtype=float)
    hull = convex_hull(pts)
    hull_edges = {tuple(sorted(e)) for e in hull.edges()}
    refined = set()
    n = len(hull.vertices)
    for t in range(n if n > 2 else 1):
        a, b = hull.vertices[t], hull.vertices[(t + 1) % n]
        on = [s for s in range(len(pts)) if _on_open_segment(pts[s], pts[a], pts[b])]
        d = pts[b] - pts[a]
        chain = [a] + sorted(on, key=lambda s: float((pts[s] - pts[a]) @ d)) + [b]
        refined |= {tuple(sorted((chain[k], chain[k + 1]))) for k in range(len(chain) - 1)}
    B = {tuple(e) for e in mesh.boundary_edges}
    return HullComparison(B == hull_edges, B, hull_edges, refined, B != hull_edges and B == refined)


# --- embedding ---------------------------------------------------------------------


def crossing_pairs(points, edges) -> list[tuple[tuple[int, int], tuple[int, int], SegmentRelation]]:
    """Edge pairs meeting anywhere other than a shared endpoint."""
    pts = np.asarray(points, dtype=float)
    edges = list(edges)
    if len(edges) < 2:
        return []
    e = np.asarray(edges)
    lo = np.minimum(pts[e[:, 0]], pts[e[:, 1]])
    hi = np.maximum(pts[e[:, 0]], pts[e[:, 1]])
    out = []
    for i in range(len(edges)):
        cand = np.flatnonzero(
            (lo[i + 1:, 0] <= hi[i, 0]) & (hi[i + 1:, 0] >= lo[i, 0])
            & (lo[i + 1:, 1] <= hi[i, 1]) & (hi[i + 1:, 1] >= lo[i, 1])
        ) + i + 1
        a, b = edges[i]
        for j in cand.tolist():
            c, d = edges[j]
            rel = segment_intersection((pts[a], pts[b]), (pts[c], pts[d]))
            shared = len({a, b} & {c, d}) > 0
            if rel is SegmentRelation.DISJOINT:
                continue
            if rel is SegmentRelation.SHARED_ENDPOINT and shared:
                continue
            out.append((edges[i], edges[j], rel))
    return out


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each probe in ``p`` (k, 2) to segment ab."""
    d = b - a
    L = float(d @ d)
    t = np.clip(((p - a) @ d) / L, 0.0, 1.0) if L > 0 else np.zeros(len(p))
    proj = a + t[:, None] * d
    return np.hypot(*(p - proj).T)


def probe_points(mesh: DualMesh, n: int = PROBES) -> np.ndarray:
    """Deterministic probes strictly inside the hull and off every drawn edge."""
    pts = mesh.points
    hull = convex_hull(pts)
    if hull.colinear:
        return np.empty((0, 2))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    xs = lo[0] + (np.arange(n) + 0.5) * (hi[0] - lo[0]) / n
    ys = lo[1] + (np.arange(n) + 0.5) * (hi[1] - lo[1]) / n
    X, Y = np.meshgrid(xs, ys)
    P = np.column_stack([X.ravel(), Y.ravel()])
    guard = GUARD_REL * float(np.hypot(*(hi - lo)))
    ring = pts[list(hull.vertices)]
    keep = np.ones(len(P), dtype=bool)
    # clockwise hull: interior lies strictly right of every edge
    for t in range(len(ring)):
        a, b = ring[t], ring[(t + 1) % len(ring)]
        cross = (b[0] - a[0]) * (P[:, 1] - a[1]) - (b[1] - a[1]) * (P[:, 0] - a[0])
        keep &= cross < 0
    for i, j in mesh.drawn_edges():
        keep &= _segment_distance(P, pts[i], pts[j]) > guard
    return P[keep]


def cover_counts(mesh: DualMesh, probes: np.ndarray) -> np.ndarray:
    """Number of fan triangles containing each probe (closed containment)."""
    counts = np.zeros(len(probes), dtype=np.int64)
    pts = mesh.points
    for a, b, c in mesh.triangles:
        A, B, C = pts[a], pts[b], pts[c]
        s1 = (B[0] - A[0]) * (probes[:, 1] - A[1]) - (B[1] - A[1]) * (probes[:, 0] - A[0])
        s2 = (C[0] - B[0]) * (probes[:, 1] - B[1]) - (C[1] - B[1]) * (probes[:, 0] - B[0])
        s3 = (A[0] - C[0]) * (probes[:, 1] - C[1]) - (A[1] - C[1]) * (probes[:, 0] - C[0])
        inside = ((s1 <= 0) & (s2 <= 0) & (s3 <= 0)) | ((s1 >= 0) & (s2 >= 0) & (s3 >= 0))
        counts += inside
    return counts


def check_embedding(mesh: DualMesh, n_probes: int = PROBES) -> CheckRecord:
    crossings = crossing_pairs(mesh.points, mesh.drawn_edges())
    if mesh.colinear or not mesh.triangles:
        if crossings:
            e, f, rel = crossings[0]
            return _fail("embedding", {"edge": "-".join(map(str, e)), "other": "-".join(map(str, f)), "relation": rel.value},
                         crossings=len(crossings))
        return _pass("embedding", crossings=0, probes=0)
    probes = probe_points(mesh, n_probes)
    counts = cover_counts(mesh, probes)
    if crossings:
        e, f, rel = crossings[0]
        return _fail("embedding", {"edge": "-".join(map(str, e)), "other": "-".join(map(str, f)), "relation": rel.value},
                     crossings=len(crossings), probes=len(probes))
    bad = np.flatnonzero(counts != 1)
    if len(bad):
        p = probes[bad[0]]
        return _fail("embedding", {"probe_x": float(p[0]), "probe_y": float(p[1]), "cover": int(counts[bad[0]])},
                     crossings=0, probes=len(probes), bad_probes=len(bad))
    return _pass("embedding", crossings=0, probes=len(probes))


def detect_foldovers(mesh: DualMesh) -> list[tuple[int, int]]:
    """Interior edges whose two triangles lie on the same side of the edge.

    Edges with more than two incident triangles are reported too; they can
    only arise from overlapping faces.
    """
    opp: dict[tuple[int, int], list[int]] = {}
    for a, b, c in mesh.triangles:
        for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
            opp.setdefault((min(u, v), max(u, v)), []).append(w)
    out = []
    for (u, v), ws in sorted(opp.items()):
        if len(ws) > 2:
            out.append((u, v))
        elif len(ws) == 2:
            s1 = orient2d(mesh.points[u], mesh.points[v], mesh.points[ws[0]])
            s2 = orient2d(mesh.points[u], mesh.points[v], mesh.points[ws[1]])
            if s1 == s2 and s1 != 0:
                out.append((u, v))
    return out


# --- one-forms and indices -------------------------------------------------------------


@dataclass
class OneForm:
    direction: tuple[float, float]
    xi: dict[tuple[int, int], float]


@dataclass
class IndexReport:
    vertex_index: dict[int, int]
    face_index: list[int]
    vertex_sc: dict[int, int]
    face_sc: list[int]

    @property
    def total(self) -> int:
        return sum(self.vertex_index.values()) + sum(self.face_index)


def _is_generic(points, edges, n) -> bool:
    for i, j in edges:
        d = points[i] - points[j]
        if abs(float(n @ d)) <= GENERIC_REL * float(np.hypot(*d)):
            return False
    return True


def pick_generic_direction(mesh: DualMesh, seed: int, candidates=None) -> np.ndarray:
    """Seeded unit vector not (nearly) orthogonal to any drawn edge.

    ``candidates`` are tried first, before the seeded random directions.
    """
    edges = mesh.drawn_edges()
    rng = np.random.default_rng(seed)
    tried = [np.asarray(c, dtype=float) / np.hypot(*c) for c in (candidates or [])]
    for n in tried:
        if _is_generic(mesh.points, edges, n):
            return n
    for _ in range(DIRECTION_RETRIES):
        a = rng.uniform(0.0, 2.0 * math.pi)
        n = np.array([math.cos(a), math.sin(a)])
        if _is_generic(mesh.points, edges, n):
            return n
    raise RuntimeError("no generic direction found within the retry budget")


def build_oneform(mesh: DualMesh, n) -> OneForm:
    n = np.asarray(n, dtype=float)
    z = mesh.points @ n
    xi = {}
    for i, j in mesh.drawn_edges():
        v = float(z[i] - z[j])
        if v == 0.0:
            raise ValueError(f"direction {tuple(n)} vanishes on edge ({i}, {j})")
        xi[(i, j)] = v
        xi[(j, i)] = -v
    return OneForm((float(n[0]), float(n[1])), xi)


def _sign_changes(values) -> int:
    s = [v > 0 for v in values]
    return sum(s[k] != s[k - 1] for k in range(len(s))) if len(s) > 1 else 0


def compute_indices(mesh: DualMesh, form: OneForm, on: str = "fan") -> IndexReport:
    """Indices ``1 - sc/2`` of vertices and faces; the outer face is excluded.

    ``on="fan"`` uses the fan triangulation, ``on="polygon"`` the faces as
    drawn.  Outgoing half-edges of a vertex are taken in angular order.
    """
    pts = mesh.points
    out_edges: dict[int, list[int]] = {}
    for i, j in form.xi:
        out_edges.setdefault(i, []).append(j)
    if on == "fan":
        cycles = list(mesh.triangles)
        edge_set = set(mesh.drawn_edges(with_fan=True))
    elif on == "polygon":
        cycles = [f.cycle for f in mesh.faces]
        edge_set = set(mesh.drawn_edges(with_fan=False))
    else:
        raise ValueError(f"unknown index mesh {on!r}")
    vidx, vsc = {}, {}
    for v in range(mesh.n_vertices):
        nbrs = [w for w in out_edges.get(v, []) if (min(v, w), max(v, w)) in edge_set]
        nbrs.sort(key=lambda w: math.atan2(pts[w][1] - pts[v][1], pts[w][0] - pts[v][0]))
        sc = _sign_changes([form.xi[(v, w)] for w in nbrs])
        if sc % 2:
            raise RuntimeError(f"odd sign-change count at vertex {v}")
        vsc[v] = sc
        vidx[v] = 1 - sc // 2
    fidx, fsc = [], []
    for cyc in cycles:
        m = len(cyc)
        sc = _sign_changes([form.xi[(cyc[t], cyc[(t + 1) % m])] for t in range(m)])
        if sc % 2:
            raise RuntimeError(f"odd sign-change count on face {cyc}")
        fsc.append(sc)
        fidx.append(1 - sc // 2)
    return IndexReport(vidx, fidx, vsc, fsc)


def interior_vertices(mesh: DualMesh) -> set[int]:
    bnd = set()
    for e in mesh.boundary_edges:
        bnd |= set(e)
    return set(range(mesh.n_vertices)) - bnd


# --- structure ---------------------------------------------------------------------


def check_simple_graph(mesh: DualMesh) -> CheckRecord:
    """No self-loops, no repeated edges, no face side used by more than two faces."""
    seen = set()
    for i, j in mesh.edges:
        if i == j:
            return _fail("dual_simple", {"self_loop": i})
        if (i, j) in seen:
            return _fail("dual_simple", {"multi_edge": f"{i}-{j}"})
        seen.add((i, j))
    for e, c in sorted(mesh.edge_faces().items()):
        if c > 2:
            return _fail("dual_simple", {"edge": f"{e[0]}-{e[1]}", "faces": c})
    cycles = [tuple(sorted(f.cycle)) for f in mesh.faces]
    if len(set(cycles)) != len(cycles):
        dup = next(c for c in cycles if cycles.count(c) > 1)
        return _fail("dual_simple", {"repeated_face": "-".join(map(str, dup))})
    return _pass("dual_simple", edges=len(mesh.edges), faces=len(mesh.faces))


def check_boundary_cycle(mesh: DualMesh) -> CheckRecord:
    if not mesh.faces:
        return skipped("boundary_cycle", "no faces")
    cyc = boundary_cycle(mesh)
    if cyc is None:
        return _fail("boundary_cycle", {"reason": "outer half-edges do not form one closed cycle"})
    return _pass("boundary_cycle", length=len(cyc))


@dataclass
class VerificationReport:
    records: list[CheckRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, rec: CheckRecord) -> CheckRecord:
        self.records.append(rec)
        return rec

    def get(self, name: str) -> CheckRecord | None:
        return next((r for r in self.records if r.name == name), None)

    @property
    def ok(self) -> bool:
        return not any(r.failed for r in self.records)
