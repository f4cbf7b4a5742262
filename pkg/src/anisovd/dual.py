"""Dual mesh of a discretised primal diagram, drawn with straight edges.

Faces come from refined Voronoi vertices (one face per vertex, sites in
clockwise order around it).  Edges are the face sides plus the site pairs
whose interface reaches the window border; the raw region adjacency of the
label raster is used as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .predicates import orient2d, signed_area
from .primal import (
    PrimalDiagram,
    VoronoiVertex,
    detect_orphans,
    interface_groups,
    refine_voronoi_vertex,
    order_face_cycle,
)


class StructuralError(RuntimeError):
    """The dual violates a structural property it must have."""


@dataclass
class DualFace:
    cycle: tuple[int, ...]
    witness: VoronoiVertex
    fan_apex: int | None = None
    tag: str = ""  # "orphan-covered" for faces over an orphan island


@dataclass
class DualMesh:
    points: np.ndarray
    edges: list[tuple[int, int]]
    faces: list[DualFace]
    boundary_edges: set[tuple[int, int]]
    triangles: list[tuple[int, int, int]] = field(default_factory=list)
    triangle_face: list[int] = field(default_factory=list)
    unsupported_premise: bool = False
    issues: list[str] = field(default_factory=list)
    degenerate_edges: set[tuple[int, int]] = field(default_factory=set)
    colinear: bool = False

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    def face_half_edges(self) -> dict[tuple[int, int], list[int]]:
        """Directed side ``(i, j)`` of each face cycle -> face indices."""
        out: dict[tuple[int, int], list[int]] = {}
        for k, f in enumerate(self.faces):
            m = len(f.cycle)
            for i in range(m):
                out.setdefault((f.cycle[i], f.cycle[(i + 1) % m]), []).append(k)
        return out

    def half_edges(self) -> dict[tuple[int, int], dict]:
        """Half-edge table: ``twin``, ``face`` (None on the outside), ``next``."""
        table: dict[tuple[int, int], dict] = {}
        for i, j in self.edges:
            table[(i, j)] = {"twin": (j, i), "face": None, "next": None}
            table[(j, i)] = {"twin": (i, j), "face": None, "next": None}
        for k, f in enumerate(self.faces):
            m = len(f.cycle)
            for t in range(m):
                he = (f.cycle[t], f.cycle[(t + 1) % m])
                if he in table:
                    table[he]["face"] = k
                    table[he]["next"] = (f.cycle[(t + 1) % m], f.cycle[(t + 2) % m])
        return table

    def drawn_edges(self, with_fan: bool = True) -> list[tuple[int, int]]:
        out = set(self.edges)
        if with_fan:
            for a, b, c in self.triangles:
                out |= {tuple(sorted(e)) for e in ((a, b), (b, c), (c, a))}
        return sorted(out)

    def edge_faces(self) -> dict[tuple[int, int], int]:
        count: dict[tuple[int, int], int] = {}
        for f in self.faces:
            m = len(f.cycle)
            for t in range(m):
                e = tuple(sorted((f.cycle[t], f.cycle[(t + 1) % m])))
                count[e] = count.get(e, 0) + 1
        return count


def _ordered(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def _covered_faces(pd: PrimalDiagram, sites, orphans) -> list[DualFace]:
    """Faces that an enclosed orphan island hides.

    The sites bordering the island are mutually adjacent around it; their
    common equidistant point lies under the island, so such a face cannot
    have an empty circum-ellipse.
    """
    faces = []
    lab = pd.lg.label
    for s, comps in orphans:
        for c in comps:
            if pd.component_border[c]:
                continue
            mask = pd.components == c
            ring = ndimage.binary_dilation(mask, structure=ndimage.generate_binary_structure(2, 1)) & ~mask
            around = sorted(set(np.unique(lab[ring]).tolist()) - {s})
            if len(around) < 3:
                continue
            ys, xs = np.nonzero(mask)
            g = pd.grid
            guess = (g.rect.x0 + (xs.mean() + 0.5) * g.hx, g.rect.y0 + (ys.mean() + 0.5) * g.hy)
            cyc = order_face_cycle(guess, tuple(around), sites)
            tri = cyc[:3]
            if orient2d(*sites[list(tri)]) == 0:
                continue
            vx = refine_voronoi_vertex(pd.lg.field, sites[list(tri)], guess, incident=tri)
            vx.closest = False
            cyc = order_face_cycle(vx.position, tuple(around), sites) if vx.refined else cyc
            witness = VoronoiVertex(vx.position, cyc, vx.mu, vx.residual, vx.refined, False, guess, vx.iterations)
            faces.append(DualFace(cyc, witness, tag="orphan-covered"))
    return faces


def build_dual(pd: PrimalDiagram, sites, strict: bool | None = None) -> DualMesh:
    """Dual mesh of ``pd``.

    ``strict`` (default: the primal is orphan-free) turns structural
    inconsistencies into a :class:`StructuralError`; otherwise they are
    recorded in ``issues`` and the mesh is marked as built on an unsupported
    premise.
    """
    sites = np.asarray(sites, dtype=float)
    orphans = detect_orphans(pd, sites)
    unsupported = bool(orphans)
    if strict is None:
        strict = not unsupported
    issues: list[str] = []

    faces: list[DualFace] = []
    for v in pd.vertices:
        if not v.refined:
            issues.append(f"unrefined vertex near {v.position} for sites {v.incident_sites}")
            continue
        faces.append(DualFace(tuple(v.incident_sites), v))
    if unsupported:
        faces.extend(_covered_faces(pd, sites, orphans))
    for pos, labs in pd.unresolved:
        issues.append(f"unresolved vertex cluster near ({pos[0]:.6g}, {pos[1]:.6g}) for sites {labs}")

    face_edges = set()
    for f in faces:
        m = len(f.cycle)
        face_edges |= {_ordered(f.cycle[t], f.cycle[(t + 1) % m]) for t in range(m)}
    grid_pairs = set(pd.edges)
    boundary = set(pd.unbounded_edges)
    edges = face_edges | boundary

    for pair in sorted(grid_pairs):
        if interface_groups(pd, pair) > 1:
            issues.append(f"interface of sites {pair} has {interface_groups(pd, pair)} components")
    # cross-check against raw region adjacency
    touch = pd.touch
    outside_sides = set()
    for f in faces:
        if f.witness.outside:
            m = len(f.cycle)
            outside_sides |= {_ordered(f.cycle[t], f.cycle[(t + 1) % m]) for t in range(m)}
    for pair in sorted(face_edges - grid_pairs - outside_sides):
        if touch is None or not np.any(touch[pair[0]] & touch[pair[1]]):
            issues.append(f"face side {pair} has no interface in the label raster")
    for pair in sorted(grid_pairs - edges):
        comps = pd.edges[pair]
        length = sum(len(c.segments) for c in comps)
        if length > 2:
            issues.append(f"interface {pair} ({length} segments) belongs to no face")

    mesh = DualMesh(
        points=sites,
        edges=sorted(edges),
        faces=faces,
        boundary_edges=boundary,
        unsupported_premise=unsupported,
        issues=issues,
        degenerate_edges=set(pd.degenerate_pairs),
        colinear=_all_colinear(sites),
    )
    if strict and issues:
        raise StructuralError("; ".join(issues))
    return mesh


def _all_colinear(sites) -> bool:
    pts = np.asarray(sites, dtype=float)
    if len(pts) < 3:
        return True
    a = pts[0]
    for k in range(1, len(pts)):
        if not np.array_equal(pts[k], a):
            b = pts[k]
            break
    else:
        return True
    return all(orient2d(a, b, c) == 0 for c in pts)


def fan_triangulate(face: DualFace, points) -> list[tuple[int, int, int]]:
    """Fan of ``m - 2`` triangles around the lowest-index site of the face."""
    cyc = face.cycle
    m = len(cyc)
    if m < 3:
        raise StructuralError(f"face {cyc} has fewer than 3 sites")
    pts = np.asarray(points, dtype=float)
    turns = {orient2d(pts[cyc[t - 1]], pts[cyc[t]], pts[cyc[(t + 1) % m]]) for t in range(m)}
    if len(turns) != 1 or 0 in turns:
        raise StructuralError(f"face {cyc} is not strictly convex")
    k = cyc.index(min(cyc))
    rot = cyc[k:] + cyc[:k]
    face.fan_apex = rot[0]
    return [(rot[0], rot[t], rot[t + 1]) for t in range(1, m - 1)]


def triangulate(mesh: DualMesh, strict: bool = True) -> DualMesh:
    """Fill ``mesh.triangles`` by fanning every face.

    Non-convex faces raise unless ``strict`` is false, in which case they are
    fanned anyway (so downstream checks can still locate the damage) and the
    problem is recorded.
    """
    tris, owner = [], []
    for k, f in enumerate(mesh.faces):
        try:
            fan = fan_triangulate(f, mesh.points)
        except StructuralError as exc:
            if strict:
                raise
            mesh.issues.append(str(exc))
            cyc = f.cycle
            if len(cyc) < 3:
                continue
            f.fan_apex = cyc[0]
            fan = [(cyc[0], cyc[t], cyc[t + 1]) for t in range(1, len(cyc) - 1)]
        tris.extend(fan)
        owner.extend([k] * len(fan))
    mesh.triangles = tris
    mesh.triangle_face = owner
    return mesh


def colinear_chain(sites) -> DualMesh:
    """Dual of a colinear site set: consecutive sites along the line."""
    pts = np.asarray(sites, dtype=float)
    if not _all_colinear(pts):
        raise ValueError("sites are not colinear")
    if len(pts) < 2:
        raise ValueError("need at least 2 sites")
    d = pts[np.argmax(np.hypot(*(pts - pts[0]).T))] - pts[0]
    t = (pts - pts[0]) @ d
    order = np.argsort(t, kind="stable").tolist()
    edges = sorted(_ordered(order[k], order[k + 1]) for k in range(len(order) - 1))
    return DualMesh(points=pts, edges=edges, faces=[], boundary_edges=set(edges), colinear=True)


def euler_characteristic(mesh: DualMesh) -> int:
    return mesh.n_vertices - len(mesh.edges) + len(mesh.faces)


def face_area(mesh: DualMesh, face: DualFace) -> float:
    return signed_area(mesh.points[list(face.cycle)])


def boundary_cycle(mesh: DualMesh) -> list[int] | None:
    """Outer boundary as one closed vertex cycle, or None if it is not one."""
    he = mesh.face_half_edges()
    outer = [(j, i) for (i, j) in he if (j, i) not in he]
    if not outer:
        return None
    nxt: dict[int, int] = {}
    for i, j in outer:
        if i in nxt:
            return None
        nxt[i] = j
    start = min(nxt)
    cyc = [start]
    cur = nxt[start]
    while cur != start:
        if cur not in nxt or len(cyc) > len(nxt):
            return None
        cyc.append(cur)
        cur = nxt[cur]
    return cyc if len(cyc) == len(nxt) else None


def dump_mesh(mesh: DualMesh, path) -> None:
    out = [f"v {x!r} {y!r}" for x, y in mesh.points.tolist()]
    out += ["l " + " ".join(str(i + 1) for i in e) for e in mesh.edges]
    out += ["f " + " ".join(str(i + 1) for i in f.cycle) for f in mesh.faces]
    out += ["b " + " ".join(str(i + 1) for i in e) for e in sorted(mesh.boundary_edges)]
    Path(path).write_text("\n".join(out) + "\n")


def load_mesh(path) -> DualMesh:
    pts, edges, faces, bnd = [], [], [], set()
    for ln in Path(path).read_text().splitlines():
        tok = ln.split()
        if not tok:
            continue
        if tok[0] == "v":
            pts.append((float(tok[1]), float(tok[2])))
        elif tok[0] == "l":
            edges.append(_ordered(int(tok[1]) - 1, int(tok[2]) - 1))
        elif tok[0] == "f":
            cyc = tuple(int(t) - 1 for t in tok[1:])
            faces.append(DualFace(cyc, VoronoiVertex((math.nan, math.nan), cyc, math.nan, math.inf, refined=False)))
        elif tok[0] == "b":
            bnd.add(_ordered(int(tok[1]) - 1, int(tok[2]) - 1))
    if not edges:
        es = set(bnd)
        for f in faces:
            m = len(f.cycle)
            es |= {_ordered(f.cycle[t], f.cycle[(t + 1) % m]) for t in range(m)}
        edges = sorted(es)
    return DualMesh(points=np.asarray(pts), edges=sorted(edges), faces=faces, boundary_edges=bnd)


def mesh_from_faces(points, cycles, boundary=None) -> DualMesh:
    """Small meshes for fixtures: faces given as vertex cycles."""
    pts = np.asarray(points, dtype=float)
    faces = []
    for cyc in cycles:
        faces.append(DualFace(tuple(cyc), VoronoiVertex((math.nan, math.nan), tuple(cyc), math.nan, math.inf, refined=False)))
    es = set()
    for f in faces:
        m = len(f.cycle)
        es |= {_ordered(f.cycle[t], f.cycle[(t + 1) % m]) for t in range(m)}
    if boundary is None:
        count: dict = {}
        for f in faces:
            m = len(f.cycle)
            for t in range(m):
                e = _ordered(f.cycle[t], f.cycle[(t + 1) % m])
                count[e] = count.get(e, 0) + 1
        boundary = {e for e, c in count.items() if c == 1}
    return DualMesh(points=pts, edges=sorted(es | set(boundary)), faces=faces, boundary_edges=set(boundary))
