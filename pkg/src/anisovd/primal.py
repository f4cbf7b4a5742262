"""Discretised primal diagram: labelling, extraction, vertex refinement, checks.

Cells of a regular grid are labelled with their nearest site under ``D``
(evaluated at the cell center).  Regions, interfaces between regions, and
vertex candidates are read off the label raster; vertex candidates are then
refined to numerical precision with Newton's method on the continuous field.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .domain import Grid
from .metric import MetricField, OutOfDomainError, quad_form
from .predicates import orient2d

TAU_TIE = 1e-9
BLOB_MIN_CELLS = 4
REFINE_MAX_ITER = 50
REFINE_TOL = 1e-10
MERGE_TOL_CELLS = 1e-4
FRONT_CANDIDATES = 3
REACH_CELLS = 16.0
# beyond-window vertices farther than this many window diameters are dropped
FAR_LIMIT = 1e6
MAX_NEIGHBOURHOOD_LABELS = 7

FOUR = ndimage.generate_binary_structure(2, 1)
EIGHT = ndimage.generate_binary_structure(2, 2)
# triangulated-grid neighbourhood (valence 6), as (diy, dix)
SIX = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (-1, -1))


class ResolutionError(RuntimeError):
    """The grid cannot resolve the site set (e.g. two sites share a cell)."""


@dataclass(eq=False)
class LabelGrid:
    grid: Grid
    label: np.ndarray
    dist: np.ndarray
    tie_mask: np.ndarray
    second: np.ndarray | None = None
    sites: np.ndarray | None = None
    field: MetricField | None = None
    visits: np.ndarray | None = None
    # label-correcting offers to cells that were already finalised
    revisits: np.ndarray | None = None

    @property
    def nx(self) -> int:
        return self.grid.nx

    @property
    def ny(self) -> int:
        return self.grid.ny


def cell_metric(field: MetricField, grid: Grid):
    X, Y = grid.centers()
    return X, Y, field.eval_many(X, Y)


def _check_sites(sites: np.ndarray, grid: Grid) -> None:
    if len(sites) < 2:
        raise ValueError("need at least 2 sites")
    for p in sites:
        if not grid.rect.contains(p, strict=True):
            raise ValueError(f"site {tuple(p)} outside the working domain")


def compute_labels_bruteforce(field: MetricField, sites, grid: Grid, tau: float = TAU_TIE) -> LabelGrid:
    """Direct nearest-site evaluation at every cell center.

    Sites whose squared distance is within ``tau`` (relative) of the best
    count as tied; the lowest tied index wins and the cell is flagged.
    """
    sites = np.asarray(sites, dtype=float)
    _check_sites(sites, grid)
    X, Y, (q11, q12, q22) = cell_metric(field, grid)
    d2 = np.stack([quad_form(q11, q12, q22, X - sx, Y - sy) for sx, sy in sites])
    best = d2.min(axis=0)
    within = d2 <= best * (1.0 + tau)
    label = np.argmax(within, axis=0).astype(np.int32)
    tie = within.sum(axis=0) > 1
    masked = np.where(np.arange(len(sites))[:, None, None] == label[None], np.inf, d2)
    second = np.where(tie, np.argmin(masked, axis=0), -1).astype(np.int32)
    dist = np.sqrt(np.take_along_axis(d2, label[None].astype(np.intp), axis=0)[0])
    return LabelGrid(grid, label, dist, tie, second, sites, field)


def compute_labels_frontprop(
    field: MetricField, sites, grid: Grid, tau: float = TAU_TIE, keep: int = FRONT_CANDIDATES
) -> LabelGrid:
    """Multi-source front propagation over the triangulated grid.

    Cells are finalised in order of their best known squared distance.  A
    finalised cell offers its ``keep`` best candidate labels to its six
    neighbours, which evaluate the closed-form distance to each offered
    site.  Carrying runner-up labels lets thin sliver regions, which are not
    grid-connected to their site, still be reached.  ``visits`` counts
    the neighbours that offered labels before the cell was first finalised
    (at most its valence, 6).

    The metric is taken at the query point, so ``D(v, .)`` need not increase
    along grid paths and a finalised cell can later be offered a closer
    site; it is then re-opened (label correction), counted in ``revisits``.
    """
    sites = np.asarray(sites, dtype=float)
    _check_sites(sites, grid)
    nx, ny = grid.nx, grid.ny
    X, Y, (q11, q12, q22) = cell_metric(field, grid)
    xs, ys = X.ravel().tolist(), Y.ravel().tolist()
    a, b, c = q11.ravel().tolist(), q12.ravel().tolist(), q22.ravel().tolist()
    sx, sy = sites[:, 0].tolist(), sites[:, 1].tolist()
    n = nx * ny
    cand: list[list] = [[] for _ in range(n)]  # sorted [(d2, label), ...]
    done = [False] * n
    visits = [0] * n
    heap: list[tuple[float, int, int]] = []

    seeded: dict[int, int] = {}
    for s in range(len(sites)):
        iy, ix = grid.cell_of(sites[s])
        k = iy * nx + ix
        if k in seeded:
            raise ResolutionError(f"sites {seeded[k]} and {s} fall in the same cell")
        seeded[k] = s
        dx, dy = xs[k] - sx[s], ys[k] - sy[s]
        d2 = dx * dx * a[k] + 2.0 * dx * dy * b[k] + dy * dy * c[k]
        cand[k] = [(d2, s)]
        heapq.heappush(heap, (d2, s, k))

    offsets = [(dy * nx + dx, dy, dx) for dy, dx in SIX]
    pop, push = heapq.heappop, heapq.heappush
    version = [0] * n
    revisits = [0] * n
    settled = [False] * n  # finalised at least once
    heap = [(d2, s, k, 0) for d2, s, k in heap]
    heapq.heapify(heap)
    while heap:
        key, s, k, ver = pop(heap)
        if ver != version[k]:
            continue
        done[k] = True
        settled[k] = True
        offer = [lab for _, lab in cand[k]]
        iy, ix = divmod(k, nx)
        for bit, (off, ddy, ddx) in enumerate(offsets):
            jy, jx = iy + ddy, ix + ddx
            if jy < 0 or jy >= ny or jx < 0 or jx >= nx:
                continue
            m = k + off
            lst = cand[m]
            have = {lab for _, lab in lst}
            fresh = [lab for lab in offer if lab not in have]
            if settled[m]:
                # D is evaluated pointwise, so it need not grow along grid
                # paths: a finalised cell may still improve.  Re-open it.
                if not fresh:
                    continue
                revisits[m] += 1
            else:
                visits[m] |= 1 << bit  # which neighbours visited
            if not fresh:
                continue
            before = list(lst)
            xm, ym, am, bm, cm = xs[m], ys[m], a[m], b[m], c[m]
            for lab in fresh:
                dx, dy = xm - sx[lab], ym - sy[lab]
                lst.append((dx * dx * am + 2.0 * dx * dy * bm + dy * dy * cm, lab))
            lst.sort()
            del lst[keep:]
            if lst != before:
                version[m] += 1
                done[m] = False
                push(heap, (lst[0][0], lst[0][1], m, version[m]))

    if any(not lst for lst in cand):
        raise ResolutionError("front propagation left cells unlabelled")
    label = np.empty(n, dtype=np.int32)
    best = np.empty(n)
    tie = np.zeros(n, dtype=bool)
    for k, lst in enumerate(cand):
        d0, l0 = lst[0]
        # lowest index among candidates within the tie band
        within = [lab for d, lab in lst if d <= d0 * (1.0 + tau)]
        label[k] = min(within)
        best[k] = d0
        tie[k] = len(within) > 1
    return LabelGrid(
        grid,
        label.reshape(ny, nx),
        np.sqrt(best).reshape(ny, nx),
        tie.reshape(ny, nx),
        None,
        sites,
        field,
        np.asarray([v.bit_count() for v in visits], dtype=np.int32).reshape(ny, nx),
        np.asarray(revisits, dtype=np.int32).reshape(ny, nx),
    )


# --- label raster I/O ------------------------------------------------------


def dump_labels(lg: LabelGrid, path) -> None:
    rows = [f"{lg.nx} {lg.ny}"]
    rows += [" ".join(map(str, row)) for row in lg.label.tolist()]
    Path(path).write_text("\n".join(rows) + "\n")


def load_label_raster(path) -> np.ndarray:
    lines = Path(path).read_text().split("\n")
    nx, ny = map(int, lines[0].split())
    arr = np.array([[int(t) for t in ln.split()] for ln in lines[1 : 1 + ny]], dtype=np.int32)
    if arr.shape != (ny, nx):
        raise ValueError(f"raster shape {arr.shape} does not match header {nx} {ny}")
    return arr


def label_grid_from_raster(label: np.ndarray, grid: Grid, sites=None, field=None) -> LabelGrid:
    label = np.asarray(label, dtype=np.int32)
    zeros = np.zeros(label.shape)
    return LabelGrid(grid, label, zeros, zeros.astype(bool), None, None if sites is None else np.asarray(sites, float), field)


# --- Voronoi vertices ------------------------------------------------------


@dataclass
class VoronoiVertex:
    position: tuple[float, float]
    incident_sites: tuple[int, ...]
    mu: float
    residual: float
    refined: bool = True
    closest: bool = True
    grid_guess: tuple[float, float] | None = None
    iterations: int = 0
    outside: bool = False  # lies beyond the working window


def _field_derivs(field: MetricField, p, h: float):
    """Entry arrays of Q and its central-difference partials at ``p``."""
    x, y = p
    r = field.rect
    if r is None:
        q = np.array([1.0, 0.0, 1.0])
        return q, np.zeros(3), np.zeros(3)
    xs = np.array([x, x - h, x + h, x, x])
    ys = np.array([y, y, y, y - h, y + h])
    xs = np.clip(xs, r.x0, r.x1)
    ys = np.clip(ys, r.y0, r.y1)
    q = np.stack(field.eval_many(xs, ys), axis=-1)
    dqx = (q[2] - q[1]) / (xs[2] - xs[1]) if xs[2] > xs[1] else np.zeros(3)
    dqy = (q[4] - q[3]) / (ys[4] - ys[3]) if ys[4] > ys[3] else np.zeros(3)
    return q[0], dqx, dqy


def _sq_dists(q, sites, p) -> np.ndarray:
    d = p[None, :] - sites
    return quad_form(q[0], q[1], q[2], d[:, 0], d[:, 1])


def refine_voronoi_vertex(field: MetricField, sites, guess, incident=None, fd_step: float | None = None) -> VoronoiVertex:
    """Newton solve for the point equidistant to the first three ``sites``.

    ``sites`` holds the incident site coordinates; ``incident`` their indices
    (defaults to ``0..k-1``).  The residual covers every incident site.
    """
    pts = np.asarray(sites, dtype=float)
    if len(pts) < 3:
        raise ValueError("a Voronoi vertex needs at least 3 sites")
    if orient2d(pts[0], pts[1], pts[2]) == 0 and len(pts) == 3:
        raise ValueError("incident sites are colinear")
    idx = tuple(range(len(pts))) if incident is None else tuple(int(i) for i in incident)
    tri = pts[:3]
    scale = float(np.ptp(pts, axis=0).max()) or 1.0
    h = fd_step if fd_step is not None else 1e-7 * scale
    p = np.asarray(guess, dtype=float).copy()

    def F(pt):
        q, _, _ = _field_derivs(field, pt, h)
        d2 = _sq_dists(q, tri, pt)
        return np.array([d2[0] - d2[1], d2[1] - d2[2]]), d2

    def residual_at(pt):
        q = np.stack(field.eval_many(pt[0], pt[1]))
        d = np.sqrt(_sq_dists(q, pts, pt))
        mu = float(d[0])
        return mu, float(np.abs(d - mu).max())

    converged = False
    it = 0
    try:
        fval, d2 = F(p)
        for it in range(1, REFINE_MAX_ITER + 1):
            mu, res = residual_at(p)
            if res < REFINE_TOL * (1.0 + mu):
                converged = True
                break
            q, dqx, dqy = _field_derivs(field, p, h)
            rows = []
            for v in tri:
                dv = p - v
                gx = 2.0 * (q[0] * dv[0] + q[1] * dv[1]) + quad_form(dqx[0], dqx[1], dqx[2], dv[0], dv[1])
                gy = 2.0 * (q[1] * dv[0] + q[2] * dv[1]) + quad_form(dqy[0], dqy[1], dqy[2], dv[0], dv[1])
                rows.append((gx, gy))
            g = np.array(rows)
            J = np.array([g[0] - g[1], g[1] - g[2]])
            try:
                step = np.linalg.solve(J, -fval)
            except np.linalg.LinAlgError:
                break
            # backtracking on |F|
            t = 1.0
            norm0 = np.abs(fval).max()
            while t > 1e-6:
                cand = p + t * step
                try:
                    fc, _ = F(cand)
                except OutOfDomainError:
                    t *= 0.5
                    continue
                if np.abs(fc).max() < norm0 or t <= 1.0 / 64:
                    break
                t *= 0.5
            else:
                break
            p = cand
            fval = fc
        else:
            mu, res = residual_at(p)
            converged = res < REFINE_TOL * (1.0 + mu)
    except OutOfDomainError:
        converged = False

    if not converged:
        g = np.asarray(guess, dtype=float)
        try:
            mu, res = residual_at(g)
        except OutOfDomainError:
            mu, res = math.nan, math.inf
        return VoronoiVertex(tuple(map(float, g)), idx, mu, res, refined=False, grid_guess=tuple(map(float, g)), iterations=it)
    mu, res = residual_at(p)
    return VoronoiVertex(tuple(map(float, p)), idx, mu, res, refined=True, grid_guess=tuple(map(float, guess)), iterations=it)


def order_face_cycle(position, incident: tuple[int, ...], sites) -> tuple[int, ...]:
    """Incident sites in clockwise angular order around ``position``.

    The cycle starts at the lowest site index so equal cycles compare equal.
    """
    c = np.asarray(position, dtype=float)
    pts = np.asarray(sites, dtype=float)
    ang = {int(i): math.atan2(pts[i][1] - c[1], pts[i][0] - c[0]) for i in incident}
    if len(set(ang.values())) != len(ang):
        raise RuntimeError(f"incident sites {incident} share an angle around {tuple(c)}")
    cyc = sorted(ang, key=lambda i: -ang[i])
    k = cyc.index(min(cyc))
    return tuple(cyc[k:] + cyc[:k])


# --- extraction ------------------------------------------------------------


@dataclass
class EdgeComponent:
    pair: tuple[int, int]
    segments: np.ndarray  # (k, 2, 2) corner indices (iy, ix)
    unbounded: bool


@dataclass
class PrimalDiagram:
    lg: LabelGrid
    components: np.ndarray  # per-cell region component id
    component_site: np.ndarray  # component id -> site
    component_border: np.ndarray  # component id -> touches border
    edges: dict[tuple[int, int], list[EdgeComponent]]
    vertices: list[VoronoiVertex]
    clusters: list[dict]
    n_sites: int
    degenerate_pairs: list[tuple[int, int]] = dc_field(default_factory=list)
    # clusters with no valid refined vertex, as (position, labels)
    unresolved: list[tuple[tuple[float, float], tuple[int, ...]]] = dc_field(default_factory=list)
    touch: np.ndarray | None = None  # (n_sites, ny, nx) cells the closed region reaches
    # site pairs whose interface runs off to infinity, once vertices beyond
    # the window are accounted for; None means "every border-touching pair"
    border_pairs: set[tuple[int, int]] | None = None

    @property
    def grid(self) -> Grid:
        return self.lg.grid

    @property
    def unbounded_region(self) -> np.ndarray:
        out = np.zeros(self.n_sites, dtype=bool)
        out[self.component_site[self.component_border]] = True
        return out

    def site_components(self, s: int) -> list[int]:
        return [int(c) for c in np.flatnonzero(self.component_site == s)]

    @property
    def unbounded_edges(self) -> set[tuple[int, int]]:
        if self.border_pairs is not None:
            return set(self.border_pairs)
        return {pair for pair, comps in self.edges.items() if any(e.unbounded for e in comps)}

    def segment_xy(self, comp: EdgeComponent) -> np.ndarray:
        g = self.grid
        out = np.empty(comp.segments.shape, dtype=float)
        out[..., 0] = g.rect.x0 + comp.segments[..., 1] * g.hx
        out[..., 1] = g.rect.y0 + comp.segments[..., 0] * g.hy
        return out


def _region_components(label: np.ndarray, n_sites: int):
    comp = np.full(label.shape, -1, dtype=np.int64)
    comp_site: list[int] = []
    comp_border: list[bool] = []
    for s in range(n_sites):
        lab, k = ndimage.label(label == s, structure=FOUR)
        if k == 0:
            continue
        base = len(comp_site)
        sel = lab > 0
        comp[sel] = lab[sel] - 1 + base
        border = np.zeros(k + 1, dtype=bool)
        for edge in (lab[0, :], lab[-1, :], lab[:, 0], lab[:, -1]):
            border[edge] = True
        comp_site += [s] * k
        comp_border += border[1:].tolist()
    return comp, np.asarray(comp_site, dtype=np.int64), np.asarray(comp_border, dtype=bool)


def _edge_components(label: np.ndarray, n_sites: int):
    """Cell-boundary segments between differing labels, split into components.

    Segments of one site pair are connected when they share a grid corner.
    """
    ny, nx = label.shape
    segs = []
    iy, ix = np.nonzero(label[:, :-1] != label[:, 1:])
    if len(iy):
        a, b = label[iy, ix], label[iy, ix + 1]
        segs.append((np.minimum(a, b), np.maximum(a, b), iy, ix + 1, iy + 1, ix + 1))
    iy, ix = np.nonzero(label[:-1, :] != label[1:, :])
    if len(iy):
        a, b = label[iy, ix], label[iy + 1, ix]
        segs.append((np.minimum(a, b), np.maximum(a, b), iy + 1, ix, iy + 1, ix + 1))
    edges: dict[tuple[int, int], list[EdgeComponent]] = {}
    if not segs:
        return edges
    lo, hi, ay, ax, by, bx = (np.concatenate(t).astype(np.int64) for t in zip(*segs))
    ncorner = (ny + 1) * (nx + 1)
    pair = lo * n_sites + hi
    na = pair * ncorner + ay * (nx + 1) + ax
    nb = pair * ncorner + by * (nx + 1) + bx
    keys, inv = np.unique(np.concatenate([na, nb]), return_inverse=True)
    m = len(na)
    g = coo_matrix((np.ones(m), (inv[:m], inv[m:])), shape=(len(keys), len(keys)))
    _, node_comp = connected_components(g, directed=False)
    seg_comp = node_comp[inv[:m]]

    def on_border(y, x):
        return (y == 0) | (y == ny) | (x == 0) | (x == nx)

    border = on_border(ay, ax) | on_border(by, bx)
    groups: dict[int, list[int]] = {}
    for i in np.lexsort((ax, ay, pair)).tolist():
        groups.setdefault(int(seg_comp[i]), []).append(i)
    for members in sorted(groups.values(), key=lambda ms: (int(pair[ms[0]]), int(ay[ms[0]]), int(ax[ms[0]]))):
        i0 = members[0]
        key = (int(lo[i0]), int(hi[i0]))
        arr = np.stack(
            [np.column_stack([ay[members], ax[members]]), np.column_stack([by[members], bx[members]])], axis=1
        )
        edges.setdefault(key, []).append(EdgeComponent(key, arr, bool(border[members].any())))
    return edges


def _vertex_clusters(label: np.ndarray):
    """Interior grid corners touching >= 3 labels, merged by label set."""
    a = label[:-1, :-1]
    b = label[:-1, 1:]
    c = label[1:, :-1]
    d = label[1:, 1:]
    distinct = 1 + (b != a) + ((c != a) & (c != b)) + ((d != a) & (d != b) & (d != c))
    cy, cx = np.nonzero(distinct >= 3)
    cands = []
    for y, x in zip(cy.tolist(), cx.tolist()):
        labs = frozenset((int(a[y, x]), int(b[y, x]), int(c[y, x]), int(d[y, x])))
        cands.append(((y + 1, x + 1), labs))
    index = {pos: i for i, (pos, _) in enumerate(cands)}
    parent = list(range(len(cands)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, ((y, x), labs) in enumerate(cands):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                j = index.get((y + dy, x + dx))
                if j is not None and j != i and cands[j][1] == labs:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(len(cands)):
        groups.setdefault(find(i), []).append(i)
    clusters = [{"corners": [cands[i][0] for i in ms], "labels": cands[ms[0]][1]} for ms in groups.values()]
    clusters.sort(key=lambda cl: (min(cl["corners"]), sorted(cl["labels"])))
    return clusters


def _degenerate_pairs(lg: LabelGrid) -> list[tuple[int, int]]:
    """Site pairs whose tied cells fill at least one 2x2 block."""
    if lg.second is None or not lg.tie_mask.any():
        return []
    lo = np.where(lg.tie_mask, np.minimum(lg.label, lg.second), -1)
    hi = np.where(lg.tie_mask, np.maximum(lg.label, lg.second), -1)
    t = lg.tie_mask
    same = lambda arr: (arr[:-1, :-1] == arr[:-1, 1:]) & (arr[:-1, :-1] == arr[1:, :-1]) & (arr[:-1, :-1] == arr[1:, 1:])
    block = t[:-1, :-1] & t[:-1, 1:] & t[1:, :-1] & t[1:, 1:] & same(lo) & same(hi)
    counts: dict[tuple[int, int], int] = {}
    ys, xs = np.nonzero(block)
    for y, x in zip(ys.tolist(), xs.tolist()):
        key = (int(lo[y, x]), int(hi[y, x]))
        counts[key] = counts.get(key, 0) + 4
    return sorted(p for p, n in counts.items() if n >= BLOB_MIN_CELLS)


def touch_masks(lg: LabelGrid, slack: float = 2.0) -> np.ndarray:
    """Per site, the cells whose square the closed continuous region reaches.

    A cell counts as reached when the site's distance excess over the winner
    at the center is below ``slack`` times a first-order bound on how much
    that excess can drop across half a cell diagonal.
    """
    X, Y, (q11, q12, q22) = cell_metric(lg.field, lg.grid)
    n = len(lg.sites)
    D = np.empty((n,) + X.shape)
    G = np.empty_like(D)
    for s, (sx, sy) in enumerate(lg.sites):
        dx, dy = X - sx, Y - sy
        d = np.sqrt(quad_form(q11, q12, q22, dx, dy))
        D[s] = d
        with np.errstate(divide="ignore", invalid="ignore"):
            G[s] = np.where(d > 0, np.hypot(q11 * dx + q12 * dy, q12 * dx + q22 * dy) / d, 0.0)
    lab = lg.label.astype(np.intp)[None]
    best = np.take_along_axis(D, lab, axis=0)
    gbest = np.take_along_axis(G, lab, axis=0)
    r = 0.5 * lg.grid.cell_diameter
    return (D - best) <= slack * (G + gbest) * r


def _closest_ok(field, sites, p, mu, delta_rel) -> bool:
    q = np.stack(field.eval_many(p[0], p[1]))
    d2 = _sq_dists(q, sites, np.asarray(p))
    return bool(np.all(d2 >= mu * mu * (1.0 - delta_rel)))


def _refine_cluster(field, sites, cluster, grid: Grid, delta_rel: float, labels=None) -> list[VoronoiVertex]:
    """Refined vertices, closest to their incident sites, near a corner cluster.

    Every triple of ``labels`` (default: the cluster's own) is tried.
    """
    corners = np.array([grid.corner(y, x) for y, x in cluster["corners"]])
    guess = corners.mean(axis=0)
    labels = sorted(cluster["labels"] if labels is None else labels)
    reach = REACH_CELLS * grid.cell_diameter + float(np.ptp(corners, axis=0).max())
    found = []
    for tri in itertools.combinations(labels, 3):
        pts = sites[list(tri)]
        if orient2d(*pts) == 0:
            continue
        vx = refine_voronoi_vertex(field, pts, guess, incident=tri)
        if not vx.refined or math.dist(vx.position, guess) > reach:
            continue
        if not _closest_ok(field, sites, vx.position, vx.mu, delta_rel):
            continue
        found.append(vx)
    return found


def _neighbourhood_labels(label: np.ndarray, cluster, radius: int = 2) -> set[int]:
    ny, nx = label.shape
    out: set[int] = set()
    for y, x in cluster["corners"]:
        out.update(np.unique(label[max(y - radius, 0) : y + radius, max(x - radius, 0) : x + radius]).tolist())
    return out


def _complete_incidence(vx: VoronoiVertex, field, sites) -> VoronoiVertex:
    """Add every site equidistant within the refinement tolerance."""
    p = np.asarray(vx.position)
    q = np.stack(field.eval_many(p[0], p[1]))
    d = np.sqrt(_sq_dists(q, sites, p))
    tol = REFINE_TOL * (1.0 + vx.mu)
    inc = sorted(set(vx.incident_sites) | {int(i) for i in np.flatnonzero(np.abs(d - vx.mu) <= tol)})
    mu = float(d[inc[0]])
    res = float(np.abs(d[inc] - mu).max())
    return VoronoiVertex(vx.position, tuple(inc), mu, res, vx.refined, vx.closest, vx.grid_guess, vx.iterations,
                         vx.outside)


def _merge_vertices(raw: list[VoronoiVertex], grid: Grid, field, sites) -> list[VoronoiVertex]:
    tol = MERGE_TOL_CELLS * grid.cell_diameter
    out: list[VoronoiVertex] = []
    for v in raw:
        for k, w in enumerate(out):
            if math.dist(v.position, w.position) <= tol:
                keep = w if w.residual <= v.residual else v
                merged = VoronoiVertex(
                    keep.position,
                    tuple(sorted(set(v.incident_sites) | set(w.incident_sites))),
                    keep.mu, keep.residual, True, True, keep.grid_guess, keep.iterations,
                )
                out[k] = _complete_incidence(merged, field, sites)
                break
        else:
            out.append(v)
    out.sort(key=lambda v: (v.position[1], v.position[0]))
    return out


def border_runs(lg: LabelGrid) -> list[tuple[int, tuple[float, float]]]:
    """Labels met walking clockwise around the window's border cells.

    Consecutive equal labels are collapsed into one run, cyclically; each run
    carries the center of its middle cell.
    """
    lab = lg.label
    ny, nx = lab.shape
    ring = [(ny - 1, ix) for ix in range(nx)]
    ring += [(iy, nx - 1) for iy in range(ny - 2, -1, -1)]
    ring += [(0, ix) for ix in range(nx - 2, -1, -1)]
    ring += [(iy, 0) for iy in range(1, ny - 1)]
    labels = [int(lab[c]) for c in ring]
    if len(set(labels)) == 1:
        return [(labels[0], lg.grid.rect.center)]
    # rotate so the ring starts at a label change
    k = next(i for i in range(len(labels)) if labels[i] != labels[i - 1])
    ring, labels = ring[k:] + ring[:k], labels[k:] + labels[:k]
    runs, start = [], 0
    g = lg.grid
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            iy, ix = ring[(start + i - 1) // 2]
            runs.append((labels[start], (g.rect.x0 + (ix + 0.5) * g.hx, g.rect.y0 + (iy + 0.5) * g.hy)))
            start = i
    return runs


def constant_metric_center(q, pts) -> np.ndarray | None:
    """Point equidistant to three sites under the constant tensor ``q``."""
    Q = np.array([[q[0], q[1]], [q[1], q[2]]])
    a, b, c = np.asarray(pts, dtype=float)[:3]
    A = 2.0 * np.array([(b - a) @ Q, (c - b) @ Q])
    rhs = np.array([b @ Q @ b - a @ Q @ a, c @ Q @ c - b @ Q @ b])
    try:
        return np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return None


def _complete_beyond_window(lg: LabelGrid, vertices, delta_rel: float):
    """Vertices of the diagram that lie beyond the window, by ear clipping.

    Walking the border, a region ``b`` met between ``a`` and ``c`` is truly
    unbounded unless the point equidistant to ``a, b, c`` lies beyond the
    border and no site is closer to it; in that case it is a vertex the
    window cut off, and ``b`` is dropped from the walk.  The field is
    extended outside the window by clamping.  Returns the new vertices and
    the site pairs that remain consecutive on the walk.
    """
    field = lg.field.extended()
    sites = lg.sites
    rect = lg.grid.rect
    inner = lg.grid.cell_diameter
    runs = border_runs(lg)
    known = {tuple(sorted(v.incident_sites)): v for v in vertices}
    found: list[VoronoiVertex] = []
    changed = True
    while changed and len(runs) >= 3:
        changed = False
        for k in range(len(runs)):
            (a, _), (b, guess), (c, _) = runs[k - 1], runs[k], runs[(k + 1) % len(runs)]
            if len({a, b, c}) < 3:
                continue
            tri = tuple(sorted((a, b, c)))
            pts = sites[list(tri)]
            if tri in known:
                if known[tri].outside:
                    # found from a grid cluster already; still clips b
                    del runs[k]
                    changed = True
                    break
                continue
            if orient2d(*pts) == 0:
                continue
            q = np.stack(field.eval_many(guess[0], guess[1]))
            starts = [guess]
            far = constant_metric_center(q, pts)
            if far is not None and np.all(np.isfinite(far)):
                starts.append(tuple(far))
            for start in starts:
                vx = refine_voronoi_vertex(field, pts, start, incident=tri)
                if vx.refined:
                    x, y = vx.position
                    if min(x - rect.x0, rect.x1 - x, y - rect.y0, rect.y1 - y) <= inner:
                        break
            else:
                continue
            x, y = vx.position
            if min(x - rect.x0, rect.x1 - x, y - rect.y0, rect.y1 - y) > inner:
                continue
            # nearly colinear triples put the vertex where it carries no
            # usable precision; keep the pair unbounded instead
            if math.dist(vx.position, rect.center) > FAR_LIMIT * rect.diameter:
                continue
            if not _closest_ok(field, sites, vx.position, vx.mu, delta_rel):
                continue
            vx = _complete_incidence(vx, field, sites)
            try:
                cyc = order_face_cycle(vx.position, vx.incident_sites, sites)
            except RuntimeError:
                continue
            vx = VoronoiVertex(vx.position, cyc, vx.mu, vx.residual, True, True, tuple(map(float, guess)),
                               vx.iterations, outside=True)
            found.append(vx)
            known[tuple(sorted(vx.incident_sites))] = vx
            del runs[k]
            changed = True
            break
    pairs = set()
    if len(runs) >= 2:
        for k in range(len(runs)):
            a, b = runs[k - 1][0], runs[k][0]
            if a != b:
                pairs.add((min(a, b), max(a, b)))
    return found, pairs


def extract_primal(lg: LabelGrid, delta_rel: float = 1e-6, refine: bool = True) -> PrimalDiagram:
    """Regions, interface components, and vertices of a label raster.

    With a field and sites attached to ``lg``, every corner cluster is
    explained by refined vertices that are truly closest to their incident
    sites; clusters that no valid vertex explains are listed as unresolved.
    """
    n = int(lg.label.max()) + 1 if lg.sites is None else len(lg.sites)
    comp, comp_site, comp_border = _region_components(lg.label, n)
    edges = _edge_components(lg.label, n)
    clusters = _vertex_clusters(lg.label)
    grid = lg.grid
    vertices: list[VoronoiVertex] = []
    unresolved = []
    touch = None
    if refine and lg.field is not None and lg.sites is not None:
        # vertices of slivers ending at the border may lie just outside
        fe = lg.field.extended()
        raw, pending = [], []
        for cl in clusters:
            got = _refine_cluster(fe, lg.sites, cl, grid, delta_rel)
            if got:
                raw.extend(got)
            else:
                pending.append(cl)
        raw = [_complete_incidence(v, fe, lg.sites) for v in raw]
        vertices = _merge_vertices(raw, grid, fe, lg.sites)
        # clusters whose own triples fail: near-cocircular sites split across
        # clusters, or slivers; retry with every label in the neighbourhood
        retry = []
        for cl in pending:
            for radius in (2, 4):
                labs = _neighbourhood_labels(lg.label, cl, radius)
                if len(labs) > MAX_NEIGHBOURHOOD_LABELS:
                    break
                got = _refine_cluster(fe, lg.sites, cl, grid, delta_rel, labels=labs)
                raw.extend(_complete_incidence(v, fe, lg.sites) for v in got)
                if got:
                    break
            retry.append((cl, labs))
        vertices = _merge_vertices(raw, grid, fe, lg.sites)
        vertices = [
            VoronoiVertex(v.position, order_face_cycle(v.position, v.incident_sites, lg.sites), v.mu, v.residual,
                          v.refined, v.closest, v.grid_guess, v.iterations, not grid.rect.contains(v.position))
            for v in vertices
        ]
        beyond, border_pairs = _complete_beyond_window(lg, vertices, delta_rel)
        vertices = vertices + beyond
        near = 4.0 * grid.cell_diameter
        for cl, labs in retry:
            corners = np.array([grid.corner(y, x) for y, x in cl["corners"]])
            pos = tuple(map(float, corners.mean(axis=0)))
            if any(cl["labels"] <= set(v.incident_sites) for v in vertices):
                continue
            if any(math.dist(v.position, pos) <= near and len(cl["labels"] & set(v.incident_sites)) >= 2 for v in vertices):
                continue
            unresolved.append((pos, tuple(sorted(cl["labels"]))))
        touch = touch_masks(lg)
    else:
        for cl in clusters:
            corners = np.array([grid.corner(y, x) for y, x in cl["corners"]])
            g = tuple(map(float, corners.mean(axis=0)))
            vertices.append(VoronoiVertex(g, tuple(sorted(cl["labels"])), math.nan, math.inf, refined=False,
                                          closest=False, grid_guess=g))
        border_pairs = None
    return PrimalDiagram(lg, comp, comp_site, comp_border, edges, vertices, clusters, n,
                         _degenerate_pairs(lg), unresolved, touch, border_pairs)


# --- primal-side checks ----------------------------------------------------


def raw_orphans(pd: PrimalDiagram, sites) -> list[tuple[int, list[int]]]:
    """Per site, 4-connected region components other than the site's own."""
    sites = np.asarray(sites, dtype=float)
    out = []
    for s, p in enumerate(sites):
        iy, ix = pd.grid.cell_of(p)
        if pd.lg.label[iy, ix] != s:
            raise ResolutionError(f"cell of site {s} is labelled {pd.lg.label[iy, ix]}")
        mother = int(pd.components[iy, ix])
        orphans = [c for c in pd.site_components(s) if c != mother]
        if orphans:
            out.append((s, orphans))
    return out


def detect_orphans(pd: PrimalDiagram, sites) -> list[tuple[int, list[int]]]:
    """Region components not connected to the site's own, at grid resolution.

    A component joins the mother component when the cells the continuous
    region reaches (``touch_masks``) link them 8-connectedly; without that
    information the raw 4-connected decomposition is used.
    """
    raw = raw_orphans(pd, sites)
    if pd.touch is None or not raw:
        return raw
    out = []
    for s, comps in raw:
        lab, _ = ndimage.label(pd.touch[s], structure=EIGHT)
        iy, ix = pd.grid.cell_of(sites[s])
        home = lab[iy, ix]
        left = [c for c in comps if not np.any(lab[pd.components == c] == home)]
        if left:
            out.append((s, left))
    return out


def check_region_simply_connected(pd: PrimalDiagram) -> np.ndarray:
    """Per site: every component of the complement reaches the frame.

    With touch masks, the complement is the set of cells any other region
    reaches, so slivers of a neighbour that cross the region do not read as
    holes.
    """
    ok = np.ones(pd.n_sites, dtype=bool)
    count = None if pd.touch is None else pd.touch.sum(axis=0)
    for s in range(pd.n_sites):
        region = pd.lg.label == s
        if not region.any():
            continue
        other = ~region if count is None else (count - pd.touch[s]) > 0
        lab, _ = ndimage.label(np.pad(other, 1, constant_values=True), structure=EIGHT)
        ok[s] = bool(np.all(lab[np.pad(other, 1)] == lab[0, 0]))
    return ok


def interface_groups(pd: PrimalDiagram, pair: tuple[int, int]) -> int:
    """Number of interface pieces of ``pair`` after linking through cells
    both regions reach (equal to the raw count without touch masks)."""
    comps = pd.edges.get(pair, [])
    if len(comps) <= 1 or pd.touch is None:
        return len(comps)
    v, w = pair
    lab, _ = ndimage.label(pd.touch[v] & pd.touch[w], structure=EIGHT)
    ny, nx = lab.shape
    parent = list(range(len(comps)))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    owner: dict[int, int] = {}
    for k, comp in enumerate(comps):
        for (ay, ax), (by, bx) in comp.segments.tolist():
            if ay == by:  # horizontal segment at row ay between cells (ay-1, x) and (ay, x)
                cells = [(ay - 1, ax), (ay, ax)]
            else:  # vertical segment at column ax between cells (y, ax-1) and (y, ax)
                cells = [(ay, ax - 1), (ay, ax)]
            for cy, cx in cells:
                if 0 <= cy < ny and 0 <= cx < nx and lab[cy, cx]:
                    o = owner.setdefault(int(lab[cy, cx]), k)
                    ro, rk = find(o), find(k)
                    if ro != rk:
                        parent[max(ro, rk)] = min(ro, rk)
    return len({find(k) for k in range(len(comps))})


def check_edges_connected(pd: PrimalDiagram) -> dict[tuple[int, int], bool]:
    return {pair: interface_groups(pd, pair) == 1 for pair in sorted(pd.edges)}


def check_vertices_bounded(pd: PrimalDiagram, margin: float) -> bool:
    """No vertex (or unresolved cluster) lies within ``margin`` of the border.

    Vertices recovered beyond the window count as violations.
    """
    if any(v.outside for v in pd.vertices):
        return False
    r = pd.grid.rect
    points = [v.position for v in pd.vertices] + [p for p, _ in pd.unresolved]
    for x, y in points:
        if min(x - r.x0, r.x1 - x, y - r.y0, r.y1 - y) < margin:
            return False
    return True


def site_interior(pd: PrimalDiagram, sites) -> np.ndarray:
    """Per site: its cell and the four neighbours all carry its label."""
    out = np.zeros(len(sites), dtype=bool)
    lab = pd.lg.label
    ny, nx = lab.shape
    for s, p in enumerate(np.asarray(sites)):
        iy, ix = pd.grid.cell_of(p)
        if 0 < iy < ny - 1 and 0 < ix < nx - 1:
            out[s] = bool(
                lab[iy, ix] == s and lab[iy - 1, ix] == s and lab[iy + 1, ix] == s
                and lab[iy, ix - 1] == s and lab[iy, ix + 1] == s
            )
    return out
