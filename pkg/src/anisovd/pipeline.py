"""End-to-end run: metric, sites, labels, primal, dual, checks, outputs."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import Grid, Rect
from .dual import (
    DualMesh,
    StructuralError,
    build_dual,
    colinear_chain,
    dump_mesh,
    euler_characteristic,
    triangulate,
)
from .metric import (
    DELTA_REL,
    MetricField,
    anisotropy_bound,
    anisotropy_dense_estimate,
    blend_to_identity,
    builtin_metric,
    load_metric_file,
)
from .primal import (
    PrimalDiagram,
    ResolutionError,
    TAU_TIE,
    check_edges_connected,
    check_region_simply_connected,
    check_vertices_bounded,
    compute_labels_bruteforce,
    compute_labels_frontprop,
    detect_orphans,
    dump_labels,
    extract_primal,
    site_interior,
)
from .report import emit_report
from .sites import SiteSet, farthest_point_net, load_sites, net_epsilon, random_sites
from .verify import (
    CheckRecord,
    VerificationReport,
    build_oneform,
    check_boundary_cycle,
    check_boundary_equals_hull,
    check_ece,
    check_ece_triangles,
    check_embedding,
    check_face_convexity,
    check_nondegenerate,
    check_simple_graph,
    compute_indices,
    detect_foldovers,
    ece_record,
    interior_vertices,
    pick_generic_direction,
    skipped,
)

# sufficient condition on epsilon * sigma for nets to be orphan-free
NET_GATE = 0.09868
ORACLE_AUTO_COST = 512 * 512 * 64
INDEX_DIRECTIONS = 5
NET_CANDIDATES = 64

ALL_CHECKS = (
    "oracle", "orphans", "simply_connected", "edges_connected", "site_interior", "unresolved",
    "degenerate_interfaces", "dual_structure", "dual_simple", "euler", "ece", "nondegenerate",
    "convexity", "boundary_hull", "boundary_cycle", "embedding", "foldovers", "poincare_hopf",
    "extremum_free", "colinear_chain",
)


@dataclass(frozen=True)
class RunConfig:
    metric: str = "identity"
    nx: int = 256
    ny: int = 256
    inflate: float = 3.0
    sites: str = "random:16"
    seed: int = 0
    sigma: float | None = None
    out_svg: str | None = None
    out_report: str | None = None
    checks: tuple[str, ...] | str = "all"
    oracle: bool = False
    dump_labels: str | None = None
    dump_mesh: str | None = None
    site_domain: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    min_sep: float = 0.05
    net_jitter: float = 0.5
    delta_rel: float = DELTA_REL
    tau: float = TAU_TIE

    def __post_init__(self):
        if self.nx < 64 or self.ny < 64:
            raise ValueError("grid resolution must be at least 64 per side")
        if not self.inflate >= 1:
            raise ValueError("inflation factor must be >= 1")
        kind = self.sites.partition(":")[0]
        if kind not in ("random", "net", "net-eps", "file"):
            raise ValueError(f"unknown site source {self.sites!r}")
        checks = self.checks
        if isinstance(checks, str):
            checks = ALL_CHECKS if checks == "all" else tuple(c.strip() for c in checks.split(",") if c.strip())
        unknown = set(checks) - set(ALL_CHECKS)
        if unknown:
            raise ValueError(f"unknown checks {sorted(unknown)}")
        object.__setattr__(self, "checks", tuple(checks))


@dataclass
class RunResult:
    config: RunConfig
    report: VerificationReport
    field: MetricField
    sites: SiteSet
    grid: Grid
    primal: PrimalDiagram | None = None
    mesh: DualMesh | None = None
    timings: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 0 if self.report.ok else 1


def _is_builtin(spec: str) -> bool:
    return not spec.startswith("file:")


def make_field(spec: str, window: Rect) -> MetricField:
    if spec.startswith("file:"):
        f = load_metric_file(spec[5:])
        if not f.covers(window):
            raise ValueError(f"metric file covers {f.rect}, smaller than the working window {window}")
        return f
    return builtin_metric(spec, window)


def make_sites(cfg: RunConfig) -> tuple[SiteSet, Rect, MetricField]:
    """Sites, the working window, and the metric sampled over it."""
    kind, _, arg = cfg.sites.partition(":")
    if kind == "file":
        sites = load_sites(arg)
        window = Rect.bounding(sites.points).inflate(cfg.inflate)
        return sites, window, make_field(cfg.metric, window)
    dom = Rect(*cfg.site_domain)
    window = dom.inflate(cfg.inflate)
    f = make_field(cfg.metric, window)
    if kind == "random":
        return random_sites(dom, int(arg), cfg.seed, cfg.min_sep), window, f
    cand = Grid(dom, NET_CANDIDATES, NET_CANDIDATES)
    if kind == "net":
        sites = farthest_point_net(f, cand, target=int(arg), seed=cfg.seed, jitter=cfg.net_jitter)
    else:
        sites = farthest_point_net(f, cand, epsilon=float(arg), seed=cfg.seed, jitter=cfg.net_jitter)
    return sites, window, f


def _want(cfg: RunConfig, name: str) -> bool:
    return name in cfg.checks


def _pass(name, **m) -> CheckRecord:
    return CheckRecord(name, "pass", margins=m)


def _fail(name, witness, **m) -> CheckRecord:
    return CheckRecord(name, "fail", witness=witness, margins=m)


def oracle_record(fp, bf) -> CheckRecord:
    differ = (fp.label != bf.label) & ~bf.tie_mask
    if differ.any():
        iy, ix = map(int, np.argwhere(differ)[0])
        return _fail("oracle", {"cell": f"{iy},{ix}", "front": int(fp.label[iy, ix]), "brute": int(bf.label[iy, ix])},
                     mismatches=int(differ.sum()))
    return _pass("oracle", mismatches=0, tie_cells=int(bf.tie_mask.sum()))


def primal_records(cfg: RunConfig, pd: PrimalDiagram, sites, rep: VerificationReport, orphans) -> None:
    if _want(cfg, "orphans"):
        if orphans:
            s, comps = orphans[0]
            rep.add(_fail("orphans", {"site": s, "components": len(comps)}, sites_with_orphans=len(orphans)))
        else:
            rep.add(_pass("orphans", count=0))
    if _want(cfg, "simply_connected"):
        ok = check_region_simply_connected(pd)
        bad = np.flatnonzero(~ok)
        rep.add(_fail("simply_connected", {"site": int(bad[0])}, holes=len(bad)) if len(bad)
                else _pass("simply_connected", sites=len(ok)))
    if _want(cfg, "edges_connected"):
        ec = check_edges_connected(pd)
        bad = [p for p, v in ec.items() if not v]
        rep.add(_fail("edges_connected", {"pair": f"{bad[0][0]}-{bad[0][1]}"}, split=len(bad)) if bad
                else _pass("edges_connected", interfaces=len(ec)))
    if _want(cfg, "site_interior"):
        si = site_interior(pd, sites)
        bad = np.flatnonzero(~si)
        rep.add(_fail("site_interior", {"site": int(bad[0])}, count=len(bad)) if len(bad)
                else _pass("site_interior", sites=len(si)))
    if _want(cfg, "unresolved"):
        if pd.unresolved:
            pos, labs = pd.unresolved[0]
            rep.add(_fail("unresolved", {"x": pos[0], "y": pos[1], "sites": "-".join(map(str, labs))},
                          clusters=len(pd.unresolved)))
        else:
            rep.add(_pass("unresolved", clusters=len(pd.clusters), vertices=len(pd.vertices)))
    if _want(cfg, "degenerate_interfaces"):
        if pd.degenerate_pairs:
            pairs = ",".join(f"{a}-{b}" for a, b in pd.degenerate_pairs)
            rep.add(skipped("degenerate_interfaces", f"possibly degenerate interface {pairs}"))
        else:
            rep.add(_pass("degenerate_interfaces", flagged=0))


def mesh_records(cfg: RunConfig, mesh: DualMesh, sites, field: MetricField, window: Rect, grid: Grid,
                 rep: VerificationReport, seed: int) -> None:
    if mesh.colinear:
        reason = "colinear sites"
        if _want(cfg, "colinear_chain"):
            chain = colinear_chain(sites)
            if sorted(mesh.edges) == chain.edges:
                rep.add(_pass("colinear_chain", edges=len(chain.edges)))
            else:
                extra = sorted(set(mesh.edges) ^ set(chain.edges))[0]
                rep.add(_fail("colinear_chain", {"edge": f"{extra[0]}-{extra[1]}"}))
        if _want(cfg, "embedding"):
            rep.add(check_embedding(mesh))
        for name in ("ece", "boundary_hull", "poincare_hopf", "extremum_free", "convexity", "foldovers",
                     "nondegenerate", "boundary_cycle", "euler"):
            if _want(cfg, name):
                rep.add(skipped(name, reason))
        if _want(cfg, "dual_simple"):
            rep.add(check_simple_graph(mesh))
        return

    if _want(cfg, "dual_simple"):
        rep.add(check_simple_graph(mesh))
    if _want(cfg, "euler"):
        chi = euler_characteristic(mesh)
        rep.add(_pass("euler", chi=chi) if chi == 1 else
                _fail("euler", {"chi": chi}, vertices=mesh.n_vertices, edges=len(mesh.edges), faces=len(mesh.faces)))
    ece_ok = True
    if _want(cfg, "ece") or _want(cfg, "extremum_free"):
        faces = check_ece(mesh, sites, field, cfg.delta_rel, grid_h=grid.cell_diameter)
        tris = check_ece_triangles(mesh, sites, field, cfg.delta_rel)
        rec = ece_record(faces, tris, mesh)
        ece_ok = not rec.failed
        if _want(cfg, "ece"):
            rep.add(rec)
    if _want(cfg, "nondegenerate"):
        nd = check_nondegenerate(mesh, window.area)
        bad = [(c, a) for c, a, ok in nd if not ok]
        small = min((abs(a) for _, a, _ in nd), default=math.nan)
        rep.add(_fail("nondegenerate", {"face": bad[0][0], "area": bad[0][1]}, count=len(bad)) if bad
                else _pass("nondegenerate", polygons=len(nd), min_area=small))
    if _want(cfg, "convexity"):
        cv = [(k, v) for k, v in check_face_convexity(mesh) if v is not None]
        if cv:
            k, v = cv[0]
            rep.add(_fail("convexity", {"face": "-".join(map(str, mesh.faces[k].cycle)), "vertex": v}, count=len(cv)))
        else:
            rep.add(_pass("convexity", faces=len(mesh.faces)))
    if _want(cfg, "boundary_hull"):
        hc = check_boundary_equals_hull(mesh, sites)
        if hc.equal:
            rep.add(_pass("boundary_hull", edges=len(hc.hull)))
        elif hc.only_colinear_difference:
            rec = _pass("boundary_hull", edges=len(hc.boundary))
            rec.reason = "sites on hull segments are chain vertices"
            rep.add(rec)
        else:
            diff = sorted(hc.boundary ^ hc.hull)[0]
            side = "boundary_only" if diff in hc.boundary else "hull_only"
            rep.add(_fail("boundary_hull", {side: f"{diff[0]}-{diff[1]}"}, boundary=len(hc.boundary), hull=len(hc.hull)))
    if _want(cfg, "boundary_cycle"):
        rep.add(check_boundary_cycle(mesh))
    if _want(cfg, "embedding"):
        rep.add(check_embedding(mesh))
    if _want(cfg, "foldovers"):
        fo = detect_foldovers(mesh)
        rep.add(_fail("foldovers", {"edge": f"{fo[0][0]}-{fo[0][1]}"}, count=len(fo)) if fo
                else _pass("foldovers", count=0))
    if _want(cfg, "poincare_hopf") or _want(cfg, "extremum_free"):
        totals, extremum = [], None
        inner = interior_vertices(mesh)
        for k in range(INDEX_DIRECTIONS):
            n = pick_generic_direction(mesh, seed=[seed, k])
            ir = compute_indices(mesh, build_oneform(mesh, n))
            totals.append(ir.total)
            hit = [v for v in sorted(inner) if ir.vertex_sc[v] == 0]
            if hit and extremum is None:
                extremum = (hit[0], k)
        if _want(cfg, "poincare_hopf"):
            bad = [t for t in totals if t != 2]
            rep.add(_fail("poincare_hopf", {"direction": totals.index(bad[0]), "total": bad[0]}, directions=len(totals))
                    if bad else _pass("poincare_hopf", directions=len(totals), total=2))
        if _want(cfg, "extremum_free"):
            # all faces passing ECE rules out interior local extrema
            if ece_ok and extremum is not None:
                rep.add(_fail("extremum_free", {"vertex": extremum[0], "direction": extremum[1]}))
            else:
                rep.add(_pass("extremum_free", ece_all_pass=ece_ok))


def run(cfg: RunConfig, write: bool = True) -> RunResult:
    """Execute the pipeline; outputs are written when ``write`` is set."""
    t0 = time.perf_counter()
    sites, window, f = make_sites(cfg)
    grid = Grid(window, cfg.nx, cfg.ny)
    P = sites.points
    rep = VerificationReport()
    meta = rep.metadata
    meta["metric"] = cfg.metric
    meta["grid"] = f"{cfg.nx}x{cfg.ny}"
    meta["window"] = f"{window.x0:.12g},{window.y0:.12g},{window.x1:.12g},{window.y1:.12g}"
    meta["sites"] = cfg.sites
    meta["n_sites"] = len(sites)
    meta["seed"] = cfg.seed
    meta["gamma_nodal_bound"] = anisotropy_bound(f)
    meta["gamma_dense_estimate"] = anisotropy_dense_estimate(f) if f.nodes is not None else 1.0
    if sites.provenance == "net":
        eps = sites.covering_radius
        meta["net_epsilon"] = eps
        if cfg.sigma is not None:
            meta["sigma"] = cfg.sigma
            meta["epsilon_sigma"] = eps * cfg.sigma
            meta["net_gate"] = "met" if eps * cfg.sigma <= NET_GATE else "not-met"
    elif cfg.sigma is not None:
        meta["sigma"] = cfg.sigma
        eps = net_epsilon(f, sites, Grid(Rect.bounding(P), NET_CANDIDATES, NET_CANDIDATES))
        meta["net_epsilon"] = eps
        meta["epsilon_sigma"] = eps * cfg.sigma
        meta["net_gate"] = "met" if eps * cfg.sigma <= NET_GATE else "not-met"
    result = RunResult(cfg, rep, f, sites, grid)

    try:
        fp = compute_labels_frontprop(f, P, grid, cfg.tau)
    except ResolutionError as exc:
        rep.add(_fail("labels", {"stage": "labels", "error": str(exc)}))
        return _finish(result, write)
    result.timings["labels"] = time.perf_counter() - t0
    lg = fp
    if cfg.oracle or cfg.nx * cfg.ny * len(P) <= ORACLE_AUTO_COST:
        bf = compute_labels_bruteforce(f, P, grid, cfg.tau)
        if _want(cfg, "oracle"):
            rep.add(oracle_record(fp, bf))
        # carry the brute-force tie information for the degeneracy monitor
        lg = replace(fp, second=bf.second, tie_mask=bf.tie_mask)
    elif _want(cfg, "oracle"):
        rep.add(skipped("oracle", "instance above the automatic cost threshold; pass --oracle"))
    if cfg.dump_labels and write:
        dump_labels(lg, cfg.dump_labels)

    try:
        pd = extract_primal(lg, cfg.delta_rel)
        orphans = detect_orphans(pd, P)
    except ResolutionError as exc:
        rep.add(_fail("primal", {"stage": "primal", "error": str(exc)}))
        return _finish(result, write)
    result.primal = pd
    result.timings["primal"] = time.perf_counter() - t0
    meta["vertices"] = len(pd.vertices)
    meta["vertices_beyond_window"] = sum(v.outside for v in pd.vertices)
    meta["window_vertices_bounded"] = check_vertices_bounded(pd, 2.0 * grid.cell_diameter)
    if orphans:
        meta["premise"] = "unsupported-premise"
    primal_records(cfg, pd, P, rep, orphans)

    try:
        mesh = build_dual(pd, P)
    except StructuralError as exc:
        if _want(cfg, "dual_structure"):
            rep.add(_fail("dual_structure", {"stage": "dual", "error": str(exc)}))
        mesh = build_dual(pd, P, strict=False)
    else:
        if _want(cfg, "dual_structure"):
            if mesh.issues:
                rep.add(_fail("dual_structure", {"stage": "dual", "error": "; ".join(mesh.issues)}))
            else:
                rep.add(_pass("dual_structure", edges=len(mesh.edges), faces=len(mesh.faces)))
    if not mesh.colinear:
        triangulate(mesh, strict=False)
    result.mesh = mesh
    meta["dual_edges"] = len(mesh.edges)
    meta["dual_faces"] = len(mesh.faces)
    mesh_records(cfg, mesh, P, f, window, grid, rep, cfg.seed)
    result.timings["checks"] = time.perf_counter() - t0
    return _finish(result, write)


def _finish(result: RunResult, write: bool) -> RunResult:
    cfg = result.config
    if write:
        if cfg.dump_mesh and result.mesh is not None:
            dump_mesh(result.mesh, cfg.dump_mesh)
        if cfg.out_svg and result.primal is not None:
            from .render import render_svg

            render_svg(result.primal, result.mesh, cfg.out_svg)
        if cfg.out_report:
            emit_report(result.report, cfg.out_report)
    return result


# --- blending far field to the identity ------------------------------------------


@dataclass
class BlendComparison:
    rho: float
    center: tuple[float, float]
    vertices_kept: bool
    faces_kept: bool
    max_shift: float
    hull_ok: bool
    missing: list = field(default_factory=list)


def blend_radius(pd: PrimalDiagram, sites, center, pad_cells: float = 4.0) -> float:
    """Smallest radius about ``center`` holding every vertex and site, plus padding."""
    pts = [v.position for v in pd.vertices] + [tuple(p) for p in np.asarray(sites)]
    r = max(math.dist(p, center) for p in pts)
    return r + pad_cells * pd.grid.cell_diameter


def blend_invariance(result: RunResult, ramp: str = "unit", tol_rel: float = 1e-8) -> BlendComparison:
    """Rebuild the instance with the field blended to the identity far out.

    Requires every vertex inside the window (``check_vertices_bounded``).
    Vertices and faces must match the original within ``tol_rel`` times the
    window diameter, and the blended dual boundary must equal the hull.
    """
    pd, grid = result.primal, result.grid
    P = result.sites.points
    if not check_vertices_bounded(pd, 2.0 * grid.cell_diameter):
        raise ValueError("vertices are not bounded inside the window; choose a larger inflation")
    center = grid.rect.center
    rho = blend_radius(pd, P, center)
    blended = blend_to_identity(result.field, rho, ramp, center)
    lg = compute_labels_bruteforce(blended, P, grid, result.config.tau)
    pd2 = extract_primal(lg, result.config.delta_rel)
    mesh2 = build_dual(pd2, P)
    tol = tol_rel * grid.rect.diameter
    shift, missing = 0.0, []
    new = {tuple(sorted(v.incident_sites)): v for v in pd2.vertices}
    for v in pd.vertices:
        key = tuple(sorted(v.incident_sites))
        w = new.get(key)
        if w is None:
            missing.append(key)
            continue
        shift = max(shift, math.dist(v.position, w.position))
    faces1 = {tuple(f.cycle) for f in result.mesh.faces}
    faces2 = {tuple(f.cycle) for f in mesh2.faces}
    hull_ok = check_boundary_equals_hull(mesh2, P).equal
    return BlendComparison(rho, center, not missing and shift <= tol, faces1 == faces2, shift, hull_ok, missing)
