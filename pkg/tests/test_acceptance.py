"""Acceptance suite.

Each test checks one numbered criterion at its stated tolerance and prints a
single ``criterion N: PASS|FAIL`` line (collected again in the pytest
summary).  Failures are reported, never softened.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
import pytest

from anisovd.cli import main as cli_main
from anisovd.dual import StructuralError, build_dual, colinear_chain
from anisovd.metric import anisotropy_bound, quad_form
from anisovd.pipeline import RunConfig, blend_invariance, run
from anisovd.primal import (
    TAU_TIE,
    check_edges_connected,
    check_region_simply_connected,
    check_vertices_bounded,
    detect_orphans,
    site_interior,
)
from anisovd.sites import save_sites, SiteSet
from anisovd.verify import (
    build_oneform,
    check_boundary_equals_hull,
    check_ece,
    check_ece_triangles,
    check_embedding,
    check_face_convexity,
    check_nondegenerate,
    check_simple_graph,
    compute_indices,
    crossing_pairs,
    detect_foldovers,
    pick_generic_direction,
)

METRICS = ("identity", "diag:4,1", "swirl:0.5", "sine:1,3")
SEEDS = range(6)
SIZES = (8, 16, 24, 32, 40, 48, 56, 64)
TIME_BUDGET = 5.0
DELTA = 1e-6


def _suite_configs():
    for metric in METRICS:
        for seed in SEEDS:
            n = SIZES[(seed + METRICS.index(metric)) % len(SIZES)]
            yield RunConfig(metric=metric, sites=f"random:{n}", seed=seed, oracle=True)


@pytest.fixture(scope="module")
def suite():
    out = []
    for cfg in _suite_configs():
        t0 = time.perf_counter()
        res = run(cfg, write=False)
        out.append((cfg, res, time.perf_counter() - t0))
    return out


def _tag(cfg: RunConfig) -> str:
    return f"{cfg.metric}/{cfg.sites}/seed{cfg.seed}"


def _oracle_labels(field, sites, grid, tau=TAU_TIE):
    """Independent nearest-site scan: labels and a tie mask, sites in reverse."""
    X, Y = grid.centers()
    q11, q12, q22 = field.eval_many(X, Y)
    best = np.full(X.shape, np.inf)
    label = np.full(X.shape, -1)
    d2 = []
    for s in range(len(sites) - 1, -1, -1):
        d = quad_form(q11, q12, q22, X - sites[s, 0], Y - sites[s, 1])
        d2.append(d)
        closer = d <= best
        label[closer] = s
        best = np.minimum(best, d)
    near = sum((d <= best * (1.0 + tau)).astype(int) for d in d2)
    return label, near > 1


def _orphan_free(res) -> bool:
    return res.primal is not None and not detect_orphans(res.primal, res.sites.points)


def test_criterion_1_oracle_equivalence(suite, acceptance_log):
    bad, slow = [], []
    for cfg, res, secs in suite:
        ref, ties = _oracle_labels(res.field, res.sites.points, res.grid)
        differ = (res.primal.lg.label != ref) & ~ties
        if differ.any():
            bad.append(f"{_tag(cfg)}:{int(differ.sum())}")
        if secs >= TIME_BUDGET:
            slow.append(f"{_tag(cfg)}:{secs:.2f}s")
        assert anisotropy_bound(res.field) <= 4.0
    worst = max(secs for _, _, secs in suite)
    ok = len(suite) >= 20 and not bad and not slow
    acceptance_log(1, ok, f"{len(suite)} instances, mismatches={bad or 0}, slowest={worst:.2f}s, over budget={slow or 0}")
    assert ok


def test_criterion_2_ece(suite, acceptance_log):
    checked, failures = 0, []
    for cfg, res, _ in suite:
        if not _orphan_free(res):
            continue
        checked += 1
        mesh, P = res.mesh, res.sites.points
        for f in mesh.faces:
            w = f.witness
            if not (w.refined and w.residual < 1e-10 * (1.0 + w.mu)):
                failures.append(f"{_tag(cfg)} face {f.cycle} witness residual {w.residual:.3g}")
        faces = check_ece(mesh, P, res.field, DELTA)
        tris = check_ece_triangles(mesh, P, res.field, DELTA)
        failures += [f"{_tag(cfg)} face {mesh.faces[r.face].cycle} contains {r.inside}" for r in faces if not r.passed]
        failures += [f"{_tag(cfg)} triangle {mesh.triangles[r.face]} contains {r.inside}" for r in tris if not r.passed]
    ok = checked >= 20 and not failures
    acceptance_log(2, ok, f"{checked} orphan-free instances, failing faces/triangles={failures[:3] or 0}")
    assert ok


def test_criterion_3_boundary_equals_hull(suite, acceptance_log):
    checked, bad = 0, []
    for cfg, res, _ in suite:
        if not _orphan_free(res):
            continue
        checked += 1
        hc = check_boundary_equals_hull(res.mesh, res.sites.points)
        if not hc.equal:
            bad.append(f"{_tag(cfg)} B^H={sorted(hc.boundary ^ hc.hull)}")
    ok = checked >= 20 and not bad
    acceptance_log(3, ok, f"{checked} instances, mismatches={bad or 0}")
    assert ok


def test_criterion_4_embedding(suite, acceptance_log):
    checked, bad = 0, []
    probes = 0
    for cfg, res, _ in suite:
        if not _orphan_free(res):
            continue
        checked += 1
        mesh = res.mesh
        tag = _tag(cfg)
        if crossing_pairs(mesh.points, mesh.drawn_edges()):
            bad.append(f"{tag} crossings")
        rec = check_embedding(mesh)
        probes += int(rec.margins.get("probes", 0))
        if rec.failed:
            bad.append(f"{tag} embedding {rec.witness}")
        if detect_foldovers(mesh):
            bad.append(f"{tag} foldovers {detect_foldovers(mesh)}")
        if any(v is not None for _, v in check_face_convexity(mesh)):
            bad.append(f"{tag} non-convex face")
        if not all(ok for _, _, ok in check_nondegenerate(mesh, res.grid.rect.area)):
            bad.append(f"{tag} degenerate face")
    ok = checked >= 20 and not bad
    acceptance_log(4, ok, f"{checked} instances, {probes} probes covered once, problems={bad[:3] or 0}")
    assert ok


def test_criterion_5_poincare_hopf(suite, acceptance_log):
    totals, bad = 0, []
    for cfg, res, _ in suite:
        mesh = res.mesh
        for k in range(5):
            n = pick_generic_direction(mesh, seed=1000 * cfg.seed + k)
            form = build_oneform(mesh, n)
            for on in ("fan", "polygon"):
                t = compute_indices(mesh, form, on=on).total
                totals += 1
                if t != 2:
                    bad.append(f"{_tag(cfg)} dir{k} {on} total={t}")
    ok = not bad
    acceptance_log(5, ok, f"{totals} index sums over {len(suite)} instances x 5 directions, off-target={bad[:3] or 0}")
    assert ok


def test_criterion_6_primal_structure(suite, acceptance_log):
    bad = []
    for cfg, res, _ in suite:
        pd, P, tag = res.primal, res.sites.points, _tag(cfg)
        if detect_orphans(pd, P):
            bad.append(f"{tag} orphans")
        if not site_interior(pd, P).all():
            bad.append(f"{tag} site not interior")
        if not check_region_simply_connected(pd).all():
            bad.append(f"{tag} region with hole")
        split = [p for p, v in check_edges_connected(pd).items() if not v]
        if split:
            bad.append(f"{tag} split interface {split[0]}")
        if check_simple_graph(res.mesh).failed:
            bad.append(f"{tag} multi-edge")
    ok = not bad
    acceptance_log(6, ok, f"{len(suite)} instances, problems={bad[:3] or 0}")
    assert ok


COLINEAR_FIXTURES = {
    "horizontal": [(0.0, 0.0), (1.0, 0.0), (2.5, 0.0), (0.4, 0.0)],
    "slope-half": [(0.0, 0.0), (0.25, 0.125), (1.0, 0.5), (0.5, 0.25)],
    "vertical": [(0.3, 1.0), (0.3, -0.5), (0.3, 0.0), (0.3, 2.0), (0.3, 0.25)],
}


def _consecutive_pairs(points) -> list[tuple[int, int]]:
    pts = np.asarray(points)
    d = pts[-1] - pts[0] if np.any(pts[-1] != pts[0]) else pts[1] - pts[0]
    order = np.argsort(pts @ d)
    return sorted(tuple(sorted((int(order[k]), int(order[k + 1])))) for k in range(len(order) - 1))


def test_criterion_7_colinear_chain(tmp_path, acceptance_log):
    bad = []
    for name, pts in COLINEAR_FIXTURES.items():
        path = tmp_path / f"{name}.txt"
        save_sites(SiteSet(np.asarray(pts)), path)
        expected = _consecutive_pairs(pts)
        assert colinear_chain(pts).edges == expected
        per_metric = {}
        for metric in ("identity", "swirl:0.5"):
            res = run(RunConfig(metric=metric, sites=f"file:{path}"), write=False)
            per_metric[metric] = sorted(res.mesh.edges)
            if not res.mesh.colinear or res.mesh.faces:
                bad.append(f"{name}/{metric} not a chain")
            if res.report.get("colinear_chain").failed:
                bad.append(f"{name}/{metric} chain record")
        if any(e != expected for e in per_metric.values()):
            bad.append(f"{name}: {per_metric} != {expected}")
    ok = not bad
    acceptance_log(7, ok, f"{len(COLINEAR_FIXTURES)} fixtures x 2 metrics, problems={bad or 0}")
    assert ok


# swirl instances whose every vertex lies well inside the default window
BLEND_CASES = [("swirl:0.5", "random:8", 0), ("swirl:0.5", "random:12", 1), ("swirl:1", "random:12", 1)]


def test_criterion_8_blend_invariance(acceptance_log):
    bad, done = [], 0
    for metric, sites, seed in BLEND_CASES:
        res = run(RunConfig(metric=metric, sites=sites, seed=seed), write=False)
        tag = f"{metric}/{sites}/seed{seed}"
        if not check_vertices_bounded(res.primal, 2.0 * res.grid.cell_diameter):
            bad.append(f"{tag} unbounded")
            continue
        for ramp in ("unit", "double"):
            cmp = blend_invariance(res, ramp)
            done += 1
            if not (cmp.vertices_kept and cmp.faces_kept and cmp.hull_ok):
                bad.append(f"{tag}/{ramp} shift={cmp.max_shift:.3g} missing={cmp.missing} hull={cmp.hull_ok}")
    ok = done >= 4 and not bad
    acceptance_log(8, ok, f"{done} blended instances, problems={bad or 0}")
    assert ok


# an edge point of the base diagram (on the axis, equidistant from site 0
# and sites 1, 2) receives a thin pinch that pulls it toward a third site
ORPHAN_SITES = [(0.0, 0.3), (-0.05, -0.3), (0.05, -0.3), (0.6, 0.25), (0.6, -0.25), (1.2, 0.0), (-0.6, 0.7)]
PINCH_Y = (0.3**2 - 0.3**2 - 0.05**2) / (2 * 0.6)
ORPHAN_METRIC = f"pinch:0,{PINCH_Y!r},0,0.01,0.3"


def test_criterion_9_orphan_fixture(tmp_path, acceptance_log):
    path = tmp_path / "orphan_sites.txt"
    save_sites(SiteSet(np.asarray(ORPHAN_SITES)), path)
    base = run(RunConfig(metric="identity", sites=f"file:{path}"), write=False)
    assert base.exit_code == 0 and not detect_orphans(base.primal, base.sites.points)

    res = run(RunConfig(metric=ORPHAN_METRIC, sites=f"file:{path}"), write=False)
    P = res.sites.points
    orphans = detect_orphans(res.primal, P)
    structural = False
    try:
        build_dual(res.primal, P, strict=True)
    except StructuralError:
        structural = True
    ece_fail = any(not r.passed for r in check_ece(res.mesh, P, res.field))
    rec = res.report.get("orphans")
    ok = bool(orphans) and (ece_fail or structural) and rec.failed and res.exit_code != 0
    acceptance_log(9, ok, f"orphans={orphans}, ece_fail={ece_fail}, structural_error={structural}, "
                          f"report witness={rec.witness}, exit={res.exit_code}")
    assert ok


DETERMINISM_CASES = [
    ["--metric", "sine:1,3", "--sites", "net:20", "--seed", "5"],
    ["--metric", "swirl:0.5", "--sites", "random:24", "--seed", "2", "--grid", "128x128"],
]


def test_criterion_10_determinism(tmp_path, acceptance_log):
    bad = []
    for c, args in enumerate(DETERMINISM_CASES):
        outs = []
        for k in range(2):
            d = tmp_path / f"case{c}_run{k}"
            d.mkdir()
            files = {"labels": d / "a.lab", "mesh": d / "a.mesh", "svg": d / "a.svg", "report": d / "a.txt"}
            cli_main(args + ["-q", "--dump-labels", str(files["labels"]), "--dump-mesh", str(files["mesh"]),
                             "--out-svg", str(files["svg"]), "--out-report", str(files["report"])])
            outs.append({k2: Path(p).read_bytes() for k2, p in files.items()})
        for kind in outs[0]:
            if not outs[0][kind] or outs[0][kind] != outs[1][kind]:
                bad.append(f"case{c}:{kind}")
    ok = not bad
    acceptance_log(10, ok, f"{len(DETERMINISM_CASES)} configs x 4 artifacts byte-identical, differing={bad or 0}")
    assert ok
