"""Site sets: seeded random sites and greedy farthest-point nets under D."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import Grid, Rect
from .metric import MetricField, quad_form

MAX_ATTEMPTS_PER_SITE = 10_000


@dataclass(frozen=True)
class SiteSet:
    points: np.ndarray
    provenance: str = "explicit"
    seed: int | None = None
    # farthest-point trace: covering radius seen before each insertion
    trace: tuple[float, ...] = field(default_factory=tuple)
    covering_radius: float | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("site coordinates must be finite")
        if len({(x, y) for x, y in pts.tolist()}) != len(pts):
            raise ValueError("sites must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i) -> np.ndarray:
        return self.points[i]

    def bounding_rect(self) -> Rect:
        return Rect.bounding(self.points)


def random_sites(domain: Rect, n: int, seed: int, min_sep: float = 0.0) -> SiteSet:
    if n < 2:
        raise ValueError("need at least 2 sites")
    if min_sep < 0:
        raise ValueError("min_sep must be >= 0")
    rng = np.random.default_rng(seed)
    pts: list[np.ndarray] = []
    attempts = 0
    budget = MAX_ATTEMPTS_PER_SITE * n
    while len(pts) < n:
        attempts += 1
        if attempts > budget:
            raise RuntimeError(f"could not place {n} sites with separation {min_sep} (domain too crowded)")
        p = np.array([rng.uniform(domain.x0, domain.x1), rng.uniform(domain.y0, domain.y1)])
        if pts and min_sep > 0:
            d = np.hypot(*(np.asarray(pts) - p).T)
            if d.min() < min_sep:
                continue
        if any(np.array_equal(p, q) for q in pts):
            continue
        pts.append(p)
    return SiteSet(np.asarray(pts), provenance="random", seed=seed)


def candidate_points(grid: Grid, seed: int | None = None, jitter: float = 0.0) -> np.ndarray:
    """Cell centers of ``grid`` as an ``(N, 2)`` array, row-major.

    A non-zero ``jitter`` displaces each center by up to ``jitter`` cell
    half-widths, deterministically in ``seed``; this breaks exact colinearity
    of picks along grid rows.
    """
    X, Y = grid.centers()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    if jitter > 0:
        rng = np.random.default_rng(seed)
        off = rng.uniform(-1.0, 1.0, pts.shape) * jitter * 0.5 * np.array([grid.hx, grid.hy])
        pts = pts + off
    return pts


def _dist_sq_from(site, pts, q) -> np.ndarray:
    return quad_form(q[0], q[1], q[2], pts[:, 0] - site[0], pts[:, 1] - site[1])


def farthest_point_net(
    field: MetricField,
    grid: Grid,
    target: int | None = None,
    epsilon: float | None = None,
    seed: int = 0,
    start=None,
    jitter: float = 0.0,
) -> SiteSet:
    """Greedy asymmetric net: repeatedly add the candidate farthest from the sites.

    "Farthest" means largest ``min_v D(v, p)``, site first.  Stops once
    ``target`` sites exist or the covering radius is at most ``epsilon``.
    Ties go to the lowest candidate index.  The first site is the candidate
    nearest ``start`` (default: the grid's center).
    """
    if target is None and epsilon is None:
        raise ValueError("give a target count or an epsilon")
    if target is not None and target < 1:
        raise ValueError("target must be >= 1")
    pts = candidate_points(grid, seed, jitter)
    if len(pts) == 0:
        raise ValueError("empty candidate set")
    q = field.eval_many(pts[:, 0], pts[:, 1])
    if start is None:
        start = grid.rect.center
    first = int(np.argmin(np.hypot(pts[:, 0] - start[0], pts[:, 1] - start[1])))
    chosen = [first]
    best = _dist_sq_from(pts[first], pts, q)
    trace: list[float] = []
    while True:
        k = int(np.argmax(best))  # argmax returns the first maximal index
        radius = float(np.sqrt(best[k]))
        if epsilon is not None and radius <= epsilon:
            break
        if target is not None and len(chosen) >= target:
            break
        if radius == 0.0:
            raise ValueError("degenerate field: every candidate already covered")
        trace.append(radius)
        chosen.append(k)
        np.minimum(best, _dist_sq_from(pts[k], pts, q), out=best)
    covering = float(np.sqrt(best.max()))
    return SiteSet(pts[chosen], provenance="net", seed=seed, trace=tuple(trace), covering_radius=covering)


def net_epsilon(field: MetricField, sites: SiteSet, grid: Grid, candidates: np.ndarray | None = None) -> float:
    """Covering radius ``max_p min_v D(v, p)`` over the grid's cell centers."""
    if len(sites) == 0:
        raise ValueError("no sites")
    pts = candidate_points(grid) if candidates is None else np.asarray(candidates, dtype=float)
    q = field.eval_many(pts[:, 0], pts[:, 1])
    best = np.full(len(pts), np.inf)
    for v in sites.points:
        np.minimum(best, _dist_sq_from(v, pts, q), out=best)
    return float(np.sqrt(best.max()))


def load_sites(path) -> SiteSet:
    rows = []
    for ln in Path(path).read_text().splitlines():
        ln = ln.split("#", 1)[0].strip()
        if ln:
            x, y = ln.split()[:2]
            rows.append((float(x), float(y)))
    return SiteSet(np.asarray(rows), provenance="explicit")


def save_sites(sites: SiteSet, path) -> None:
    Path(path).write_text("".join(f"{x!r} {y!r}\n" for x, y in sites.points.tolist()))
