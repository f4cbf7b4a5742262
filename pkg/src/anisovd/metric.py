"""Metric tensor fields, the point-evaluated quadratic distance, and helpers.

The distance from a site ``v`` to a point ``p`` is measured with the tensor
evaluated at ``p`` (not at the site)::

    D(v, p) = sqrt((p - v)^T Q(p) (p - v))

Grid-sampled fields interpolate tensor entries bilinearly between nodes.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np

from .domain import Rect

NODAL_SAFETY = 1.0 + 1e-9


class OutOfDomainError(ValueError):
    pass


@dataclass(frozen=True)
class Spd2:
    q11: float
    q12: float
    q22: float

    def __post_init__(self):
        if not (self.q11 > 0 and self.q11 * self.q22 - self.q12 * self.q12 > 0):
            raise ValueError(f"not symmetric positive definite: {self}")

    @property
    def det(self) -> float:
        return self.q11 * self.q22 - self.q12 * self.q12

    def matrix(self) -> np.ndarray:
        return np.array([[self.q11, self.q12], [self.q12, self.q22]])

    def quad(self, dx: float, dy: float) -> float:
        return dx * dx * self.q11 + 2.0 * dx * dy * self.q12 + dy * dy * self.q22

    @classmethod
    def from_matrix(cls, m) -> "Spd2":
        m = np.asarray(m, dtype=float)
        return cls(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))


def quad_form(q11, q12, q22, dx, dy):
    """Vectorised ``d^T Q d``; the operation order is shared by every caller."""
    return dx * dx * q11 + 2.0 * dx * dy * q12 + dy * dy * q22


class FieldKind(enum.Enum):
    IDENTITY = "closed-form-id"
    GRID = "grid-sampled"


@dataclass(frozen=True, eq=False)
class MetricField:
    """Immutable metric over a rectangle.

    ``nodes`` has shape ``(ny, nx, 3)`` holding ``(q11, q12, q22)`` at the
    node ``(x0 + i*(x1-x0)/(nx-1), y0 + j*(y1-y0)/(ny-1))`` in slot ``[j, i]``.
    The identity kind needs no nodes and is defined everywhere.
    """

    kind: FieldKind
    rect: Rect | None = None
    nodes: np.ndarray | None = None
    name: str = ""
    params: tuple = dc_field(default_factory=tuple)
    # evaluate outside the rectangle at the nearest point of it
    extend: bool = False

    def __post_init__(self):
        if self.kind is FieldKind.GRID:
            if self.nodes is None or self.rect is None:
                raise ValueError("grid field needs nodes and a rectangle")
            nodes = np.array(self.nodes, dtype=float)
            if nodes.ndim != 3 or nodes.shape[2] != 3 or min(nodes.shape[:2]) < 2:
                raise ValueError("nodes must have shape (ny>=2, nx>=2, 3)")
            q11, q12, q22 = nodes[..., 0], nodes[..., 1], nodes[..., 2]
            if not np.all(np.isfinite(nodes)) or np.any(q11 <= 0) or np.any(q11 * q22 - q12 * q12 <= 0):
                raise ValueError("every node tensor must be symmetric positive definite")
            nodes.setflags(write=False)
            object.__setattr__(self, "nodes", nodes)

    @classmethod
    def identity(cls) -> "MetricField":
        return cls(FieldKind.IDENTITY, name="identity")

    @classmethod
    def from_nodes(cls, rect: Rect, nodes, name: str = "grid", params: tuple = ()) -> "MetricField":
        return cls(FieldKind.GRID, rect=rect, nodes=np.asarray(nodes, dtype=float), name=name, params=params)

    @classmethod
    def sample(cls, fn: Callable, rect: Rect, nx: int, ny: int, name: str = "", params: tuple = ()) -> "MetricField":
        """Sample a closed-form ``fn(x, y) -> (q11, q12, q22)`` on nodes."""
        xs = np.linspace(rect.x0, rect.x1, nx)
        ys = np.linspace(rect.y0, rect.y1, ny)
        X, Y = np.meshgrid(xs, ys)
        q11, q12, q22 = fn(X, Y)
        nodes = np.stack(np.broadcast_arrays(q11, q12, q22), axis=-1).astype(float)
        return cls.from_nodes(rect, nodes, name=name, params=params)

    @property
    def shape(self) -> tuple[int, int]:
        """``(nx, ny)`` node counts."""
        if self.nodes is None:
            return (0, 0)
        return self.nodes.shape[1], self.nodes.shape[0]

    def node_xy(self) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.shape
        return np.meshgrid(np.linspace(self.rect.x0, self.rect.x1, nx), np.linspace(self.rect.y0, self.rect.y1, ny))

    def extended(self) -> "MetricField":
        """The same field, constant along outward normals beyond the rectangle."""
        if self.kind is FieldKind.IDENTITY or self.extend:
            return self
        return dataclasses.replace(self, extend=True)

    def covers(self, rect: Rect) -> bool:
        return self.kind is FieldKind.IDENTITY or self.rect.covers(rect)

    def eval_many(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Bilinear evaluation at arrays of points; returns entry arrays."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind is FieldKind.IDENTITY:
            one = np.ones(np.broadcast(x, y).shape)
            return one, np.zeros_like(one), one.copy()
        r = self.rect
        tol = 1e-12 * max(r.width, r.height)
        if self.extend:
            x = np.clip(x, r.x0, r.x1)
            y = np.clip(y, r.y0, r.y1)
        elif np.any(x < r.x0 - tol) or np.any(x > r.x1 + tol) or np.any(y < r.y0 - tol) or np.any(y > r.y1 + tol):
            raise OutOfDomainError("point outside the metric domain")
        nx, ny = self.shape
        u = np.clip((x - r.x0) / r.width * (nx - 1), 0.0, nx - 1)
        v = np.clip((y - r.y0) / r.height * (ny - 1), 0.0, ny - 1)
        i = np.minimum(np.floor(u).astype(int), nx - 2)
        j = np.minimum(np.floor(v).astype(int), ny - 2)
        fu = (u - i)[..., None]
        fv = (v - j)[..., None]
        n = self.nodes
        q = (
            (1 - fu) * (1 - fv) * n[j, i]
            + fu * (1 - fv) * n[j, i + 1]
            + (1 - fu) * fv * n[j + 1, i]
            + fu * fv * n[j + 1, i + 1]
        )
        return q[..., 0], q[..., 1], q[..., 2]


def eval_metric(field: MetricField, p) -> Spd2:
    q11, q12, q22 = field.eval_many(p[0], p[1])
    return Spd2(float(q11), float(q12), float(q22))


def distance(field: MetricField, v, p) -> float:
    """``D(v, p)`` with the tensor taken at the query point ``p``."""
    q = eval_metric(field, p)
    return math.sqrt(q.quad(p[0] - v[0], p[1] - v[1]))


def distance_sq_many(field: MetricField, v, x, y) -> np.ndarray:
    q11, q12, q22 = field.eval_many(x, y)
    return quad_form(q11, q12, q22, np.asarray(x) - v[0], np.asarray(y) - v[1])


# --- eigen-structure -------------------------------------------------------


@dataclass(frozen=True)
class SqrtPair:
    M: np.ndarray
    Mprime: np.ndarray
    lambda1: float
    lambda2: float
    rotation: np.ndarray


def eigen2(q11: float, q12: float, q22: float) -> tuple[float, float, float]:
    """Closed-form ``(lambda1, lambda2, theta)`` with lambda2 >= lambda1.

    ``(cos theta, sin theta)`` is the eigenvector of ``lambda2``.
    """
    mean = 0.5 * (q11 + q22)
    rad = math.hypot(0.5 * (q11 - q22), q12)
    lam2 = mean + rad
    # product form avoids cancellation for nearly isotropic, large tensors
    det = q11 * q22 - q12 * q12
    lam1 = det / lam2
    theta = 0.5 * math.atan2(2.0 * q12, q11 - q22)
    return lam1, lam2, theta


def eigen_ratio_many(q11, q12, q22) -> np.ndarray:
    mean = 0.5 * (q11 + q22)
    rad = np.hypot(0.5 * (q11 - q22), q12)
    lam2 = mean + rad
    lam1 = (q11 * q22 - q12 * q12) / lam2
    return lam2 / lam1


def _rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def sqrt_pair(Q: Spd2) -> SqrtPair:
    lam1, lam2, theta = eigen2(Q.q11, Q.q12, Q.q22)
    R = _rot(theta)
    M = R @ np.diag([math.sqrt(lam2), math.sqrt(lam1)]) @ R.T
    Mp = R @ np.diag([math.sqrt(lam2 / lam1), 1.0]) @ R.T
    return SqrtPair(M=M, Mprime=Mp, lambda1=lam1, lambda2=lam2, rotation=R)


def anisotropy_bound(field: MetricField) -> float:
    """Nodal bound on ``sqrt(lambda2/lambda1)``, padded by a tiny factor."""
    if field.kind is FieldKind.IDENTITY:
        return NODAL_SAFETY
    n = field.nodes
    ratio = eigen_ratio_many(n[..., 0], n[..., 1], n[..., 2])
    return float(math.sqrt(ratio.max())) * NODAL_SAFETY


def anisotropy_dense_estimate(field: MetricField, per_cell: int = 4) -> float:
    """Eigen-ratio bound from a subsample inside every metric cell.

    Bilinear blending can push the interior ratio slightly past the nodal
    maximum; this estimate is reported next to the nodal bound.
    """
    if field.kind is FieldKind.IDENTITY:
        return 1.0
    nx, ny = field.shape
    r = field.rect
    xs = np.linspace(r.x0, r.x1, (nx - 1) * per_cell + 1)
    ys = np.linspace(r.y0, r.y1, (ny - 1) * per_cell + 1)
    X, Y = np.meshgrid(xs, ys)
    q11, q12, q22 = field.eval_many(X, Y)
    return float(math.sqrt(eigen_ratio_many(q11, q12, q22).max()))


# --- blending toward the identity ------------------------------------------


def blend_weight(r, rho: float, ramp: str = "unit") -> np.ndarray:
    """Blend weight as a function of distance ``r`` from the blend center.

    ``unit`` ramps linearly over ``[rho, rho + 1]``; ``double`` ramps over
    ``[rho, 2 rho]``.
    """
    r = np.asarray(r, dtype=float)
    if ramp == "unit":
        width = 1.0
    elif ramp == "double":
        width = rho
    else:
        raise ValueError(f"unknown ramp {ramp!r}")
    return np.clip((r - rho) / width, 0.0, 1.0)


def blend_to_identity(field: MetricField, rho: float, ramp: str = "unit", center=(0.0, 0.0)) -> MetricField:
    """``Q'(p) = (1 - w(p)) Q(p) + w(p) I`` applied at the field's nodes."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if field.kind is FieldKind.IDENTITY:
        return field
    X, Y = field.node_xy()
    w = blend_weight(np.hypot(X - center[0], Y - center[1]), rho, ramp)[..., None]
    eye = np.array([1.0, 0.0, 1.0])
    nodes = (1.0 - w) * field.nodes + w * eye
    return MetricField.from_nodes(field.rect, nodes, name=f"{field.name}+blend", params=field.params + (rho, ramp))


# --- ellipses --------------------------------------------------------------


class EllipseSide(enum.Enum):
    INSIDE = "inside"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    Q: Spd2
    radius_sq: float

    def __post_init__(self):
        if not self.radius_sq > 0:
            raise ValueError("ellipse radius must be positive")

    def value(self, q) -> float:
        return self.Q.quad(q[0] - self.center[0], q[1] - self.center[1])


DELTA_REL = 1e-6


def ellipse_contains(e: Ellipse, q, delta_rel: float = DELTA_REL) -> EllipseSide:
    val = e.value(q)
    if val < e.radius_sq * (1.0 - delta_rel):
        return EllipseSide.INSIDE
    if val <= e.radius_sq * (1.0 + delta_rel):
        return EllipseSide.BOUNDARY
    return EllipseSide.OUTSIDE


# --- built-in closed forms and the text file format ------------------------


def _identity_fn(x, y):
    return np.ones_like(x), np.zeros_like(x), np.ones_like(x)


def _diag_fn(a: float, b: float):
    if a <= 0 or b <= 0:
        raise ValueError("diag entries must be positive")

    def fn(x, y):
        return np.full_like(x, a), np.zeros_like(x), np.full_like(x, b)

    return fn


def _swirl_fn(strength: float, ratio: float = 4.0):
    """Fixed eigen-ratio; major axis turns by ``strength`` radians per unit radius."""
    if ratio < 1:
        raise ValueError("swirl ratio must be >= 1")

    def fn(x, y):
        th = strength * np.hypot(x, y)
        c, s = np.cos(th), np.sin(th)
        return ratio * c * c + s * s, (ratio - 1.0) * c * s, ratio * s * s + c * c

    return fn


def _sine_fn(amp: float, freq: float):
    """Axis-aligned tensor whose eigenvalues oscillate in ``[1, 1 + amp]``."""
    if amp < 0:
        raise ValueError("sine amplitude must be >= 0")

    def fn(x, y):
        return 1.0 + amp * 0.5 * (1.0 + np.sin(freq * x)), np.zeros_like(x), 1.0 + amp * 0.5 * (1.0 + np.cos(freq * y))

    return fn


def _pinch_fn(cx: float, cy: float, angle: float, eps: float, radius: float):
    """Identity except in a disc, where distances along ``angle`` shrink.

    At the disc's center the tensor is ``R diag(eps, 1) R^T``; a cosine
    taper brings it back to the identity at ``radius``.  A site far away
    along ``angle`` can then become the nearest one at the center.
    """
    if not 0 < eps <= 1 or radius <= 0:
        raise ValueError("pinch needs 0 < eps <= 1 and radius > 0")
    c, s = math.cos(angle), math.sin(angle)

    def fn(x, y):
        r = np.hypot(x - cx, y - cy) / radius
        w = np.where(r < 1.0, np.cos(0.5 * np.pi * np.minimum(r, 1.0)) ** 2, 0.0)
        t = w * (eps - 1.0)
        return 1.0 + t * c * c, t * c * s, 1.0 + t * s * s

    return fn


def builtin_function(spec: str) -> tuple[str, tuple, Callable]:
    name, _, rest = spec.partition(":")
    args = tuple(float(a) for a in rest.split(",")) if rest else ()
    if name == "identity" and not args:
        return name, args, _identity_fn
    if name == "diag" and len(args) == 2:
        return name, args, _diag_fn(*args)
    if name == "swirl" and len(args) in (1, 2):
        return name, args, _swirl_fn(*args)
    if name == "sine" and len(args) == 2:
        return name, args, _sine_fn(*args)
    if name == "pinch" and len(args) == 5:
        return name, args, _pinch_fn(*args)
    raise ValueError(f"unknown metric spec {spec!r}")


def builtin_metric(spec: str, rect: Rect, nx: int = 129, ny: int = 129) -> MetricField:
    """Sample a named closed-form metric onto a node grid over ``rect``."""
    name, args, fn = builtin_function(spec)
    return MetricField.sample(fn, rect, nx, ny, name=name, params=args)


def load_metric_file(path) -> MetricField:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    head = lines[0].split()
    nx, ny = int(head[0]), int(head[1])
    x0, y0, x1, y1 = map(float, head[2:6])
    body = np.array([[float(t) for t in ln.split()] for ln in lines[1:]])
    if body.shape != (nx * ny, 3):
        raise ValueError(f"expected {nx * ny} tensor lines, got {body.shape[0]}")
    return MetricField.from_nodes(Rect(x0, y0, x1, y1), body.reshape(ny, nx, 3), name=f"file:{path}")


def save_metric_file(field: MetricField, path) -> None:
    nx, ny = field.shape
    r = field.rect
    out = [f"{nx} {ny} " + " ".join(repr(float(v)) for v in (r.x0, r.y0, r.x1, r.y1))]
    out += [f"{a!r} {b!r} {c!r}" for a, b, c in field.nodes.reshape(-1, 3).tolist()]
    Path(path).write_text("\n".join(out) + "\n")
