"""Axis-aligned rectangles and the regular cell grids laid over them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"empty rectangle {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.width, self.height))

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)

    def contains(self, p, strict: bool = False) -> bool:
        x, y = p
        if strict:
            return self.x0 < x < self.x1 and self.y0 < y < self.y1
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def covers(self, other: "Rect") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and self.x1 >= other.x1
            and self.y1 >= other.y1
        )

    def inflate(self, factor: float) -> "Rect":
        """Scale about the center by ``factor`` (1 leaves it unchanged)."""
        if factor < 1:
            raise ValueError("inflation factor must be >= 1")
        cx, cy = self.center
        hw, hh = 0.5 * factor * self.width, 0.5 * factor * self.height
        return Rect(cx - hw, cy - hh, cx + hw, cy + hh)

    @classmethod
    def bounding(cls, points, min_extent: float = 1e-3) -> "Rect":
        pts = np.asarray(points, dtype=float)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        ext = np.maximum(hi - lo, min_extent)
        mid = 0.5 * (lo + hi)
        return cls(mid[0] - ext[0] / 2, mid[1] - ext[1] / 2, mid[0] + ext[0] / 2, mid[1] + ext[1] / 2)


@dataclass(frozen=True)
class Grid:
    """``nx`` by ``ny`` cells covering ``rect``; arrays are indexed ``[iy, ix]``."""

    rect: Rect
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one cell per side")

    @property
    def hx(self) -> float:
        return self.rect.width / self.nx

    @property
    def hy(self) -> float:
        return self.rect.height / self.ny

    @property
    def cell_diameter(self) -> float:
        return float(np.hypot(self.hx, self.hy))

    def xs(self) -> np.ndarray:
        return self.rect.x0 + (np.arange(self.nx) + 0.5) * self.hx

    def ys(self) -> np.ndarray:
        return self.rect.y0 + (np.arange(self.ny) + 0.5) * self.hy

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinate arrays of shape ``(ny, nx)``."""
        return np.meshgrid(self.xs(), self.ys())

    def cell_of(self, p) -> tuple[int, int]:
        """``(iy, ix)`` of the cell containing ``p`` (clamped to the grid)."""
        ix = int(np.floor((p[0] - self.rect.x0) / self.hx))
        iy = int(np.floor((p[1] - self.rect.y0) / self.hy))
        return min(max(iy, 0), self.ny - 1), min(max(ix, 0), self.nx - 1)

    def corner(self, iy: int, ix: int) -> tuple[float, float]:
        """Coordinates of grid corner ``(iy, ix)``, 0 <= iy <= ny."""
        return self.rect.x0 + ix * self.hx, self.rect.y0 + iy * self.hy
