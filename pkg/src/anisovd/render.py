"""SVG drawing of the primal diagram with the straight-edge dual on top."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

from .dual import DualMesh  # noqa: E402
from .primal import PrimalDiagram  # noqa: E402

PALETTE = np.array(plt.get_cmap("tab20").colors + plt.get_cmap("Pastel1").colors)


def site_colors(n: int) -> np.ndarray:
    """RGB per site, from a multiplicative hash of the index (stable across runs)."""
    idx = (np.arange(n, dtype=np.uint64) * np.uint64(2654435761)) % np.uint64(2**32) % np.uint64(len(PALETTE))
    return PALETTE[idx.astype(int)]


def render_svg(pd: PrimalDiagram, mesh: DualMesh | None, path, size: float = 6.0) -> None:
    r = pd.grid.rect
    with plt.rc_context({"svg.hashsalt": "anisovd", "svg.fonttype": "none", "path.simplify": False}):
        fig, ax = plt.subplots(figsize=(size, size * r.height / r.width))
        ax.imshow(site_colors(pd.n_sites)[pd.lg.label], origin="lower", extent=(r.x0, r.x1, r.y0, r.y1),
                  interpolation="nearest", zorder=0)
        segs = [pd.segment_xy(c) for pair in sorted(pd.edges) for c in pd.edges[pair]]
        if segs:
            ax.add_collection(LineCollection(np.concatenate(segs), colors="#262626", linewidths=0.6, zorder=1))
        inside = [v.position for v in pd.vertices if r.contains(v.position)]
        if inside:
            vx = np.asarray(inside)
            ax.plot(vx[:, 0], vx[:, 1], "o", color="red", markersize=2.5, zorder=3)
        if mesh is not None:
            pts = mesh.points
            lines = [(pts[i], pts[j]) for i, j in mesh.drawn_edges(with_fan=False)]
            if lines:
                ax.add_collection(LineCollection(lines, colors="black", linewidths=0.8, zorder=2))
            ax.plot(pts[:, 0], pts[:, 1], "o", color="black", markersize=2.5, zorder=4)
        ax.set_xlim(r.x0, r.x1)
        ax.set_ylim(r.y0, r.y1)
        ax.set_aspect("equal")
        ax.set_axis_off()
        fig.subplots_adjust(0, 0, 1, 1)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
