"""Anisotropic Voronoi diagrams on a grid, their straight-edge duals, and
mechanical checks of the dual's structure."""

from .domain import Grid, Rect
from .dual import DualFace, DualMesh, StructuralError, build_dual, colinear_chain, fan_triangulate, triangulate
from .metric import MetricField, Spd2, builtin_metric, distance, eval_metric
from .pipeline import RunConfig, RunResult, run
from .primal import (
    LabelGrid,
    PrimalDiagram,
    VoronoiVertex,
    compute_labels_bruteforce,
    compute_labels_frontprop,
    detect_orphans,
    extract_primal,
)
from .sites import SiteSet, farthest_point_net, random_sites
from .verify import VerificationReport

__all__ = [
    "DualFace", "DualMesh", "Grid", "LabelGrid", "MetricField", "PrimalDiagram", "Rect", "RunConfig",
    "RunResult", "SiteSet", "Spd2", "StructuralError", "VerificationReport", "VoronoiVertex", "build_dual",
    "builtin_metric", "colinear_chain", "compute_labels_bruteforce", "compute_labels_frontprop",
    "detect_orphans", "distance", "eval_metric", "extract_primal", "fan_triangulate", "farthest_point_net",
    "random_sites", "run", "triangulate",
]

__version__ = "0.1.0"
