"""Tab-delimited verification reports: stable field order, 12 significant digits."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .verify import CheckRecord, VerificationReport

HEADER = "# anisovd verification report v1"


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    return str(v).replace("\t", " ").replace("\n", " ")


def record_line(rec: CheckRecord) -> str:
    fields = ["check", rec.name, rec.status]
    if rec.reason:
        fields.append(f"reason={fmt(rec.reason)}")
    fields += [f"witness.{k}={fmt(v)}" for k, v in rec.witness.items()]
    fields += [f"margin.{k}={fmt(v)}" for k, v in rec.margins.items()]
    return "\t".join(fields)


def render_report(report: VerificationReport) -> str:
    lines = [HEADER]
    lines += [f"meta\t{k}\t{fmt(v)}" for k, v in report.metadata.items()]
    lines += [record_line(r) for r in report.records]
    failed = [r.name for r in report.records if r.failed]
    lines.append(f"summary\t{'pass' if not failed else 'fail'}\tfailed={','.join(failed) or 'none'}")
    return "\n".join(lines) + "\n"


def emit_report(report: VerificationReport, path) -> None:
    Path(path).write_text(render_report(report))


def parse_report(text: str) -> tuple[dict, list[dict]]:
    """Metadata and check records of a rendered report, values as strings."""
    meta, checks = {}, []
    for ln in text.splitlines():
        if not ln or ln.startswith("#"):
            continue
        tok = ln.split("\t")
        if tok[0] == "meta":
            meta[tok[1]] = tok[2]
        elif tok[0] == "check":
            rec = {"name": tok[1], "status": tok[2]}
            for t in tok[3:]:
                k, _, v = t.partition("=")
                rec[k] = v
            checks.append(rec)
    return meta, checks
