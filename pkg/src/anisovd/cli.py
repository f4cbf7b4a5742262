"""Command line: ``anisovd --metric swirl:0.5 --sites random:20 --out-svg d.svg``.

Every flag can also come from a plain ``key=value`` config file (keys are
flag names without the leading dashes); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .pipeline import ALL_CHECKS, RunConfig, run

# flag name -> (RunConfig field, parser)
_KEYS = {
    "metric": ("metric", str),
    "inflate": ("inflate", float),
    "sites": ("sites", str),
    "seed": ("seed", int),
    "sigma": ("sigma", float),
    "out-svg": ("out_svg", str),
    "out-report": ("out_report", str),
    "checks": ("checks", str),
    "dump-labels": ("dump_labels", str),
    "dump-mesh": ("dump_mesh", str),
    "min-sep": ("min_sep", float),
    "net-jitter": ("net_jitter", float),
    "delta-rel": ("delta_rel", float),
    "tau": ("tau", float),
}


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def parse_grid(s: str) -> tuple[int, int]:
    nx, sep, ny = s.lower().partition("x")
    if not sep:
        raise argparse.ArgumentTypeError(f"grid must look like 256x256, got {s!r}")
    return int(nx), int(ny)


def parse_domain(s: str) -> tuple[float, float, float, float]:
    vals = tuple(float(t) for t in s.split(","))
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("site domain needs x0,y0,x1,y1")
    return vals


def read_config_file(path) -> dict:
    """``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for n, ln in enumerate(Path(path).read_text().splitlines(), 1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        key, sep, val = ln.partition("=")
        if not sep:
            raise ValueError(f"{path}:{n}: expected key=value")
        out[key.strip().replace("_", "-")] = val.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anisovd", description="Anisotropic Voronoi diagrams, their dual meshes, and checks.")
    p.add_argument("--config", help="key=value file mirroring the flags")
    p.add_argument("--metric", help="identity | diag:a,b | swirl:s[,ratio] | sine:amp,freq | pinch:cx,cy,angle,eps,r | file:PATH")
    p.add_argument("--grid", type=parse_grid, help="cells per side, NXxNY (default 256x256)")
    p.add_argument("--inflate", type=float, help="working window scale about the site domain (default 3)")
    p.add_argument("--sites", help="random:N | net:N | net-eps:E | file:PATH")
    p.add_argument("--site-domain", type=parse_domain, help="x0,y0,x1,y1 for generated sites (default 0,0,1,1)")
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma", type=float, help="metric variation, for the epsilon*sigma net gate")
    p.add_argument("--out-svg")
    p.add_argument("--out-report")
    p.add_argument("--checks", help=f"comma list or 'all' from: {', '.join(ALL_CHECKS)}")
    p.add_argument("--oracle", action="store_true", default=None, help="force the brute-force cross-check")
    p.add_argument("--dump-labels")
    p.add_argument("--dump-mesh")
    p.add_argument("--min-sep", type=float, help="minimum spacing of random sites")
    p.add_argument("--net-jitter", type=float, help="candidate jitter for nets, in half cells")
    p.add_argument("--delta-rel", type=float, help="relative ellipse band")
    p.add_argument("--tau", type=float, help="relative tie tolerance")
    p.add_argument("-q", "--quiet", action="store_true", help="do not print the report")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    kw: dict = {}
    if args.config:
        for key, val in read_config_file(args.config).items():
            if key in _KEYS:
                name, conv = _KEYS[key]
                kw[name] = conv(val)
            elif key == "grid":
                kw["nx"], kw["ny"] = parse_grid(val)
            elif key == "site-domain":
                kw["site_domain"] = parse_domain(val)
            elif key == "oracle":
                kw["oracle"] = _parse_bool(val)
            else:
                raise ValueError(f"unknown config key {key!r}")
    for key, (name, _) in _KEYS.items():
        v = getattr(args, key.replace("-", "_"))
        if v is not None:
            kw[name] = v
    if args.grid is not None:
        kw["nx"], kw["ny"] = args.grid
    if args.site_domain is not None:
        kw["site_domain"] = args.site_domain
    if args.oracle is not None:
        kw["oracle"] = args.oracle
    return RunConfig(**kw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        result = run(cfg)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"anisovd: error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        from .report import render_report

        sys.stdout.write(render_report(result.report))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
