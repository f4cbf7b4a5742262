import xml.etree.ElementTree as ET

import numpy as np
import pytest

from anisovd import pipeline
from anisovd.cli import build_parser, config_from_args, main, read_config_file
from anisovd.pipeline import RunConfig, blend_invariance, run
from anisovd.report import fmt, parse_report, render_report
from anisovd.sites import SiteSet, save_sites
from anisovd.verify import CheckRecord, VerificationReport

SVG_NS = "{http://www.w3.org/2000/svg}"


@pytest.fixture
def three_sites(tmp_path):
    path = tmp_path / "three.txt"
    save_sites(SiteSet(np.array([[0.0, 0.0], [1.0, 0.1], [0.3, 0.9]])), path)
    return path


def test_three_sites_all_pass(three_sites):
    res = run(RunConfig(sites=f"file:{three_sites}", nx=128, ny=128), write=False)
    assert res.exit_code == 0
    assert all(r.status == "pass" for r in res.report.records)
    assert len(res.mesh.faces) == 1 and len(res.mesh.edges) == 3


def test_orphan_fixture_fails_with_witness(tmp_path):
    from test_acceptance import ORPHAN_METRIC, ORPHAN_SITES

    path = tmp_path / "o.txt"
    save_sites(SiteSet(np.array(ORPHAN_SITES)), path)
    res = run(RunConfig(metric=ORPHAN_METRIC, sites=f"file:{path}"), write=False)
    assert res.exit_code == 1
    assert res.report.metadata["premise"] == "unsupported-premise"
    rec = res.report.get("orphans")
    assert rec.failed and isinstance(rec.witness["site"], int)
    assert res.report.get("ece").failed
    assert res.mesh is not None and res.mesh.unsupported_premise


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(nx=32)
    with pytest.raises(ValueError):
        RunConfig(inflate=0.5)
    with pytest.raises(ValueError):
        RunConfig(sites="grid:5")
    with pytest.raises(ValueError):
        RunConfig(checks="ece,bogus")
    assert RunConfig(checks="ece, euler").checks == ("ece", "euler")


def test_check_selection_and_oracle_threshold(monkeypatch):
    res = run(RunConfig(sites="random:8", checks="oracle,euler", nx=64, ny=64), write=False)
    assert [r.name for r in res.report.records] == ["oracle", "euler"]
    monkeypatch.setattr(pipeline, "ORACLE_AUTO_COST", 1000)
    big = run(RunConfig(sites="random:8", checks="oracle", nx=64, ny=64), write=False)
    assert big.report.get("oracle").status == "skipped"
    forced = run(RunConfig(sites="random:8", checks="oracle", nx=64, ny=64, oracle=True), write=False)
    assert forced.report.get("oracle").status == "pass"


def test_net_sites_record_gate():
    res = run(RunConfig(metric="sine:1,3", sites="net:12", sigma=0.1, nx=128, ny=128), write=False)
    meta = res.report.metadata
    assert meta["net_epsilon"] > 0 and meta["net_gate"] in ("met", "not-met")
    assert meta["epsilon_sigma"] == pytest.approx(0.1 * meta["net_epsilon"])


def test_blend_requires_bounded_vertices():
    res = run(RunConfig(sites="random:8", seed=0, inflate=1.0, nx=96, ny=96), write=False)
    with pytest.raises(ValueError):
        blend_invariance(res)


# --- report -------------------------------------------------------------------


def test_fmt():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(True) == "true" and fmt(np.int64(7)) == "7" and fmt(float("inf")) == "inf"


def test_report_roundtrip():
    rep = VerificationReport(metadata={"metric": "identity", "n_sites": 3})
    rep.add(CheckRecord("ece", "pass", margins={"min_margin": 2 / 3}))
    rep.add(CheckRecord("orphans", "fail", witness={"site": 4}))
    rep.add(CheckRecord("ece_low", "skipped", reason="colinear sites"))
    text = render_report(rep)
    meta, checks = parse_report(text)
    assert meta == {"metric": "identity", "n_sites": "3"}
    assert checks[0] == {"name": "ece", "status": "pass", "margin.min_margin": "0.666666666667"}
    assert checks[1]["witness.site"] == "4"
    assert checks[2]["reason"] == "colinear sites"
    assert text.rstrip().endswith("summary\tfail\tfailed=orphans")


# --- render and CLI ------------------------------------------------------------


def test_svg_well_formed(tmp_path, three_sites):
    out = tmp_path / "d.svg"
    run(RunConfig(sites=f"file:{three_sites}", nx=96, ny=96, out_svg=str(out)))
    root = ET.parse(out).getroot()
    assert root.tag == f"{SVG_NS}svg"
    assert root.findall(f".//{SVG_NS}image")  # region raster
    assert b"Date" not in out.read_bytes()


def test_two_site_svg(tmp_path):
    path = tmp_path / "two.txt"
    save_sites(SiteSet(np.array([[0.0, 0.0], [1.0, 0.0]])), path)
    out = tmp_path / "two.svg"
    res = run(RunConfig(sites=f"file:{path}", nx=96, ny=96, out_svg=str(out)))
    assert res.mesh.edges == [(0, 1)] and not res.mesh.faces
    ET.parse(out)


def test_cli_runs_and_writes(tmp_path, three_sites, capsys):
    rep = tmp_path / "r.txt"
    code = main(["--sites", f"file:{three_sites}", "--grid", "96x96", "--out-report", str(rep)])
    assert code == 0
    printed = capsys.readouterr().out
    assert printed == rep.read_text()
    assert "summary\tpass" in printed


def test_cli_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# run settings\nmetric = swirl:0.5\ngrid = 128x96\nseed = 4\nsites = net:10\noracle = yes\n")
    assert read_config_file(cfg)["grid"] == "128x96"
    args = build_parser().parse_args(["--config", str(cfg), "--seed", "9"])
    rc = config_from_args(args)
    assert (rc.metric, rc.nx, rc.ny, rc.seed, rc.sites, rc.oracle) == ("swirl:0.5", 128, 96, 9, "net:10", True)


def test_cli_errors_exit_2(tmp_path, capsys):
    assert main(["--metric", "wobble:1", "-q"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["--config", str(bad), "-q"]) == 2
    assert "error" in capsys.readouterr().err
