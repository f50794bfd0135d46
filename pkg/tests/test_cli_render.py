import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from harmonic_delaunay import cli, render
from harmonic_delaunay.fields import Surface
from harmonic_delaunay.geometry import build_delaunay
from harmonic_delaunay.pointprocess import PointSet
from harmonic_delaunay.solver import deform, solve_harmonic

NS = "{http://www.w3.org/2000/svg}"
CSVS = ["points.csv", "edges.csv", "cells.csv", "surface.csv", "harness_trace.csv",
        "harness_surface.csv", "deformed.csv"]
SVGS = ["triangulation.svg", "deformed.svg", "voronoi.svg", "level_curves.svg", "overlay.svg"]


def _by_class(path):
    root = ET.parse(path).getroot()
    assert root.tag == NS + "svg"
    out = {}
    for el in root.iter():
        c = el.get("class")
        if c:
            out.setdefault((el.tag.replace(NS, ""), c), []).append(el)
    return out


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    assert cli.main(["pipeline", "--demo", "--out", str(base / "a")]) == 0
    return base


# --- pipeline -----------------------------------------------------------------------

def test_demo_outputs(demo):
    out = demo / "a"
    for name in CSVS + SVGS + ["report.txt", "report.json", "run.json", "points.meta"]:
        assert (out / name).is_file(), name
    rep = json.loads((out / "report.json").read_text())
    assert rep["command"] == "pipeline"
    side = json.loads((out / "run.json").read_text())
    assert side["command"] == "pipeline" and side["config"]["seed"] == 2024


def test_demo_deterministic(demo):
    assert cli.main(["pipeline", "--demo", "--out", str(demo / "b")]) == 0
    for name in CSVS:
        assert (demo / "a" / name).read_bytes() == (demo / "b" / name).read_bytes(), name


def test_replay_reproduces(demo):
    assert cli.main(["replay", str(demo / "a" / "run.json"), "--out", str(demo / "c")]) == 0
    for name in CSVS:
        assert (demo / "a" / name).read_bytes() == (demo / "c" / name).read_bytes(), name
    # the sidecar is also accepted as --config
    assert cli.main(["pipeline", "--config", str(demo / "a" / "run.json"), "--out", str(demo / "d")]) == 0
    assert (demo / "a" / "deformed.csv").read_bytes() == (demo / "d" / "deformed.csv").read_bytes()


def test_demo_svgs(demo):
    out = demo / "a"
    pts = np.loadtxt(out / "points.csv", delimiter=",", skiprows=1, comments="#")
    n_edges = sum(1 for line in (out / "edges.csv").read_text().splitlines()
                  if line and not line.startswith("#")) - 1
    tri = _by_class(out / "triangulation.svg")
    assert len(tri[("line", "edge")]) == n_edges
    assert len(tri[("circle", "point")]) == len(pts)
    assert len(tri[("polygon", "origin")]) == 1
    dfm = _by_class(out / "deformed.svg")
    assert len(dfm[("line", "edge")]) == n_edges
    vor = _by_class(out / "voronoi.svg")
    assert len(vor[("polygon", "cell")]) == len(pts)
    lev = _by_class(out / "level_curves.svg")
    assert len(lev[("line", "level-zero")]) > 0
    ov = _by_class(out / "overlay.svg")
    assert len(ov[("line", "harmonic")]) == n_edges
    caption = ov[("text", "caption")][0].text
    rep = json.loads((out / "report.json").read_text())
    missing = rep["render"]["overlay_non_shared"]["harmonic_only"]
    assert f"non-shared edges: {missing} harmonic-only" in caption


def test_existing_output_needs_force(demo, tmp_path):
    out = tmp_path / "x"
    out.mkdir()
    assert cli.main(["sample", "--demo", "--out", str(out)]) == 4
    assert cli.main(["sample", "--demo", "--out", str(out), "--force"]) == 0
    assert (out / "points.csv").is_file()


# --- exit codes -------------------------------------------------------------------

def test_config_error_exit(tmp_path):
    out = tmp_path / "bad"
    assert cli.main(["sample", "--lam", "-1", "--out", str(out)]) == 2
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["sample", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_not_converged_exit(tmp_path):
    assert cli.main(["solve", "--demo", "--max-iter", "2", "--out", str(tmp_path / "o")]) == 3
    assert not (tmp_path / "o").exists()


def test_io_error_exit(tmp_path):
    assert cli.main(["sample", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 4
    assert cli.main(["render", "--input", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")]) == 4
    assert not (tmp_path / "o").exists()


def test_malformed_config_is_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["sample", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_validate_names_field():
    with pytest.raises(cli.ConfigError, match="L"):
        cli.validate(dict(cli.DEFAULTS, L=-3.0))


def test_walk_and_diagnostics_commands(tmp_path):
    assert cli.main(["walk", "--demo", "--walk-t-max", "3", "--out", str(tmp_path / "w")]) == 0
    head = (tmp_path / "w" / "walk.csv").read_text().splitlines()
    assert head[0].startswith("t,vertex,x_unwrapped")
    assert cli.main(["diagnostics", "--demo", "--n-walks", "200", "--env-steps", "20000",
                     "--out", str(tmp_path / "dg")]) == 0
    rep = json.loads((tmp_path / "dg" / "report.json").read_text())["diagnostics"]
    assert rep["martingale_residual"] <= 1e-10 * 20
    assert rep["moment"]["ok"]


def test_render_command(demo, tmp_path):
    out = tmp_path / "r"
    assert cli.main(["render", "--input", str(demo / "a"), "--kind", "voronoi", "--out", str(out)]) == 0
    assert (out / "voronoi.svg").is_file()
    assert not (out / "overlay.svg").exists()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "harmonic_delaunay.cli", "sample", "--demo",
                          "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "m" / "points.csv").is_file()


# --- renderer --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def triangle():
    return build_delaunay(PointSet(2, 10.0, np.array([[0, 0], [2, 0], [0, 2.0]]), mode="planar"))


def test_triangle_svg(triangle, tmp_path):
    path = render.render_triangulation(triangle, tmp_path / "t.svg")
    els = _by_class(path)
    assert len(els[("line", "edge")]) == 3
    assert len(els[("circle", "point")]) == 3
    assert len(els[("polygon", "origin")]) == 1
    assert ("polygon", "frame") not in els


@pytest.mark.parametrize("value", [3.0, 0.0])
def test_constant_scalar_has_no_level_set(g50, tmp_path, value):
    path, counts = render.render_level_curves(g50, np.full(g50.n, value), tmp_path / "l.svg", levels=[0.0])
    assert counts == {0.0: 0}
    els = _by_class(path)
    assert ("line", "level") not in els and ("line", "level-zero") not in els


def test_level_segments_linear_field():
    # one triangle, values x: the level-0.5 segment is the vertical line x = 0.5
    P = np.array([[[0, 0], [1, 0], [0, 1.0]]])
    segs = render.level_segments(P, P[..., 0], 0.5)
    assert len(segs) == 1
    np.testing.assert_allclose(sorted(tuple(p) for p in segs[0]), [(0.5, 0.0), (0.5, 0.5)])


def test_level_curves_include_zero(g50, tmp_path):
    h, _ = solve_harmonic(g50, [1.0, 0.0])
    _, counts = render.render_level_curves(g50, -h.psi, tmp_path / "l.svg", n_levels=5)
    assert 0.0 in counts and len(counts) in (5, 6)
    assert counts[0.0] > 0


def test_grid_overlay_all_shared(grid, tmp_path):
    dg = deform(grid)
    path, cmp_ = render.render_overlay(dg, tmp_path / "o.svg")
    assert cmp_["missing"] == 0 and cmp_["extra"] == 0
    els = _by_class(path)
    assert "non-shared edges: 0 harmonic-only, 0 Delaunay-only" == els[("text", "caption")][0].text


def test_render_rejects_1d(circle4, tmp_path):
    with pytest.raises(ValueError):
        render.render_triangulation(circle4, tmp_path / "x.svg")
    with pytest.raises(ValueError):
        render.render_level_curves(circle4, np.zeros(circle4.n), tmp_path / "x.svg")
    assert Surface.affine(circle4, 1.0).tilt[0] == 1.0
