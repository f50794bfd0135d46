import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmonic_delaunay.pointprocess import (
    GENERATOR_ID,
    PointSet,
    PointSetError,
    load_points,
    sample_poisson,
    save_points,
    substream,
)


def test_count_statistics_over_seeds():
    counts = np.array([sample_poisson(2, 10.0, 1.0, s).n for s in range(1000)])
    mean, var = counts.mean(), counts.var(ddof=1)
    assert abs(mean - 100) < 3 * np.sqrt(100) / np.sqrt(1000)
    # Poisson: variance = mean; the stderr of the sample variance is about sqrt(2 var^2 / n)
    assert abs(var - 100) < 5 * np.sqrt((2 * 100**2 + 100) / 1000)


def test_palm_origin_first():
    ps = sample_poisson(1, 4.0, 1.0, 3, palm=True)
    assert ps.points[0, 0] == 0.0
    assert ps.palm
    assert ps.n >= 1


def test_same_seed_bitwise_identical():
    a = sample_poisson(2, 12.0, 1.5, 99)
    b = sample_poisson(2, 12.0, 1.5, 99)
    assert a.points.tobytes() == b.points.tobytes()
    c = sample_poisson(2, 12.0, 1.5, 100)
    assert a.points.shape != c.points.shape or not np.array_equal(a.points, c.points)


@pytest.mark.parametrize("args, msg", [
    ((2, 0.0, 1.0), "box side"),
    ((2, -1.0, 1.0), "box side"),
    ((2, 5.0, 0.0), "intensity"),
    ((3, 5.0, 1.0), "dimension"),
])
def test_sample_rejects_bad_parameters(args, msg):
    with pytest.raises(PointSetError, match=msg):
        sample_poisson(*args, seed=0)


def test_substreams_independent_and_stable():
    a = substream(5, "harness").random(4)
    b = substream(5, "harness").random(4)
    c = substream(5, "walk").random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_round_trip_bitwise(tmp_path):
    ps = sample_poisson(2, 10.0, 1.0, 4)
    assert ps.n > 50
    path = tmp_path / "pts.csv"
    save_points(ps, path)
    back = load_points(path)
    assert back.points.tobytes() == ps.points.tobytes()
    assert back == ps
    meta = json.loads(path.with_suffix(".meta").read_text())
    assert meta["generator"] == GENERATOR_ID
    assert meta["L"] == 10.0 and meta["seed"] == 4


@given(st.lists(st.tuples(st.floats(0, 10, exclude_max=True), st.floats(0, 10, exclude_max=True)),
                min_size=1, max_size=30, unique=True))
@settings(max_examples=40, deadline=None)
def test_round_trip_property(tmp_path_factory, pts):
    ps = PointSet(2, 10.0, np.array(pts))
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    save_points(ps, path)
    assert load_points(path).points.tobytes() == ps.points.tobytes()


def test_out_of_box_rejected(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("x,y\n11.0,0.0\n")
    with pytest.raises(PointSetError, match="coordinate out of box"):
        load_points(path, L=10.0, mode="periodic")


def test_duplicates_rejected(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("x,y\n1.0,2.0\n1.0,2.0\n")
    with pytest.raises(PointSetError, match="duplicate"):
        load_points(path, L=10.0)


@pytest.mark.parametrize("row", ["1.0", "1.0,abc", "1,2,3"])
def test_malformed_rows_rejected(tmp_path, row):
    path = tmp_path / "p.csv"
    path.write_text(f"x,y\n{row}\n")
    with pytest.raises(PointSetError, match="malformed"):
        load_points(path, L=10.0)


def test_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    ps = load_points(path, mode="planar")
    assert ps.n == 0
    with pytest.raises(PointSetError):
        load_points(path, L=10.0, mode="periodic", palm=True)


def test_palm_load_requires_origin(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("x,y\n1e-13,0\n3,4\n")
    assert load_points(path, L=10.0, palm=True).palm
    path.write_text("x,y\n0.5,0\n3,4\n")
    with pytest.raises(PointSetError):
        load_points(path, L=10.0, palm=True)
