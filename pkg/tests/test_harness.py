import numpy as np
import pytest

from harmonic_delaunay import kernels
from harmonic_delaunay.fields import Surface, gradient, campbell_mean, laplacian, tilt_J
from harmonic_delaunay.geometry import build_delaunay
from harmonic_delaunay.harness import (
    HarnessError,
    backward_walk_estimate,
    energy,
    event_schedule,
    harness_run,
    m_s_update,
)
from harmonic_delaunay.pointprocess import PointSet, substream
from harmonic_delaunay.solver import solve_harmonic
from conftest import poisson_graph
from oracles import expm_expected_increment, expm_semigroup, series_expected_increment, \
    series_semigroup, transition_matrix

CYCLE5 = np.array([[0.0], [0.7], [1.5], [2.9], [4.1]])


@pytest.fixture(scope="module")
def cycle5():
    return build_delaunay(PointSet(1, 5.0, CYCLE5))


@pytest.fixture(scope="module")
def path3():
    return build_delaunay(PointSet(1, 10.0, np.array([[0.0], [1.0], [2.0]]), mode="planar"))


def _adjacency(g):
    return [g.indices[g.indptr[s]:g.indptr[s + 1]].tolist() for s in range(g.n)]


# --- single update ----------------------------------------------------------------

def test_update_path_middle(path3):
    eta = Surface.periodic(path3, [0.0, 0.0, 6.0])
    out = m_s_update(eta, 1)
    np.testing.assert_array_equal(out.heights, [0.0, 3.0, 6.0])
    # the input is untouched
    np.testing.assert_array_equal(eta.psi, [0.0, 0.0, 6.0])


def test_update_fixed_point_bitwise(path3):
    eta = Surface.periodic(path3, [1.0, 2.0, 3.0])
    out = m_s_update(eta, 1)
    assert out.psi.tobytes() == eta.psi.tobytes()


def test_update_affine_grid_unchanged(grid):
    eta = Surface.affine(grid, [0.3, -1.1])
    assert np.max(np.abs(laplacian(eta))) < 1e-12
    for s in (0, 17, 55, 99):
        out = m_s_update(eta, s)
        assert abs(out.psi[s]) < 1e-12


def test_update_never_raises_energy(g50, rng):
    eta = Surface(g50, [0.5, 1.0], rng.normal(size=g50.n))
    for s in rng.integers(0, g50.n, size=40):
        new = m_s_update(eta, int(s))
        assert energy(new) <= energy(eta) + 1e-12
        eta = new


def test_update_uses_wrapped_increments(circle4):
    # psi = 0 with tilt 1: neighbour heights seen through the wrap are s +- increments
    eta = Surface.affine(circle4, 1.0)
    out = m_s_update(eta, 0)
    # neighbours of 0 are at 0.5 and 3.0 - 4 = -1.0, mean -0.25
    assert out.heights[0] == pytest.approx(-0.25, abs=1e-15)


# --- energy ------------------------------------------------------------------------

def test_energy_values(g50, grid):
    assert energy(Surface.periodic(g50, np.full(g50.n, 4.0))) == 0.0
    assert energy(Surface.affine(grid, [1.0, 0.0])) == 1.0


# --- schedule ----------------------------------------------------------------------

def test_schedule_sorted_and_rate():
    times, verts = event_schedule(200, 50.0, substream(3, "harness"))
    assert np.all(np.diff(times) >= 0)
    assert times.max() <= 50.0
    # 200 rate-1 clocks over [0, 50]: Poisson(10000) events
    assert abs(times.size - 10000) < 4 * 100
    counts = np.bincount(verts, minlength=200)
    # per-vertex counts are Poisson(50)
    assert abs(counts.var(ddof=1) / counts.mean() - 1) < 0.4


def test_schedule_is_seeded():
    a = event_schedule(30, 5.0, substream(1, "harness"))
    b = event_schedule(30, 5.0, substream(1, "harness"))
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


# --- runs ----------------------------------------------------------------------------

def test_zero_event_run_returns_input():
    g = build_delaunay(PointSet(1, 10.0, np.array([[0.0], [1.0]]), mode="planar"))
    gamma = Surface.periodic(g, [0.25, -3.0])
    st = harness_run(g, gamma, 0.05, seed=0)
    assert st.n_events == 0
    assert st.surface.psi.tobytes() == gamma.psi.tobytes()
    np.testing.assert_array_equal(st.tilt, gamma.tilt)


def test_t_max_must_be_positive(g50):
    with pytest.raises(HarnessError):
        harness_run(g50, Surface.affine(g50, [1, 0]), 0.0, seed=0)


@pytest.fixture(scope="module")
def run1000():
    g = poisson_graph(1000, 7)
    gamma = Surface.affine(g, [1.0, 0.0])
    return g, gamma, harness_run(g, gamma, 50.0, seed=11, checkpoint_every=1000)


def test_energy_monotone_every_event(run1000):
    g, gamma, st = run1000
    assert st.n_events > 40000
    trace = st.energy_trace()
    assert np.max(np.diff(trace)) <= 1e-12
    assert np.max(st.deltas) <= 1e-12


def test_tilt_conserved_at_checkpoints(run1000):
    g, gamma, st = run1000
    ts = [cp["t"] for cp in st.checkpoints]
    assert ts[0] == 0.0 and ts[-1] > 49
    for cp in st.checkpoints:
        assert abs(cp["tilt"][0] - 1.0) < 1e-9
        assert abs(cp["tilt"][1]) < 1e-9
    for u in range(2):
        assert abs(tilt_J(st.surface, u) - tilt_J(gamma, u)) < 1e-9


def test_decomposition_zero_tilt(run1000):
    g, gamma, st = run1000
    diff = st.surface - gamma
    np.testing.assert_array_equal(diff.tilt, 0.0)
    np.testing.assert_array_equal(st.tilt, gamma.tilt)


def test_final_energy_matches_recompute(run1000):
    g, gamma, st = run1000
    assert abs(st.energies[-1] - energy(st.surface)) <= 1e-9 * energy(st.surface)
    np.testing.assert_allclose(st.checkpoints[-1]["energy"], energy(st.surface), rtol=1e-12)


def test_run_approaches_solver(run1000):
    g, gamma, st = run1000
    h, _ = solve_harmonic(g, gamma.tilt, tol=1e-10)
    gap0 = energy(gamma - h)
    gap = energy(st.surface - h)
    assert gap < 0.1 * gap0


@pytest.mark.xfail(strict=False, reason="borderline at t = 50 on 1000 points: observed ratios "
                                        "0.006 to 0.022 across samples and seeds")
def test_laplacian_reduced_hundredfold(run1000):
    g, gamma, st = run1000
    first, last = st.checkpoints[0], st.checkpoints[-1]
    assert last["max_laplacian_abs"] < 1e-2 * first["max_laplacian_abs"]


def test_fixed_point_run(g500):
    h, _ = solve_harmonic(g500, [1.0, 0.0], tol=1e-12)
    st = harness_run(g500, h, 5.0, seed=2)
    assert np.max(np.abs(st.surface.psi - h.psi)) < 1e-10
    # each event moves a height by at most the residual it sees
    assert np.max(np.abs(st.deltas)) < 1e-12


def test_deterministic(g50):
    gamma = Surface.affine(g50, [0.0, 1.0])
    a = harness_run(g50, gamma, 3.0, seed=4)
    b = harness_run(g50, gamma, 3.0, seed=4)
    assert a.surface.psi.tobytes() == b.surface.psi.tobytes()
    assert a.event_vertices.tobytes() == b.event_vertices.tobytes()
    c = harness_run(g50, gamma, 3.0, seed=5)
    assert c.surface.psi.tobytes() != a.surface.psi.tobytes()


def test_windowed_schedule(g50, monkeypatch):
    from harmonic_delaunay import harness

    monkeypatch.setattr(harness, "CHUNK_EVENTS", 64)
    gamma = Surface.affine(g50, [1.0, 0.0])
    st = harness_run(g50, gamma, 20.0, seed=2, checkpoint_every=100, recompute_every=300)
    # many windows of about 1.4 time units each
    assert np.all(np.diff(st.event_times) >= 0) and st.event_times[-1] <= 20.0
    assert abs(st.n_events - 20 * g50.n) < 4 * np.sqrt(20 * g50.n)
    assert np.max(np.diff(st.energy_trace())) <= 1e-12
    assert [cp["event"] for cp in st.checkpoints][:-1] == list(range(0, st.n_events, 100))
    assert st.checkpoints[-1]["event"] == st.n_events
    eta = gamma
    for s in st.event_vertices:
        eta = m_s_update(eta, int(s))
    np.testing.assert_allclose(eta.psi, st.surface.psi, atol=1e-12)


def test_clock_nondecreasing(g50):
    st = harness_run(g50, Surface.affine(g50, [1.0, 0.0]), 4.0, seed=1)
    assert np.all(np.diff(st.event_times) >= 0)
    assert st.event_times[-1] <= 4.0


def test_events_replay_with_single_updates(g50, rng):
    gamma = Surface(g50, [1.0, 0.5], rng.normal(size=g50.n))
    st = harness_run(g50, gamma, 1.0, seed=9)
    eta = gamma
    for s in st.event_vertices:
        eta = m_s_update(eta, int(s))
    np.testing.assert_allclose(eta.psi, st.surface.psi, atol=1e-13)


@pytest.mark.skipif(len(kernels.available_backends()) < 2, reason="compiled kernels not built")
def test_backends_bitwise_equal(g500):
    gamma = Surface.affine(g500, [1.0, 0.0])
    a = harness_run(g500, gamma, 10.0, seed=3, backend="cython")
    b = harness_run(g500, gamma, 10.0, seed=3, backend="python")
    assert a.surface.psi.tobytes() == b.surface.psi.tobytes()
    assert a.energies.tobytes() == b.energies.tobytes()


def test_recompute_detects_drift(g50, monkeypatch):
    real = kernels.harness_events

    def drifting(*args, **kw):
        en, de, final = real(*args, **kw)
        return en, de, final * (1 + 1e-6)

    monkeypatch.setattr(kernels, "harness_events", drifting)
    with pytest.raises(HarnessError, match="drifted"):
        harness_run(g50, Surface.affine(g50, [1.0, 0.0]), 5.0, seed=0, recompute_every=50)


def test_short_recompute_interval_matches(g50):
    gamma = Surface.affine(g50, [1.0, 0.0])
    a = harness_run(g50, gamma, 5.0, seed=0, recompute_every=50)
    b = harness_run(g50, gamma, 5.0, seed=0)
    assert a.surface.psi.tobytes() == b.surface.psi.tobytes()


def test_stop_tol(g500):
    gamma = Surface.affine(g500, [1.0, 0.0])
    st = harness_run(g500, gamma, 2000.0, seed=1, checkpoint_every=2000, stop_tol=1e-6)
    assert st.stopped_early
    assert st.t < 2000.0
    assert np.max(np.abs(laplacian(st.surface))) < 1e-6
    assert st.checkpoints[-1]["event"] == st.n_events


# --- moment sanity -----------------------------------------------------------------

def test_moment_sanity():
    g = poisson_graph(200, 3)
    gamma = Surface.affine(g, [1.0, 0.0])
    e_gamma = energy(gamma)
    for t in (1.0, 2.0, 5.0):
        vals = [energy(harness_run(g, gamma, t, seed=k, checkpoint_every=10**6).surface - gamma)
                for k in range(100)]
        assert np.mean(vals) < 4 * e_gamma * (t + t * t)


# --- backward walks ----------------------------------------------------------------

def test_backward_walk_t0(cycle5):
    gamma = Surface(cycle5, 2.0, [0.0, 1.0, -1.0, 0.5, 0.25])
    assert backward_walk_estimate(cycle5, gamma, 2, 0.0, 10, seed=0) == (gamma.heights[2], 0.0)


def test_backward_walk_rejects_bad_args(cycle5):
    gamma = Surface.affine(cycle5, 1.0)
    with pytest.raises(ValueError):
        backward_walk_estimate(cycle5, gamma, 0, -1.0, 10, seed=0)
    with pytest.raises(ValueError):
        backward_walk_estimate(cycle5, gamma, 0, 1.0, 0, seed=0)


def test_oracles_agree(cycle5):
    P = transition_matrix(_adjacency(cycle5))
    np.testing.assert_allclose(series_semigroup(P, 0.5), expm_semigroup(P, 0.5), atol=1e-12)
    g = np.array([0.3, -0.1, 0.0, 1.0, 0.2])
    np.testing.assert_allclose(series_expected_increment(P, g, 0.5), expm_expected_increment(P, g, 0.5),
                               atol=1e-12)


def test_backward_walk_periodic_surface(cycle5):
    gamma = Surface.periodic(cycle5, [0.0, 1.0, -1.0, 0.5, 0.25])
    P = transition_matrix(_adjacency(cycle5))
    exact = series_semigroup(P, 0.5) @ gamma.heights
    for s in (0, 3):
        m, se = backward_walk_estimate(cycle5, gamma, s, 0.5, 10**6, seed=1)
        assert abs(m - exact[s]) < 4 * se


def test_backward_walk_tilted_surface(cycle5):
    gamma = Surface(cycle5, 1.0, [0.0, 0.3, 0.0, -0.2, 0.1])
    P = transition_matrix(_adjacency(cycle5))
    # mean increment of one jump from v, through wrapped displacements
    grad = gradient(gamma).directed()
    inc = np.array([grad[cycle5.indptr[v]:cycle5.indptr[v + 1]].mean() for v in range(cycle5.n)])
    exact = gamma.heights + series_expected_increment(P, inc, 0.5)
    m, se = backward_walk_estimate(cycle5, gamma, 1, 0.5, 10**6, seed=2)
    assert abs(m - exact[1]) < 4 * se


def test_backward_walk_matches_forward_runs(cycle5):
    gamma = Surface.periodic(cycle5, [0.0, 1.0, -1.0, 0.5, 0.25])
    finals = np.array([harness_run(cycle5, gamma, 0.5, seed=k, checkpoint_every=10**6).surface.psi
                       for k in range(4000)])
    fwd, fwd_se = finals[:, 2].mean(), finals[:, 2].std(ddof=1) / np.sqrt(len(finals))
    m, se = backward_walk_estimate(cycle5, gamma, 2, 0.5, 10**5, seed=3)
    assert abs(fwd - m) < 4 * np.hypot(se, fwd_se)


def test_backward_walk_long_time_consensus(cycle5):
    gamma = Surface.periodic(cycle5, [0.0, 1.0, -1.0, 0.5, 0.25])
    a = cycle5.degree.astype(float)
    consensus = float(np.sum(a * gamma.psi) / a.sum())
    m, se = backward_walk_estimate(cycle5, gamma, 0, 50.0, 10**5, seed=4)
    assert abs(m - consensus) < 4 * se + 1e-12


def test_long_time_semigroup_degree_weighted(g50):
    # the rate-1 walk is reversible w.r.t. degree: rows converge to a / sum a
    P = transition_matrix(_adjacency(g50))
    Pt = expm_semigroup(P, 400.0)
    a = g50.degree / g50.degree.sum()
    np.testing.assert_allclose(Pt, np.tile(a, (g50.n, 1)), atol=1e-6)
