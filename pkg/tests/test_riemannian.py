import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clab.errors import InvalidArgumentError, InvalidCurveError, InvalidMetricError
from clab.homology_geodesics import min_geodesic
from clab.riemannian import (
    ClosedCurve, ConformalMetric, FlatMetric, GridMetric, MetricField, ScaledMetric, TubeMetric,
    christoffel, curve_length, fermi_chart, geodesic_shoot, parallel_transport, read_grid_file,
    write_grid_file,
)

CONF = ConformalMetric(2, [((1, 0), 0.0, 0.1)])     # phi = 0.1 sin(2 pi q1)


def fd_christoffel(metric, q, h=1e-5):
    """Levi-Civita symbols from finite differences of eval only."""
    n = metric.dim
    D = np.zeros((n, n, n))
    for l in range(n):
        e = np.zeros(n)
        e[l] = h
        D[l] = (metric.eval(q + e) - metric.eval(q - e)) / (2 * h)
    Gi = np.linalg.inv(metric.eval(q))
    out = np.zeros((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(n):
                out[k, i, j] = 0.5 * sum(Gi[k, l] * (D[i, j, l] + D[j, i, l] - D[l, i, j])
                                         for l in range(n))
    return out


def test_flat_christoffel_zero():
    q = np.random.default_rng(0).random((5, 3))
    assert np.all(christoffel(FlatMetric(3), q) == 0)


def test_tube_christoffel_zero_on_axis():
    g = TubeMetric(3, 2.0)
    q = np.array([[0.3, 0.0, 0.0], [0.7, 0.0, 0.0]])
    assert np.max(np.abs(christoffel(g, q))) < 1e-14


@pytest.mark.parametrize("q", [[0.1, 0.2], [0.33, 0.9], [0.8, 0.05]])
def test_conformal_christoffel_matches_finite_differences(q):
    q = np.array(q)
    assert np.max(np.abs(christoffel(CONF, q) - fd_christoffel(CONF, q))) < 1e-6


def test_non_positive_metric_rejected():
    with pytest.raises(InvalidMetricError):
        christoffel(FlatMetric(2, -np.eye(2)), np.zeros(2))


def test_flat_geodesic_is_line():
    path = geodesic_shoot(FlatMetric(2), [0, 0], [1, 0], 1.0, 10)
    assert np.allclose(path.q[-1], [1, 0], atol=1e-14)
    assert np.allclose(path.q[:, 1], 0)


def test_zero_steps_rejected():
    with pytest.raises(InvalidArgumentError):
        geodesic_shoot(FlatMetric(2), [0, 0], [1, 0], 1.0, 0)


def test_tube_axis_is_geodesic():
    path = geodesic_shoot(TubeMetric(3, 1.5), [0.2, 0, 0], [1, 0, 0], 2.0, 200)
    assert np.max(np.abs(path.q[:, 1:])) < 1e-14


def test_conformal_geodesic_self_convergence():
    # RK4: halving the step shrinks the error by about 16
    ends = [geodesic_shoot(CONF, [0.1, 0.2], [0.6, 0.8], 1.0, m).q[-1] for m in (20, 40, 80)]
    e1 = np.linalg.norm(ends[0] - ends[1])
    e2 = np.linalg.norm(ends[1] - ends[2])
    assert 12 < e1 / e2 < 20


def test_geodesic_preserves_speed():
    path = geodesic_shoot(CONF, [0.1, 0.2], [0.6, 0.8], 1.0, 200)
    sp = path.speeds(CONF)
    assert np.ptp(sp) < 1e-7


def test_flat_holonomy_identity():
    c = ClosedCurve.straight(FlatMetric(3), np.zeros(3), [1, 2, 0], 64)
    assert np.allclose(parallel_transport(FlatMetric(3), c), np.eye(3), atol=1e-12)


def test_tube_axis_holonomy_identity():
    g = TubeMetric(3, 1.0)
    c = ClosedCurve.straight(g, np.zeros(3), [1, 0, 0], 64)
    assert np.allclose(parallel_transport(g, c), np.eye(3), atol=1e-10)


def test_conformal_holonomy_orthogonal():
    rng = np.random.default_rng(3)
    s = np.linspace(0, 1, 65)[:, None]
    pert = 0.05 * np.sin(2 * np.pi * s) * rng.standard_normal(2)
    c = ClosedCurve.from_samples(CONF, s * np.array([1, 1]) + pert, [1, 1])
    O = parallel_transport(CONF, c)
    assert np.max(np.abs(O.T @ O - np.eye(2))) < 1e-8


def test_zero_speed_segment_rejected():
    s = np.linspace(0, 1, 9)[:, None] * np.array([1.0, 0.0])
    s = np.insert(s, 3, s[3], axis=0)
    c = ClosedCurve.from_samples(FlatMetric(2), s, [1, 0])
    with pytest.raises(InvalidCurveError):
        parallel_transport(FlatMetric(2), c)


def test_flat_fermi_chart_is_flat():
    g = FlatMetric(2)
    ch = fermi_chart(g, ClosedCurve.straight(g, np.zeros(2), [1, 0], 64), 0.2)
    x = np.array([[0.1, 0.0], [0.5, 0.15], [0.9, -0.2]])
    assert np.max(np.abs(ch.pulled_metric(x) - np.eye(2))) < 1e-9


def test_tube_fermi_chart_is_identity_chart():
    g = TubeMetric(3, 1.0)
    ch = fermi_chart(g, ClosedCurve.straight(g, np.zeros(3), [1, 0, 0], 64), 0.1)
    x = np.array([[0.3, 0.01, -0.02]])
    # Fermi chart of a tube differs from the coordinate chart at third order
    assert np.max(np.abs(ch.chart_point(x) - x)) < 1e-4
    assert np.allclose(ch.O, np.eye(2), atol=1e-10)


def test_conformal_fermi_chart_quadratic():
    geo = min_geodesic(CONF, [1, 0], 2, 0, 96).minimizer
    ch = fermi_chart(CONF, geo, 0.1)
    xs = np.array([0.02, 0.04, 0.08])
    err = [np.max(np.abs(ch.pulled_metric(np.array([[0.37, x]])) - np.eye(2))) for x in xs]
    order = np.polyfit(np.log(xs), np.log(err), 1)[0]
    assert order >= 1.9


def test_grid_metric_round_trip(tmp_path):
    res = 16
    x = np.arange(res) / res
    X, Y = np.meshgrid(x, x, indexing="ij")
    c = np.exp(0.2 * np.sin(2 * np.pi * X))
    vals = np.zeros((res, res, 2, 2))
    vals[..., 0, 0] = vals[..., 1, 1] = c
    write_grid_file(tmp_path / "g.npz", vals)
    g = read_grid_file(tmp_path / "g.npz")
    assert isinstance(g, GridMetric)
    q = np.array([[x[3], x[5]]])
    assert np.allclose(g.eval(q)[0], vals[3, 5], atol=1e-12)


def test_scaled_metric_scales_lengths():
    g = ScaledMetric(FlatMetric(2), 4.0)
    c = ClosedCurve.straight(g, np.zeros(2), [3, 4], 32)
    assert c.length == pytest.approx(10.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(-3, 3), st.integers(-3, 3))
def test_metric_is_periodic(x, y, k1, k2):
    q = np.array([x, y])
    assert np.allclose(CONF.eval(q + [k1, k2]), CONF.eval(q), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_christoffel_symmetric_lower(x, y):
    G = christoffel(CONF, np.array([x, y]))
    assert np.allclose(G, np.swapaxes(G, -1, -2))


@settings(max_examples=20, deadline=None)
@given(st.integers(-4, 4), st.integers(-4, 4))
def test_straight_length_is_lattice_norm(a, b):
    if a == 0 and b == 0:
        return
    c = ClosedCurve.straight(FlatMetric(2), np.zeros(2), [a, b], 16)
    assert c.length == pytest.approx(np.hypot(a, b), rel=1e-12)
    assert curve_length(FlatMetric(2), c.samples) == pytest.approx(c.length)


def test_base_class_needs_eval():
    with pytest.raises(NotImplementedError):
        MetricField(2).eval(np.zeros(2))
