import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clab.errors import InvalidArgumentError, InvalidProfileError
from clab.homology_geodesics import CohomologyClass
from clab.pb_invariant import (
    CircleValuedPrimitive, Ramp, analytic_sup, bp_estimate, build_pair, clifford,
    partition_edges, poisson_bracket, profiles, sup_bracket, wronskian,
)
from clab.riemannian import ConformalMetric, FlatMetric, FourierScalar

FLAT = FlatMetric(2)
CONF = ConformalMetric(2, [((1, 0), 0.0, 0.08), ((0, 1), 0.05, 0.0)])
TH = np.linspace(0.0, 1.0, 200001)


def max_w(h, k):
    return float(np.max(np.abs(wronskian(h, k, TH))))


def test_bracket_of_position_functions_vanishes():
    H = lambda q, p: np.sin(2 * np.pi * q[0])
    K = lambda q, p: np.cos(2 * np.pi * q[1]) * q[0]
    assert poisson_bracket(H, K, ([0.3, 0.4], [1.0, 2.0])) == 0.0


def test_bracket_vanishes_where_h_is_stationary():
    H = lambda q, p: np.sin(2 * np.pi * q[1])
    K = lambda q, p: p[0] ** 2 + p[1] ** 2
    assert abs(poisson_bracket(H, K, ([0.3, 0.25], [0.5, 0.7]))) < 1e-8


def test_linear_primitive():
    th = CircleValuedPrimitive([1, 0])
    q = np.array([[0.1, 0.7], [0.45, 0.2], [0.99, 0.5]])
    assert np.allclose(th(q), q[:, 0])


def test_partition_sets():
    h, k = profiles("quartered", w=0.005)
    x = np.linspace(0.002, 0.248, 50)
    assert np.all(h.value(x) == 0)                    # X0 = [0, 1/4]
    assert np.all(h.value(x + 0.5) == 1)              # X1 = [1/2, 3/4]
    assert np.all(k.value(x + 0.25) == 0)             # Y0 = [1/4, 1/2]
    assert np.all(k.value(x + 0.75) == 1)             # Y1 = [3/4, 1]


def test_refined_wronskian_floor():
    # a ramp across an interval of length L has slope >= 1/L, and W = h'k - hk'
    # equals the slope of whichever ramp is active, so for eps = 0.02 the
    # sup is at least 1/(1/2 - 2 eps) > 2.1
    eps = 0.02
    assert 1.0 / (0.5 - 2 * eps) > 2.1
    h, k = profiles("refined", eps, 0.005, 0.001)
    want = 1.0 / ((0.5 - 2 * eps) - 2 * 0.001 - 0.005)
    assert max_w(h, k) == pytest.approx(want, rel=1e-6)


@pytest.mark.xfail(strict=True, reason="W >= 1/(1/2 - 2 eps) = 2.17 at eps = 0.02")
def test_refined_wronskian_below_two_point_one():
    h, k = profiles("refined", 0.02, 0.001, 0.0)
    assert max_w(h, k) <= 2.1


def test_refined_wronskian_tends_to_two():
    h, k = profiles("refined", 0.002, 0.001, 0.0001)
    assert max_w(h, k) <= 2.0 + 0.1


def test_diagonal_class_norm():
    th = CircleValuedPrimitive([1, 1])
    q = np.random.default_rng(0).random((10, 2))
    nrm = np.linalg.norm(th.form(q), axis=1)
    assert np.allclose(nrm, np.sqrt(2))


def test_quartered_sup_bound():
    pair = build_pair(FLAT, [1, 0], r=1.0, partition="quartered", w=0.001, margin=0.0001,
                      cutoff_width=0.002, cutoff_inset=0.0001)
    assert sup_bracket(pair).value <= 2.0 + 0.05


def test_refined_sup_bound_and_scaling():
    p1 = build_pair(FLAT, [1, 0], r=1.0, eps=0.002, w=0.01)
    s1 = sup_bracket(p1).value
    assert s1 <= 1.05
    s2 = sup_bracket(build_pair(FLAT, [1, 0], r=2.0, eps=0.002, w=0.01)).value
    assert s2 <= 0.55
    sq = sup_bracket(build_pair(FLAT, [1, 0], r=1.0, partition="quartered", w=0.01)).value
    assert sq / s1 == pytest.approx(2.0, rel=0.15)


def test_grid_sup_matches_closed_form():
    for a in ([1, 0], [1, 1], [2, 1]):
        pair = build_pair(FLAT, a, r=1.0, eps=0.002, w=0.005)
        assert sup_bracket(pair).value == pytest.approx(analytic_sup(pair), rel=1e-6)


def test_bp_estimate_flat():
    e = bp_estimate(FLAT, [1, 0], 1.0, budget=4)
    assert e.target == pytest.approx(1.0)
    assert e.lower_bound >= 0.95
    assert e.lower_bound <= e.target * 1.02


def test_bp_estimate_diagonal():
    e = bp_estimate(FLAT, [1, 1], 1.0, budget=4)
    assert e.target == pytest.approx(1 / np.sqrt(2))
    assert e.lower_bound >= 0.95 * e.target


def test_bp_estimate_linear_in_r():
    e1 = bp_estimate(FLAT, [1, 0], 1.0, budget=2)
    e2 = bp_estimate(FLAT, [1, 0], 2.0, budget=2)
    assert e2.lower_bound / e1.lower_bound == pytest.approx(2.0, rel=0.05)


def test_non_primitive_class_rejected():
    with pytest.raises(InvalidArgumentError):
        build_pair(FLAT, [2, 0])


def test_profile_width_too_large():
    with pytest.raises(InvalidProfileError):
        profiles("quartered", w=0.1)
    with pytest.raises(InvalidProfileError):
        partition_edges("refined", 0.2)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_clifford(n):
    c = clifford(n)
    d = 1.0 / (np.sqrt(n) * (n + 1))
    # slanted facet: (1 - sum x) / sqrt(n) with x the barycenter
    assert c.facet_distances[-1] == pytest.approx((1 - n / (n + 1)) / np.sqrt(n), abs=1e-15)
    assert abs(c.distance - d) <= 1e-9
    assert abs(c.product - c.r_max) <= 1e-12


def test_clifford_values():
    assert clifford(2).distance == pytest.approx(0.235702, abs=1e-6)
    assert clifford(1).distance == pytest.approx(0.5, abs=1e-12)


pts = st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(-1.2, 1.2), st.floats(-1.2, 1.2))
PAIR = build_pair(CONF, CohomologyClass([1, 0], FourierScalar(2, [((0, 1), 0.02, 0.0)])),
                  r=1.0, eps=0.05, w=0.02, cutoff_width=0.05)


@settings(max_examples=40, deadline=None)
@given(pts)
def test_analytic_bracket_matches_finite_differences(x):
    q, p = np.array(x[:2]), np.array(x[2:])
    fd = poisson_bracket(PAIR.H, PAIR.K, (q, p), step=1e-6)
    assert abs(fd - PAIR.bracket(q, p)) < 1e-4


@settings(max_examples=40, deadline=None)
@given(pts)
def test_bracket_antisymmetric(x):
    q, p = np.array(x[:2]), np.array(x[2:])
    a = poisson_bracket(PAIR.H, PAIR.K, (q, p))
    b = poisson_bracket(PAIR.K, PAIR.H, (q, p))
    assert abs(a + b) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.0, 0.5), st.floats(-0.2, 1.2))
def test_ramp_monotone_bounded(L, wf, x):
    w = max(wf * L, 1e-4)
    if 2 * w > L:
        return
    r = Ramp(L, w)
    assert 0.0 <= r.value(x) <= 1.0
    assert r.value(x + 1e-3) >= r.value(x) - 1e-15
    assert 0.0 <= r.deriv(x) <= r.slope + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(0.003, 0.1), st.floats(0, 1))
def test_profiles_in_unit_interval(eps, th):
    h, k = profiles("refined", eps, 0.2 * eps if eps < 0.02 else 0.004, 0.0005)
    assert 0.0 <= h.value(th) <= 1.0 and 0.0 <= k.value(th) <= 1.0
