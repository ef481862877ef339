import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clab.errors import PreconditionViolation
from clab.homology_geodesics import min_geodesic
from clab.lagrangian_graphs import (
    CylinderChain, GraphLagrangian, closeclose_check, cylinder_area, liouville_period,
    maslov_of_graph, random_graph, symplectic_order_check, trivial_cylinder,
)
from clab.riemannian import ConformalMetric, FlatMetric, FourierScalar, ScaledMetric

FLAT = FlatMetric(2)
CONF = ConformalMetric(2, [((1, 0), 0.0, 0.1), ((0, 1), 0.06, 0.0)])
BUMP = FourierScalar(2, [((1, 0), 0.05, 0.0), ((1, 1), 0.0, 0.03)])


def test_constant_form_period():
    assert liouville_period(GraphLagrangian(FLAT, [0.3, 0.0]), [1, 0]) == pytest.approx(0.3)


def test_exact_form_has_no_periods():
    g = GraphLagrangian(FLAT, [0, 0], BUMP)
    for b in ([1, 0], [0, 1], [2, -1]):
        assert abs(liouville_period(g, b)) < 1e-12


def test_small_graph_period_bounded():
    rng = np.random.default_rng(5)
    for _ in range(20):
        gr = random_graph(FLAT, 0.1, rng)
        assert gr.within(0.1)
        assert abs(liouville_period(gr, [1, 0])) <= 0.1 * 1.0


def test_same_ends_zero_area():
    top = GraphLagrangian(FLAT, [0.2, 0.1], BUMP)
    ch = CylinderChain.graph_over(top, top, [1, 0])
    assert cylinder_area(ch) == 0.0


def test_zero_section_to_constant_graph():
    ch = CylinderChain.graph_over(None, GraphLagrangian(FLAT, [0.3, 0.0]), [1, 0])
    assert cylinder_area(ch) == pytest.approx(0.3, abs=1e-12)


def test_trivial_cylinder_area():
    c = min_geodesic(FLAT, [1, 1]).minimizer
    assert cylinder_area(trivial_cylinder(FLAT, c, 0.7)) == pytest.approx(0.7 * np.sqrt(2))
    cc = min_geodesic(CONF, [1, 0], 2, 0).minimizer
    assert cylinder_area(trivial_cylinder(CONF, cc, 0.5)) == pytest.approx(0.5 * cc.length,
                                                                           rel=1e-4)


def test_maslov_constant_and_exact():
    assert maslov_of_graph(GraphLagrangian(FLAT, [0.2, 0.3]), [1, 0]) == 0
    assert maslov_of_graph(GraphLagrangian(FLAT, [0, 0], BUMP), [1, 1]) == 0


def test_order_scaling_margins():
    eps = 0.1
    rep = symplectic_order_check(FLAT, ScaledMetric(FLAT, (1 + eps) ** 2), [[1, 0], [1, 1]])
    assert rep.holds
    # lengths scale by 1 + eps
    assert np.allclose(rep.margins, [eps * 1.0, eps * np.sqrt(2)])


def test_order_flat_below_conformal():
    up = ConformalMetric(2, [((0, 0), 0.2, 0.0), ((1, 0), 0.0, 0.1), ((0, 1), 0.05, 0.0)])
    rep = symplectic_order_check(FLAT, up, [[1, 0], [0, 1], [1, 1]], restarts=2)
    assert rep.holds and min(rep.margins) >= -1e-8


def test_order_equal_metrics():
    rep = symplectic_order_check(CONF, CONF, [[1, 0]], restarts=2)
    assert abs(rep.margins[0]) < 1e-8


def test_order_precondition():
    with pytest.raises(PreconditionViolation):
        symplectic_order_check(ScaledMetric(FLAT, 2.0), FLAT, [[1, 0]])


def test_closeclose_flat_and_conformal():
    for g in (FLAT, CONF):
        rep = closeclose_check(g, 0.1, trials=10, ball=2)
        assert not rep.violations
        assert rep.worst_ratio <= 1.0


chains = st.lists(st.floats(-0.5, 0.5), min_size=4, max_size=4)


@settings(max_examples=30, deadline=None)
@given(chains, chains, st.integers(-2, 2), st.integers(-2, 2))
def test_stokes_for_random_chains(cb, ct, b1, b2):
    beta = np.array([b1, b2])
    if not np.any(beta):
        return
    bot = GraphLagrangian(FLAT, cb[:2], FourierScalar(2, [((1, 0), cb[2] / 10, 0), ((0, 1), 0, cb[3] / 10)]))
    top = GraphLagrangian(FLAT, ct[:2], FourierScalar(2, [((1, 1), ct[2] / 10, 0), ((1, 0), 0, ct[3] / 10)]))
    ch = CylinderChain.graph_over(bot, top, beta, N=128, x0=[0.13, 0.41])
    area = cylinder_area(ch)
    assert area == pytest.approx(ch.end_period("top") - ch.end_period("bottom"), abs=1e-6)
    assert area == pytest.approx(liouville_period(top, beta) - liouville_period(bot, beta),
                                 abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(-2, 2), st.integers(-2, 2))
def test_random_graphs_have_zero_maslov(seed, b1, b2):
    if b1 == 0 and b2 == 0:
        return
    gr = random_graph(CONF, 0.1, np.random.default_rng(seed))
    assert maslov_of_graph(gr, [b1, b2]) == 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 0.5))
def test_random_graph_sup_in_range(seed, eps):
    gr = random_graph(CONF, eps, np.random.default_rng(seed))
    s = gr.sup_norm(48)
    assert 0.3 * eps * (1 - 1e-12) <= s < 0.95 * eps * (1 + 1e-12)
