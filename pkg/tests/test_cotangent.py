import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clab.cotangent import (
    CotangentPoint, build_cylinder, energy, frame_at, holomorphicity_residual, j_matrix,
    omega_matrix, radial_profile, sharp_pi_on_ker_alpha, sigma_matrix, zero_section_j,
)
from clab.errors import InvalidArgumentError, InvalidMetricError, TruncationError
from clab.riemannian import ClosedCurve, ConformalMetric, FlatMetric

PR = radial_profile()
FLAT = FlatMetric(2)
CONF = ConformalMetric(2, [((1, 0), 0.0, 0.1), ((0, 1), 0.05, 0.02)])
UNIT = ClosedCurve.straight(FLAT, np.zeros(2), [1, 0], 64)


def test_flat_j_on_unit_covector():
    J = j_matrix(FLAT, PR, np.array([0.3, 0.6]), np.array([1.0, 0.0]))
    # columns are images of d/dq1, d/dq2, d/dp1, d/dp2
    assert np.allclose(J[:, 0], [0, 0, -PR.chi(1.0), 0])
    assert np.allclose(J[:, 1], [0, 0, 0, -1])


def test_flat_zero_section_j():
    J = j_matrix(FLAT, PR, np.zeros(2), np.zeros(2))
    want = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
    assert np.allclose(J, want)
    assert np.allclose(zero_section_j(FLAT, np.zeros(2)), want)


def test_sigma_antiholomorphic():
    rng = np.random.default_rng(1)
    S = sigma_matrix(2)
    worst = 0.0
    for _ in range(100):
        q, p = rng.random(2), 2.0 * rng.standard_normal(2)
        lhs = S @ j_matrix(CONF, PR, q, p)
        rhs = -j_matrix(CONF, PR, q, -p) @ S
        worst = max(worst, np.max(np.abs(lhs - rhs)))
    assert worst < 1e-10


def test_singular_metric_rejected():
    bad = FlatMetric(2, np.diag([1.0, 0.0]))
    with pytest.raises(InvalidMetricError):
        frame_at(bad, PR, CotangentPoint(np.zeros(2), np.array([1.0, 0.0]), 1.0))


def test_profile_validation():
    with pytest.raises(InvalidArgumentError):
        radial_profile(2.0, 0.5)


def test_G_identity_below_r0():
    u = np.linspace(0.0, PR.r0, 11)
    assert np.allclose(PR.G(u), u, atol=0)


def test_f_exponential_growth():
    s = np.linspace(6.0, 8.0, 40)
    slope = np.polyfit(s, np.log(PR.f(s)), 1)[0]
    assert slope == pytest.approx(1.0, abs=1e-3)


def test_G_inverts_f():
    s = np.linspace(0.0, 8.0, 81)
    assert np.max(np.abs(PR.G(PR.f(s)) - s)) < 1e-8


def test_f_solves_ode():
    s = np.linspace(0.05, 6.0, 200)
    h = 1e-5
    fd = (PR.f(s + h) - PR.f(s - h)) / (2 * h)
    assert np.max(np.abs(fd - PR.chi(PR.f(s))) / PR.chi(PR.f(s))) < 1e-7


def test_flat_cylinder_nodes():
    cyl = build_cylinder(FLAT, PR, UNIT, 8.0, (64, 16))
    assert np.allclose(cyl.p[..., 0], PR.f(cyl.s)[:, None])
    assert np.all(cyl.p[..., 1] == 0)


def test_boundary_circle_is_geodesic():
    cyl = build_cylinder(CONF, PR, UNIT, 4.0, (32, 16))
    assert np.all(cyl.p[0] == 0)
    qf, _ = UNIT.spline()
    assert np.allclose(cyl.q[0], qf(cyl.t / cyl.ell))


def test_residual_second_order():
    grids = [32, 64, 128, 256]
    res = [holomorphicity_residual(build_cylinder(FLAT, PR, UNIT, 4.0, (N, 16)), FLAT, PR)
           for N in grids]
    order = np.polyfit(np.log(4.0 / np.array(grids)), np.log(res), 1)[0]
    assert order >= 1.9


def test_energy_unit_geodesic():
    e = energy(build_cylinder(FLAT, PR, UNIT, 8.0, (512, 16)), FLAT)
    assert e.E_omega == pytest.approx(1.0, rel=0.01)
    assert e.E_alpha == pytest.approx(1.0, rel=0.01)
    assert e.E == pytest.approx(2.0, rel=0.01)
    assert e.E <= 3.0


def test_energy_doubled_geodesic():
    c = ClosedCurve.straight(FLAT, np.zeros(2), [2, 0], 64)
    e = energy(build_cylinder(FLAT, PR, c, 8.0, (512, 16)), FLAT)
    assert e.E == pytest.approx(4.0, rel=0.01)


def test_degenerate_cylinder_energy_zero():
    cyl = build_cylinder(FLAT, PR, UNIT, 8.0, (64, 16))
    cyl.p[:] = 0.0
    assert energy(cyl, FLAT).E == 0.0


def test_short_cylinder_truncation():
    with pytest.raises(TruncationError):
        energy(build_cylinder(FLAT, PR, UNIT, 0.5, (64, 16)), FLAT)


def test_sharp_pi_tangent_to_level_set():
    fr = frame_at(CONF, PR, CotangentPoint.make(CONF, [0.2, 0.7], [1.2, -0.4]))
    _, rank, leak = sharp_pi_on_ker_alpha(CONF, fr)
    assert rank == 1
    assert leak < 1e-12


points = st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(-3, 3), st.floats(-3, 3))


@settings(max_examples=50, deadline=None)
@given(points)
def test_j_is_complex_structure(x):
    q, p = np.array(x[:2]), np.array(x[2:])
    J = j_matrix(CONF, PR, q, p)
    assert np.max(np.abs(J @ J + np.eye(4))) < 1e-10


@settings(max_examples=50, deadline=None)
@given(points)
def test_j_is_omega_compatible(x):
    q, p = np.array(x[:2]), np.array(x[2:])
    J = j_matrix(CONF, PR, q, p)
    Om = omega_matrix(2)
    assert np.max(np.abs(J.T @ Om @ J - Om)) < 1e-10
    M = Om @ J
    assert np.max(np.abs(M - M.T)) < 1e-10
    assert np.min(np.linalg.eigvalsh(0.5 * (M + M.T))) > 0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 20.0), st.floats(0.0, 1.0))
def test_chi_at_least_one_and_nondecreasing(r, dr):
    assert PR.chi(r) >= 1.0
    assert PR.chi(r + dr) >= PR.chi(r)
    assert PR.dchi(r) >= 0.0
