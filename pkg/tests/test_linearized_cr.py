import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clab.cotangent import radial_profile
from clab.errors import EpsilonTooLargeError, InvalidArgumentError
from clab.linearized_cr import (
    GoodMetricParams, OperatorGrid, assemble_operator, c0_distance, cell_residual,
    constant_axial_field, cutoff_rho, damping, good_metric, kernel_dimension, normal_b_energy,
    rho_weight, tilde_cell_residual, tilde_transform,
)
from clab.riemannian import FlatMetric

PR = radial_profile()


def rotation(a):
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


# --- good metric ------------------------------------------------------------

def test_good_metric_tube_form_near_axis():
    k = 1.0
    gm = good_metric(GoodMetricParams(2, (1, 0), 0.05, k)).metric
    xs = np.array([0.02, 0.01, 0.005, 0.0025])
    q = np.stack([np.full_like(xs, 0.3), xs], -1)
    g = gm.eval(q)
    rem = np.abs(g[:, 0, 0] - (1 + k * xs**2)) / xs**2
    assert np.allclose(g[:, 0, 1], 0) and np.allclose(g[:, 0, 0], g[:, 1, 1])
    # inside the cutoff plateau |x'|^2 <= eps/2 the tube form is exact
    assert np.max(rem) < 1e-10


@pytest.mark.parametrize("eps,k", [(0.05, 1.0), (0.1, 0.5), (0.02, 1.0)])
def test_good_metric_c0_close_and_above_base(eps, k):
    res = good_metric(GoodMetricParams(2, (1, 0), eps, k))
    assert c0_distance(res.metric, res.base, 64) <= eps * (1 + 1e-12)
    x = np.arange(64) / 64
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), -1).reshape(-1, 2)
    diff = res.metric.eval(pts) - FlatMetric(2).eval(pts)
    ev = np.linalg.eigvalsh(diff)
    assert ev.min() >= -1e-15
    on_axis = np.isclose(pts[:, 1], 0.0)
    assert np.all(np.abs(diff[on_axis]) == 0)
    assert np.all(ev[~on_axis].max(axis=1) > 0)


def test_good_metric_eps_too_large():
    with pytest.raises(EpsilonTooLargeError):
        good_metric(GoodMetricParams(2, (1, 0), 0.3, 1.0))


def test_good_metric_needs_coordinate_class():
    with pytest.raises(InvalidArgumentError):
        good_metric(GoodMetricParams(2, (1, 1), 0.05, 1.0))


def test_cutoff_derivatives():
    x = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    d1 = (cutoff_rho(x + h) - cutoff_rho(x - h)) / (2 * h)
    rho, r1, r2 = cutoff_rho(x, 2)
    assert np.allclose(rho, cutoff_rho(x))
    assert np.allclose(r1, d1, atol=1e-6)
    d2 = (cutoff_rho(x + 1e-4, 1)[1] - cutoff_rho(x - 1e-4, 1)[1]) / 2e-4
    assert np.allclose(r2, d2, rtol=1e-5, atol=1e-5)


# --- rho --------------------------------------------------------------------

def test_rho_flat_where_chi_is_one():
    s = np.linspace(0.0, PR.G_r0, 20)
    assert np.all(rho_weight(PR, s) == 1.0)
    assert np.all(damping(PR, s) == 0.0)


def test_rho_decay():
    s = np.linspace(0.0, 10.0, 201)
    rho = rho_weight(PR, s)
    assert np.all(np.diff(rho) <= 0)
    assert rho[160] < 0.1                     # s = 8
    slope = np.polyfit(s[s > 7], np.log(rho[s > 7]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=1e-2)


# --- operator -----------------------------------------------------------------

def test_constant_axial_field_in_kernel():
    g = OperatorGrid(3, 2.0, 8.0, 32, 16, PR, O=rotation(2 * np.pi / 3))
    op = assemble_operator(g)
    assert np.max(np.abs(op.apply(constant_axial_field(g)))) < 1e-8


def test_growing_field_solves_equation_but_not_boundary():
    S, Ns = 2.0, 256
    g = OperatorGrid(2, 1.0, S, Ns, 16, PR)
    op = assemble_operator(g)
    f = PR.f(g.s)
    I = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(g.s))])
    z = np.zeros((Ns + 1, 16, 4))
    z[:, :, 0] = np.exp(g.k * I)[:, None]
    cells = cell_residual(op, z.ravel())
    assert np.max(np.abs(cells[..., 0])) < 1e-3
    bc = op.apply(z.ravel())[Ns * 16 * 4:]
    assert np.max(np.abs(bc)) > 1.0


def test_n1_k0_only_constants():
    g = OperatorGrid(1, 0.0, 8.0, 64, 64, PR)
    rep = kernel_dimension(g)
    assert rep.dimension == 1
    assert rep.correlation_with(constant_axial_field(g)) > 0.999


def test_kernel_dimension_reference_case():
    g = OperatorGrid(2, 1.0, 8.0, 128, 128, PR)
    rep = kernel_dimension(g)
    assert rep.dimension == 1
    assert rep.gap_ratio >= 1e3
    assert rep.correlation_with(constant_axial_field(g)) > 0.999


def test_kernel_dimension_rotated_twist():
    g = OperatorGrid(3, 2.0, 8.0, 64, 64, PR, O=rotation(2 * np.pi / 3))
    rep = kernel_dimension(g)
    assert rep.dimension == 1
    assert rep.gap_ratio >= 1e3


@pytest.mark.parametrize("S", [6.0, 8.0, 10.0])
@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_kernel_stable_in_S_and_k(S, k):
    assert kernel_dimension(OperatorGrid(2, k, S, 64, 64, PR)).dimension == 1


def test_routes_agree():
    op = assemble_operator(OperatorGrid(2, 1.0, 8.0, 32, 16, PR))
    dense = kernel_dimension(op, method="dense")
    bloch = kernel_dimension(op, method="bloch")
    assert dense.dimension == bloch.dimension == 1
    assert np.allclose(dense.singular_values[1:6], bloch.singular_values[1:6], rtol=1e-8)


def test_tilde_identity_second_order():
    # rows of the transformed system are weighted rows of the original one,
    # up to the O(h^2) error of freezing rho and chi at cell centers
    errs = []
    for N in (32, 64, 128):
        g = OperatorGrid(2, 1.0, 3.0, N, N, PR)
        s, t = np.meshgrid(g.s, g.t, indexing="ij")
        w = 2 * np.pi * t / g.ell
        z = np.stack([np.sin(s) * np.cos(w), np.cos(s + w), s * np.sin(w),
                      np.exp(-s) * np.cos(w)], -1).ravel()
        direct = cell_residual(assemble_operator(g), z)
        tilde = tilde_cell_residual(g, tilde_transform(g, z, rho_weight(PR, g.s)))
        sm = (np.arange(N) + 0.5) * g.hs
        rm, chi = rho_weight(PR, sm), PR.chi(PR.f(sm))
        W = np.stack([rm, rm, 1 / chi, np.ones(N)], -1)[:, None, :]
        errs.append(np.max(np.abs(tilde - W * direct)))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_kernel_vector_has_no_normal_b():
    g = OperatorGrid(2, 1.0, 8.0, 64, 64, PR)
    rep = kernel_dimension(g)
    e = normal_b_energy(g, rep.kernel_vector)
    assert np.max(e) < 1e-20 * np.sum(np.abs(rep.kernel_vector) ** 2)


def test_invalid_threshold():
    with pytest.raises(InvalidArgumentError):
        kernel_dimension(OperatorGrid(2, 1.0, 8.0, 16, 16, PR), threshold_ratio=2.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(-5, 5), st.floats(0, 2 * np.pi))
def test_scaled_constant_stays_in_kernel(c, angle):
    g = OperatorGrid(3, 1.0, 6.0, 16, 16, PR, O=rotation(angle))
    op = assemble_operator(g)
    assert np.max(np.abs(op.apply(c * constant_axial_field(g)))) < 1e-8 * max(1.0, abs(c))


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 2 * np.pi))
def test_twist_is_orthogonal(angle):
    T = OperatorGrid(3, 1.0, 6.0, 16, 16, PR, O=rotation(angle)).twist()
    assert np.allclose(T @ T.T, np.eye(T.shape[0]), atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6))
def test_operator_is_linear(seed):
    rng = np.random.default_rng(seed)
    op = assemble_operator(OperatorGrid(2, 1.0, 6.0, 16, 16, PR))
    x, y = rng.standard_normal((2, op.shape[1]))
    a, b = rng.standard_normal(2)
    assert np.allclose(op.apply(a * x + b * y), a * op.apply(x) + b * op.apply(y))
