import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import assume, given, settings, strategies as st

from clab.errors import DegenerateEndpointError, InvalidArgumentError
from clab.index import (
    IndexData, LagrangianLoop, SymplecticPath, conley_zehnder, fredholm_index, hamiltonian_path,
    j0, linearized_cogeodesic_path, load_loop_csv, load_path_csv, maslov_loop, maslov_transfer,
    rotation_path, save_path_csv,
)
from clab.linearized_cr import GoodMetricParams, good_metric
from clab.riemannian import ClosedCurve, FlatMetric


def line_loop(turns, samples=401):
    """n = 1 loop of lines at angle turns * pi * t."""
    t = np.linspace(0.0, 1.0, samples)
    a = turns * np.pi * t
    return LagrangianLoop(t, np.stack([np.cos(a), np.sin(a)], -1)[:, :, None])


def crossings_with_vertical(turns, samples=20001):
    """Signed count of times the angle passes pi/2 mod pi (brute force)."""
    a = turns * np.pi * np.linspace(0.0, 1.0, samples)
    k = np.floor((a - np.pi / 2) / np.pi)
    return int(np.sum(np.diff(k)))


def cz_rotation_oracle(theta):
    # exp(theta t J0): crossings at t = 2 pi m / theta, each of signature 2,
    # half weight at t = 0
    m = int(np.floor(abs(theta) / (2 * np.pi)))
    return int(np.sign(theta)) * (2 * m + 1)


def test_constant_loop():
    t = np.linspace(0, 1, 50)
    assert maslov_loop(LagrangianLoop(t, np.tile([[1.0], [0.0]], (50, 1, 1)))) == 0


def test_half_turn_line():
    assert maslov_loop(line_loop(1)) == 1 == crossings_with_vertical(1)


def test_graph_planes_have_zero_maslov():
    # tangent planes of the graph of df, f = 0.1 sin(2 pi x) + 0.05 cos(2 pi y), along e1
    t = np.linspace(0, 1, 401)
    S = np.zeros((len(t), 2, 2))
    S[:, 0, 0] = -0.1 * (2 * np.pi) ** 2 * np.sin(2 * np.pi * t)
    S[:, 1, 1] = -0.05 * (2 * np.pi) ** 2
    frames = np.concatenate([np.broadcast_to(np.eye(2), S.shape), S], axis=1)
    assert maslov_loop(LagrangianLoop(t, frames)) == 0


def test_non_lagrangian_rejected():
    t = np.linspace(0, 1, 5)
    fr = np.tile(np.array([[1.0, 0], [0, 0], [0, 1], [0, 0]]), (5, 1, 1))   # x1, y1 span
    with pytest.raises(InvalidArgumentError):
        LagrangianLoop(t, fr)


def test_cz_rotation_half_turn():
    assert conley_zehnder(rotation_path(np.pi)) == 1


def test_cz_hyperbolic():
    assert conley_zehnder(hamiltonian_path(np.array([[0.0, 1.0], [1.0, 0.0]]))) == 0
    t = np.linspace(0, 1, 401)
    P = np.array([np.diag([np.exp(s), np.exp(-s)]) for s in t])
    assert conley_zehnder(SymplecticPath(t, P)) == 0


def test_cz_small_quadratic_form():
    for a, b in [(0.3, 0.2), (-0.3, -0.1), (0.3, -0.2)]:
        sgn = np.sign(a) + np.sign(b)
        assert conley_zehnder(hamiltonian_path(np.diag([a, b]))) == sgn / 2


def test_cz_degenerate_endpoint():
    with pytest.raises(DegenerateEndpointError):
        conley_zehnder(rotation_path(2 * np.pi))


def test_cz_degenerate_start_resolved():
    t = np.linspace(0, 1, 801)
    P = np.array([sla.expm(np.pi * s**2 * j0(1)) for s in t])
    assert conley_zehnder(SymplecticPath(t, P)) == 1


def test_path_must_start_at_identity():
    t = np.linspace(0, 1, 5)
    with pytest.raises(InvalidArgumentError):
        SymplecticPath(t, np.tile(2 * np.eye(2), (5, 1, 1)))


def test_index_formula_values():
    assert fredholm_index(IndexData(2, 0, 0, 0, [0], [])) == 1
    assert fredholm_index(IndexData(2, 2)) == 4
    assert fredholm_index(IndexData(2, 0, 0, 0, [3], [3])) == 2


def test_puncture_count_checked():
    with pytest.raises(InvalidArgumentError):
        IndexData(2, 0, cz_plus=[0], punctures=3)


def test_maslov_transfer():
    assert maslov_transfer(0, 0) == 0
    assert maslov_transfer(2, -2) == 0
    # vertical against vertical: the transfer term vanishes and the two
    # measurements of a graph loop agree
    assert maslov_transfer(maslov_loop(line_loop(2)), 0) == maslov_loop(line_loop(2))


def test_good_metric_normal_block():
    gm = good_metric(GoodMetricParams(2, (1, 0), 0.05, 1.0))
    cp = linearized_cogeodesic_path(gm.metric, gm.axis_curve)
    assert cp.path.symplectic_defect() < 1e-6
    nb = cp.normal_block()
    ev = np.linalg.eigvals(nb.samples[-1])
    assert np.all(np.abs(ev.imag) < 1e-10) and np.all(ev.real > 0)
    assert np.allclose(nb.samples[-1], [[np.cosh(1), np.sinh(1)], [np.sinh(1), np.cosh(1)]],
                       atol=1e-6)
    assert conley_zehnder(nb) == 0


def test_flat_normal_block_is_shear():
    g = FlatMetric(2)
    cp = linearized_cogeodesic_path(g, ClosedCurve.straight(g, np.zeros(2), [1, 0], 64))
    nb = cp.normal_block()
    assert np.allclose(nb.samples[-1], [[1, 0], [1, 1]], atol=1e-10)
    with pytest.raises(DegenerateEndpointError):
        conley_zehnder(nb)


def test_csv_round_trip(tmp_path):
    p = rotation_path(np.pi, 51)
    save_path_csv(p, tmp_path / "p.csv")
    q = load_path_csv(tmp_path / "p.csv")
    assert np.array_equal(p.samples, q.samples)
    loop = line_loop(1, 51)
    rows = np.column_stack([loop.t, loop.frames.reshape(51, -1)])
    np.savetxt(tmp_path / "l.csv", rows, delimiter=",")
    assert maslov_loop(load_loop_csv(tmp_path / "l.csv", 1)) == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(-4, 4))
def test_maslov_line_loops_match_crossings(turns):
    assert maslov_loop(line_loop(turns, 801)) == turns == crossings_with_vertical(turns)


@settings(max_examples=20, deadline=None)
@given(st.integers(-3, 3), st.integers(-3, 3))
def test_maslov_concatenation_additive(a, b):
    assert maslov_loop(line_loop(a).concatenate(line_loop(b))) == a + b


@settings(max_examples=20, deadline=None)
@given(st.floats(-5 * np.pi, 5 * np.pi))
def test_cz_rotation_matches_oracle(theta):
    assume(abs(theta) > 0.2)
    assume(np.min(np.abs(theta - 2 * np.pi * np.arange(-3, 4))) > 0.1)
    samples = 401 + int(200 * abs(theta))
    assert conley_zehnder(rotation_path(theta, samples)) == cz_rotation_oracle(theta)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 2.8), st.floats(3.5, 5.9))
def test_cz_direct_sum_additive(a, b):
    pa, pb = rotation_path(a, 601), rotation_path(b, 601)
    assert conley_zehnder(pa.direct_sum(pb)) == conley_zehnder(pa) + conley_zehnder(pb)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 6.0), st.floats(-1.0, 1.0), st.floats(0.5, 2.0))
def test_cz_conjugation_invariant(theta, shear, scale):
    assume(abs(theta - 2 * np.pi) > 0.1)
    M = np.array([[scale, shear], [0.0, 1.0 / scale]])      # det 1, symplectic in 2D
    p = rotation_path(theta, 801)
    conj = SymplecticPath(p.t, M @ p.samples @ np.linalg.inv(M), 1e-7)
    assert conley_zehnder(conj) == conley_zehnder(p)
