"""The twelve acceptance criteria as callable checks.

Each check returns a CriterionResult; `run_all` evaluates them in order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .cotangent import build_cylinder, energy, holomorphicity_residual, radial_profile
from .homology_geodesics import stable_norm
from .index import (
    IndexData,
    LagrangianLoop,
    SymplecticPath,
    conley_zehnder,
    fredholm_index,
    j0,
    linearized_cogeodesic_path,
    maslov_loop,
)
from .lagrangian_graphs import closeclose_check, maslov_of_graph, random_graph, symplectic_order_check
from .linearized_cr import (
    GoodMetricParams,
    OperatorGrid,
    c0_distance,
    constant_axial_field,
    good_metric,
    kernel_dimension,
)
from .pb_invariant import build_pair, clifford, sup_bracket
from .riemannian import ClosedCurve, ConformalMetric, FlatMetric, ScaledMetric, curve_length


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d}: {self.title} -- {self.detail}"


def rotation2(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------


def criterion_1(grids=(64, 128, 256), ks=(0.5, 1.0, 2.0), ns=(2, 3), S=8.0, max_seconds=120.0):
    pr = radial_profile()
    worst_gap, slowest, bad = np.inf, 0.0, []
    for n in ns:
        for k in ks:
            t0 = time.perf_counter()
            for N in grids:
                O = rotation2(2 * np.pi / 3) if n == 3 else None
                rep = kernel_dimension(OperatorGrid(n, k, S, N, N, pr, O=O))
                if rep.dimension != 1:
                    bad.append((n, k, N, rep.dimension))
            dt = time.perf_counter() - t0
            slowest = max(slowest, dt)
            worst_gap = min(worst_gap, rep.gap_ratio)
            if rep.gap_ratio < 1e3 or dt > max_seconds:
                bad.append((n, k, "gap" if rep.gap_ratio < 1e3 else "time"))
    return CriterionResult(1, "kernel dimension 1 with gap >= 1e3", not bad,
                           f"min gap {worst_gap:.3e}, slowest case {slowest:.1f}s, failures {bad}")


def criterion_2(N=128, S=8.0):
    pr = radial_profile()
    worst = 1.0
    for n, k, O in ((2, 1.0, None), (3, 2.0, rotation2(2 * np.pi / 3))):
        g = OperatorGrid(n, k, S, N, N, pr, O=O)
        rep = kernel_dimension(g)
        worst = min(worst, rep.correlation_with(constant_axial_field(g)))
    return CriterionResult(2, "kernel vector matches constant a_n", worst >= 0.999,
                           f"min correlation {worst:.12f}")


def criterion_3(S=4.0, grids=(32, 64, 128, 256), Nt=16):
    g = FlatMetric(2)
    pr = radial_profile()
    c = ClosedCurve.straight(g, np.zeros(2), np.array([1, 0]), 64)
    res = [holomorphicity_residual(build_cylinder(g, pr, c, S, (N, Nt)), g, pr) for N in grids]
    h = S / np.array(grids, dtype=float)
    order = float(np.polyfit(np.log(h), np.log(res), 1)[0])
    return CriterionResult(3, "cylinder residual order >= 1.9", order >= 1.9,
                           f"fitted order {order:.4f}, residuals {[f'{r:.3e}' for r in res]}")


def criterion_4(S=8.0, grid=(512, 16)):
    pr = radial_profile()
    ok, parts = True, []
    for ell in (1.0, 2.0):
        g = ScaledMetric(FlatMetric(2), ell**2)
        c = ClosedCurve.straight(g, np.zeros(2), np.array([1, 0]), 64)
        rep = energy(build_cylinder(g, pr, c, S, grid), g)
        rel = abs(rep.E - 2 * c.length) / (2 * c.length)
        ok &= rel <= 0.01 and rep.E <= 3 * c.length
        parts.append(f"l={c.length:g}: E={rep.E:.6f} (rel {rel:.1e})")
    return CriterionResult(4, "energy 2l within 1%, below 3l", ok, "; ".join(parts))


def criterion_5():
    ind = fredholm_index(IndexData(n=2, euler=0, c1=0, mu=0, cz_plus=[0], cz_minus=[]))
    gm = good_metric(GoodMetricParams(2, (1, 0), 0.05, 1.0))
    cz = conley_zehnder(linearized_cogeodesic_path(gm.metric, gm.axis_curve).normal_block())
    return CriterionResult(5, "Fredholm index 1 and CZ 0", ind == 1 and cz == 0,
                           f"index {ind}, CZ {cz}")


def criterion_6(B=6):
    ok, parts = True, []
    for n in (2, 3, 4):
        t0 = time.perf_counter()
        v = stable_norm(FlatMetric(n), np.ones(n), B=B)
        dt = time.perf_counter() - t0
        ok &= abs(v - np.sqrt(n)) <= 1e-6 and dt < 5.0
        parts.append(f"n={n}: {v:.12f} ({dt:.2f}s)")
    return CriterionResult(6, "flat stable norm sqrt(n)", ok, "; ".join(parts))


def criterion_7(eps=0.05, k=1.0, res=64):
    gm = good_metric(GoodMetricParams(2, (1, 0), eps, k))
    base = FlatMetric(2)
    d = c0_distance(gm.metric, base, res)
    pts = np.stack(np.meshgrid(np.arange(res) / res, np.arange(res) / res, indexing="ij"),
                   -1).reshape(-1, 2)
    lam = np.linalg.eigvalsh(gm.metric.eval(pts) - base.eval(pts)).min(axis=1)
    on_axis = np.isclose(pts[:, 1], 0.0)
    psd = lam.min() >= 0.0
    eq_axis = np.all(lam[on_axis] == 0.0) and np.all(lam[~on_axis] > 0.0)
    L = curve_length(gm.metric, gm.axis_curve.samples)
    dl = abs(L - curve_length(base, gm.axis_curve.samples))
    # (1 + eps) - 1 is eps only up to one rounding
    ok = d <= eps * (1 + 1e-12) and psd and eq_axis and dl <= 1e-8
    return CriterionResult(7, "good metric C0, PSD, length", bool(ok),
                           f"C0 distance {d!r} <= {eps}, min eig {lam.min():.2e}, "
                           f"equality exactly on axis {bool(eq_axis)}, length change {dl:.1e}")


def criterion_8(grid=200, radial=50):
    g = FlatMetric(2)
    ok, parts, sups = True, [], {}
    for a in ((1, 0), (1, 1)):
        st = stable_norm(g, a, B=4)
        for r in (1.0, 2.0):
            pair = build_pair(g, a, r=r, partition="refined", eps=0.002, w=0.005)
            s1 = sup_bracket(pair, grid, radial).value
            s2 = sup_bracket(pair, 2 * grid, 2 * radial).value
            sups[(a, r)] = s1
            bound_ok = s1 <= 1.05 * st / r and 1.0 / s1 >= 0.95 * r / st
            res_ok = abs(s2 - s1) / s1 < 0.01
            one_sided = 1.0 / s1 <= (r / st) * 1.02
            ok &= bound_ok and res_ok and one_sided
            parts.append(f"a={a} r={r:g}: sup {s1:.5f} (limit {1.05 * st / r:.5f}), "
                         f"doubling change {abs(s2 - s1) / s1:.1e}")
        ratio = (1 / sups[(a, 2.0)]) / (1 / sups[(a, 1.0)])
        ok &= abs(ratio - 2.0) <= 0.1
        parts.append(f"a={a} r-ratio {ratio:.4f}")
    return CriterionResult(8, "pb lower bound within 5% of r/|a|_st", ok, "; ".join(parts))


def criterion_9():
    ok, worst = True, 0.0
    for n in range(1, 7):
        c = clifford(n)
        e1 = abs(c.distance - 1 / (np.sqrt(n) * (n + 1)))
        e2 = abs(c.product - c.r_max)
        ok &= e1 <= 1e-9 and e2 <= 1e-12
        worst = max(worst, e1, e2)
    return CriterionResult(9, "Clifford distance 1/(sqrt(n)(n+1))", ok, f"max error {worst:.1e}")


def conformal_test_metric():
    return ConformalMetric(2, [((1, 0), 0.2, 0.0), ((0, 1), 0.0, 0.1), ((1, 1), 0.05, 0.03)])


def criterion_10(trials=100, ball=3, seed=0):
    ok, parts = True, []
    for name, metric in (("flat", FlatMetric(2)), ("conformal", conformal_test_metric())):
        for eps in (0.05, 0.1):
            rep = closeclose_check(metric, eps, trials, ball, seed)
            rng = np.random.default_rng(seed + 1)
            mas = [maslov_of_graph(random_graph(metric, eps, rng), b)
                   for _ in range(trials) for b in ((1, 0), (0, 1), (1, 1))]
            bad_m = sum(m != 0 for m in mas)
            ok &= not rep.violations and bad_m == 0
            parts.append(f"{name} eps={eps}: worst ratio {rep.worst_ratio:.3f}, "
                         f"maslov nonzero {bad_m}")
    return CriterionResult(10, "graph periods bounded, Maslov 0", ok, "; ".join(parts))


def random_conformal_pair(rng, modes=3):
    """(g, g') conformal with g' = exp(2 psi) g and psi >= 0."""
    ms = []
    for _ in range(modes):
        k = tuple(int(x) for x in rng.integers(-2, 3, size=2))
        if k == (0, 0):
            k = (1, 0)
        ms.append((k, 0.1 * rng.standard_normal(), 0.1 * rng.standard_normal()))
    bump = []
    for _ in range(2):
        k = tuple(int(x) for x in rng.integers(-2, 3, size=2))
        if k == (0, 0):
            k = (0, 1)
        bump.append((k, 0.05 * rng.standard_normal(), 0.05 * rng.standard_normal()))
    amp = sum(np.hypot(a, b) for _, a, b in bump) * rng.uniform(1.0, 2.0)
    g = ConformalMetric(2, ms)
    gp = ConformalMetric(2, ms + bump + [((0, 0), amp, 0.0)])
    return g, gp


def criterion_11(trials=100, seed=0):
    rng = np.random.default_rng(seed)
    worst, bad = np.inf, 0
    for i in range(trials):
        g, gp = random_conformal_pair(rng)
        rep = symplectic_order_check(g, gp, [(1, 0), (1, 1)], restarts=2, seed=i)
        worst = min(worst, min(rep.margins))
        bad += not rep.holds
    return CriterionResult(11, "length monotone under g <= g'", bad == 0,
                           f"{trials} pairs, min margin {worst:.3e}, failures {bad}")


def random_symmetric(rng, n, scale):
    A = rng.standard_normal((2 * n, 2 * n))
    return scale * 0.5 * (A + A.T)


def exp_path(S, samples=801):
    """Psi(t) = exp(t J0 S) sampled on [0, 1]."""
    A = j0(S.shape[0] // 2) @ S
    t = np.linspace(0.0, 1.0, samples)
    return SymplecticPath(t, np.array([sla.expm(s * A) for s in t]), tol=1e-7)


def random_nondegenerate_path(rng, n, scale=1.5):
    while True:
        p = exp_path(random_symmetric(rng, n, scale))
        if np.min(np.abs(np.linalg.eigvals(p.samples[-1]) - 1)) > 1e-3:
            return p


def random_lagrangian_loop(rng, n=2, samples=801, wind=None, pert=0.3):
    """Loop U(t) = Q diag(e^{i pi m_j t}) with a smooth symplectic perturbation."""
    m = rng.integers(-2, 3, size=n) if wind is None else np.asarray(wind)
    t = np.linspace(0.0, 1.0, samples)
    Q = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))[0]
    U = Q[None] * np.exp(1j * np.pi * np.outer(t, m))[:, None, :]
    frames = np.concatenate([U.real, U.imag], axis=1)
    if pert:
        S1 = random_symmetric(rng, n, pert)
        S2 = random_symmetric(rng, n, pert)
        J = j0(n)
        for i, s in enumerate(t):
            S = np.sin(2 * np.pi * s) * S1 + np.sin(4 * np.pi * s) * S2
            frames[i] = sla.expm(J @ S) @ frames[i]
    return LagrangianLoop(t, frames), int(np.sum(m))


def criterion_12(trials=50, seed=0):
    rng = np.random.default_rng(seed)
    bad_cz = 0
    for _ in range(trials):
        n1, n2 = rng.integers(1, 3, size=2)
        p1, p2 = random_nondegenerate_path(rng, n1), random_nondegenerate_path(rng, n2)
        if conley_zehnder(p1.direct_sum(p2)) != conley_zehnder(p1) + conley_zehnder(p2):
            bad_cz += 1
    bad_m = 0
    for _ in range(trials):
        st = rng.integers(0, 2**31)
        loop0, _ = random_lagrangian_loop(np.random.default_rng(st), pert=0.0)
        loop1, _ = random_lagrangian_loop(np.random.default_rng(st), pert=0.3)
        if maslov_loop(loop0) != maslov_loop(loop1):
            bad_m += 1
    return CriterionResult(12, "CZ additivity and Maslov homotopy invariance",
                           bad_cz == 0 and bad_m == 0,
                           f"{trials} CZ sums ({bad_cz} failures), {trials} loops ({bad_m} failures)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


def run_criterion(fn) -> CriterionResult:
    t0 = time.perf_counter()
    res = fn()
    res.seconds = time.perf_counter() - t0
    return res


def run_all(only=None):
    out = []
    for i, fn in enumerate(CRITERIA, start=1):
        if only and i not in only:
            continue
        out.append(run_criterion(fn))
    return out
