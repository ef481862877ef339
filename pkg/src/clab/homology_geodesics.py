"""Minimal closed geodesics in a homology class, length gaps, stable norms."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .errors import ConvergenceFailure, EmptyConeError, InvalidArgumentError
from .riemannian import (
    ClosedCurve,
    FourierScalar,
    MetricField,
    _rk4_geodesic,
    is_constant_metric,
)


@dataclass(frozen=True)
class HomologyClass:
    beta: tuple

    def __init__(self, beta):
        b = np.asarray(beta)
        if not np.all(b == np.round(b)):
            raise InvalidArgumentError("homology class must be integral")
        object.__setattr__(self, "beta", tuple(int(x) for x in np.round(b)))

    @property
    def vector(self):
        return np.array(self.beta, dtype=int)


@dataclass
class CohomologyClass:
    """Integer class a plus an optional periodic exact part df."""

    a: np.ndarray
    potential: FourierScalar | None = None

    def __post_init__(self):
        a = np.asarray(self.a)
        if not np.all(a == np.round(a)):
            raise InvalidArgumentError("cohomology class must be integral")
        self.a = np.round(a).astype(int)

    def pair(self, beta):
        return float(self.a @ np.asarray(beta))

    def form(self, q):
        """theta(q) = a + df(q) as covectors."""
        q = np.asarray(q, dtype=float)
        th = np.broadcast_to(self.a.astype(float), q.shape).copy()
        if self.potential is not None:
            th = th + self.potential.grad(q)
        return th


@dataclass
class LengthSpectrumSlice:
    beta: np.ndarray
    lengths: list
    minimal_length: float
    minimizer: ClosedCurve
    curves: list = field(default_factory=list)
    converged: bool = True
    iterations: int = 0
    seed: int = 0
    partial: bool = False

    @property
    def gap(self):
        if len(self.lengths) < 2:
            return 0.0
        return self.lengths[1] - self.lengths[0]


def _as_beta(beta):
    if isinstance(beta, HomologyClass):
        return beta.vector
    b = np.asarray(beta)
    if not np.all(b == np.round(b)):
        raise InvalidArgumentError("homology class must be integral")
    return np.round(b).astype(int)


def _energy_and_grad(x, metric, beta, N, n):
    """Discrete energy N * sum dX^T gbar dX of the closed lifted polyline."""
    X = x.reshape(N, n)
    Xc = np.vstack([X, X[:1] + beta])
    d = np.diff(Xc, axis=0)                     # (N, n)
    G = metric.eval(X)                          # (N, n, n)
    D = metric.d1(X)                            # (N, l, n, n)
    Gn = np.concatenate([G[1:], G[:1]])         # metric at X_{i+1}
    Gbar = 0.5 * (G + Gn)
    Gd = np.einsum("sij,sj->si", Gbar, d)
    E = N * float(np.sum(Gd * d))
    grad = -2.0 * Gd + 2.0 * np.roll(Gd, 1, axis=0)
    dprev = np.roll(d, 1, axis=0)
    quad = np.einsum("si,slij,sj->sl", d, D, d) + np.einsum("si,slij,sj->sl", dprev, D, dprev)
    grad = grad + 0.5 * quad
    return E, N * grad.ravel()


def _optimize_loop(metric, X0, beta, max_iter, gtol):
    N, n = X0.shape
    res = minimize(
        _energy_and_grad, X0.ravel(), args=(metric, beta.astype(float), N, n),
        jac=True, method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-15, "maxcor": 20},
    )
    X = res.x.reshape(N, n)
    samples = np.vstack([X, X[:1] + beta])
    return samples, bool(res.success), int(res.nit)


def default_points(beta, points_per_unit: int = 48) -> int:
    return int(max(24, points_per_unit * np.ceil(np.linalg.norm(beta))))


def min_geodesic(metric: MetricField, beta, restarts: int = 4, seed: int = 0,
                 n_points: int | None = None, seeds: list | None = None,
                 perturbation: float = 0.1, max_iter: int = 3000,
                 gtol: float = 1e-10) -> LengthSpectrumSlice:
    """Shortest closed curve in class beta found by multi-start energy descent.

    The reported length is the best over the restarts and any seed curves
    supplied (the seed curves themselves count as candidates).
    """
    beta = _as_beta(beta)
    if not np.any(beta):
        raise InvalidArgumentError("class must be nonzero")
    if restarts < 1:
        raise InvalidArgumentError("restarts must be >= 1")
    n = metric.dim
    N = default_points(beta) if n_points is None else int(n_points)
    if is_constant_metric(metric):
        curve = ClosedCurve.straight(metric, np.zeros(n), beta, N)
        return LengthSpectrumSlice(beta, [curve.length], curve.length, curve, [curve],
                                   True, 0, seed, False)
    rng = np.random.default_rng(seed)
    s = np.linspace(0.0, 1.0, N + 1)[:-1, None]
    starts = []
    for c in seeds or []:
        c = c if c.N == N else c.resample(metric, N)
        starts.append(("seed", c.samples[:-1]))
    for _ in range(restarts):
        q0 = rng.random(n)
        pert = np.zeros((N, n))
        for m in (1, 2):
            amp = perturbation * rng.standard_normal((2, n)) / m
            pert += np.sin(2 * np.pi * m * s) * amp[0] + np.cos(2 * np.pi * m * s) * amp[1]
        starts.append(("random", q0 + s * beta + pert))
    candidates = []
    any_conv = False
    iters = 0
    for kind, X0 in starts:
        if kind == "seed":
            c0 = ClosedCurve.from_samples(metric, np.vstack([X0, X0[:1] + beta]), beta)
            candidates.append((c0.length, c0, True))
        samples, ok, nit = _optimize_loop(metric, X0, beta, max_iter, gtol)
        iters += nit
        any_conv |= ok
        c = ClosedCurve.from_samples(metric, samples, beta)
        candidates.append((c.length, c, ok))
    candidates.sort(key=lambda x: (x[0], tuple(np.round(x[1].samples[0], 12))))
    if not any_conv:
        raise ConvergenceFailure("no restart converged", best=candidates[0][1])
    best_len, best_curve, _ = candidates[0]
    lengths = _distinct([c[0] for c in candidates if c[2]], best_len)
    curves = [c[1] for c in candidates]
    return LengthSpectrumSlice(beta, lengths, best_len, best_curve, curves, True,
                               iters, seed, False)


def _distinct(values, lmin, rel=1e-4):
    out = []
    for v in sorted(values):
        if not out or v - out[-1] > rel * lmin:
            out.append(v)
    return out


def length_gap(metric: MetricField, beta, count: int = 2, restarts: int = 16,
               seed: int = 0, n_points: int | None = None,
               seeds: list | None = None) -> LengthSpectrumSlice:
    """Smallest distinct critical lengths found by multi-start descent."""
    if count < 2:
        raise InvalidArgumentError("count must be >= 2")
    beta = _as_beta(beta)
    if is_constant_metric(metric):
        sl = min_geodesic(metric, beta, 1, seed, n_points)
        sl.partial = True
        return sl
    sl = min_geodesic(metric, beta, restarts, seed, n_points, seeds)
    sl.lengths = sl.lengths[:count]
    sl.partial = len(sl.lengths) < count
    return sl


def refine_closed_geodesic(metric: MetricField, curve: ClosedCurve, steps: int = 400,
                           N: int | None = None) -> ClosedCurve:
    """Polish an approximate closed geodesic by shooting, return unit-speed samples."""
    n = metric.dim
    beta = curve.beta.astype(float)
    qf, dqf = curve.spline()
    q0 = qf(0.0)
    v0 = dqf(0.0)
    # fix the base point's component along the initial velocity direction
    dirn = v0 / np.linalg.norm(v0)

    def resid(x):
        q = x[:n]
        v = x[n:]
        q1, v1 = _rk4_geodesic(metric, q, v, 1.0, steps)
        return np.concatenate([q1 - q - beta, v1 - v, [(q - q0) @ dirn]])

    sol = least_squares(resid, np.concatenate([q0, v0]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    q, v = sol.x[:n], sol.x[n:]
    qs, vs = _rk4_geodesic(metric, q, v, 1.0, steps, keep=True)
    N = curve.N if N is None else N
    idx = np.linspace(0, steps, N + 1)
    if not np.allclose(idx, np.round(idx)):
        raise InvalidArgumentError("steps must be a multiple of N")
    samples = qs[np.round(idx).astype(int)]
    samples[-1] = samples[0] + beta
    return ClosedCurve.from_samples(metric, samples, beta, atol=1e-6)


def lattice_ball(n: int, B: int):
    """Integer vectors with 0 < |beta|_inf <= B."""
    rng = range(-B, B + 1)
    out = [b for b in itertools.product(rng, repeat=n) if any(b)]
    return np.array(out, dtype=int)


@dataclass
class StableNormReport:
    value: float
    argmax: np.ndarray
    radius: int
    increment: float
    evaluated: int


def _min_eig_bound(metric, res=32):
    n = metric.dim
    pts = np.stack(np.meshgrid(*([np.arange(res) / res] * n), indexing="ij"), -1).reshape(-1, n)
    return float(np.min(np.linalg.eigvalsh(metric.eval(pts))))


def stable_norm_details(metric: MetricField, a, B: int = 5, restarts: int = 2,
                        seed: int = 0, n_points: int | None = None,
                        exhaustive: bool = False, lam_min: float | None = None) -> StableNormReport:
    """sup a(beta)/l_min(beta) over 0 < |beta|_inf <= B, with a(beta) > 0.

    Classes are visited by decreasing upper bound a(beta)/(sqrt(lam_min)|beta|)
    and pruned once the bound cannot beat the current best.
    """
    if B < 1:
        raise InvalidArgumentError("lattice radius must be >= 1")
    if isinstance(a, CohomologyClass):
        a = a.a
    a = np.asarray(a, dtype=float)
    n = metric.dim
    betas = lattice_ball(n, B)
    pair = betas @ a
    keep = pair > 0
    if not np.any(keep):
        raise EmptyConeError("no class with a(beta) > 0 inside the lattice ball")
    betas, pair = betas[keep], pair[keep]
    inner = np.max(np.abs(betas), axis=1) <= B - 1

    if is_constant_metric(metric):
        G = metric.eval(np.zeros(n))
        lens = np.sqrt(np.einsum("bi,ij,bj->b", betas, G, betas))
        ratio = pair / lens
        i = int(np.argmax(ratio))
        prev = float(np.max(ratio[inner])) if np.any(inner) else 0.0
        return StableNormReport(float(ratio[i]), betas[i], B, float(ratio[i]) - prev, len(betas))

    if lam_min is None:
        lam_min = _min_eig_bound(metric)
    # lam_min is sampled, shrink a little to keep the bound safe
    ub = pair / (np.sqrt(0.98 * lam_min) * np.linalg.norm(betas, axis=1))
    order = np.lexsort((np.arange(len(betas)), -ub))
    best, best_inner, arg = -np.inf, -np.inf, None
    count = 0
    for i in order:
        if not exhaustive and ub[i] <= best and (ub[i] <= best_inner or not inner[i]):
            continue
        sl = min_geodesic(metric, betas[i], restarts, seed, n_points)
        count += 1
        r = pair[i] / sl.minimal_length
        if r > best:
            best, arg = r, betas[i]
        if inner[i] and r > best_inner:
            best_inner = r
    return StableNormReport(float(best), arg, B, float(best - max(best_inner, 0.0)), count)


def stable_norm(metric: MetricField, a, B: int = 5, **kw) -> float:
    return stable_norm_details(metric, a, B, **kw).value
