"""Graph Lagrangians in T*T^n: periods, cylinder areas, Maslov class, order checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, PreconditionViolation, ResolutionError
from .homology_geodesics import min_geodesic
from .index import LagrangianLoop, maslov_loop
from .riemannian import FourierScalar, MetricField


def _grid(n, res):
    axes = [np.arange(res) / res] * n
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)


@dataclass
class GraphLagrangian:
    """Image of q -> (q, theta(q)), theta = a + df. The class a may be any real vector."""

    metric: MetricField
    a: np.ndarray
    potential: FourierScalar | None = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).reshape(self.metric.dim)

    @property
    def dim(self):
        return self.metric.dim

    def theta(self, q):
        q = np.asarray(q, dtype=float)
        th = np.broadcast_to(self.a, q.shape).copy()
        if self.potential is not None:
            th = th + self.potential.grad(q)
        return th

    def dtheta(self, q):
        q = np.asarray(q, dtype=float)
        if self.potential is None:
            return np.zeros(q.shape + (self.dim,))
        return self.potential.hess(q)

    def sup_norm(self, res: int = 64) -> float:
        q = _grid(self.dim, res)
        th = self.theta(q)
        Gi = np.linalg.inv(self.metric.eval(q))
        return float(np.sqrt(np.max(np.einsum("si,sij,sj->s", th, Gi, th))))

    def within(self, eps: float, res: int = 64) -> bool:
        return self.sup_norm(res) < eps


def liouville_period(graph: GraphLagrangian, beta, samples: int = 256,
                     x0=None, check: bool = True) -> float:
    """Integral of the pulled-back Liouville form over the straight beta-loop."""
    beta = np.asarray(beta, dtype=float)
    if not np.allclose(beta, np.round(beta)):
        raise InvalidArgumentError("class must be integral")
    x0 = np.zeros(graph.dim) if x0 is None else np.asarray(x0, dtype=float)
    s = np.arange(samples) / samples
    q = x0 + s[:, None] * beta
    # periodic integrand: the rectangle rule is spectrally accurate
    val = float(np.mean(graph.theta(q) @ beta))
    if check:
        alg = float(graph.a @ beta)
        if abs(val - alg) > 1e-8 * max(1.0, abs(alg)):
            raise PreconditionViolation(f"quadrature {val} disagrees with the class value {alg}")
    return val


def _periodic_derivative(x):
    """d/ds of samples x(s_i), s_i = i/N, periodic along axis 0, by FFT."""
    N = x.shape[0]
    k = np.fft.fftfreq(N, 1.0 / N)
    X = np.fft.fft(x, axis=0)
    shape = (N,) + (1,) * (x.ndim - 1)
    return np.real(np.fft.ifft(2j * np.pi * k.reshape(shape) * X, axis=0))


@dataclass
class CylinderChain:
    """Fiberwise straight homotopy between two loops over the same base loop.

    q: (N, n) samples of the base loop at s_i = i/N; the lift closes up with
    q(1) = q(0) + beta. p_bottom, p_top: (N, n) covectors along it.
    """

    q: np.ndarray
    beta: np.ndarray
    p_bottom: np.ndarray
    p_top: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.p_bottom = np.asarray(self.p_bottom, dtype=float)
        self.p_top = np.asarray(self.p_top, dtype=float)
        if not (self.q.shape == self.p_bottom.shape == self.p_top.shape):
            raise InvalidArgumentError("base loop and covector samples must align")

    @property
    def N(self):
        return self.q.shape[0]

    def dq(self):
        s = np.arange(self.N) / self.N
        per = self.q - s[:, None] * self.beta
        return _periodic_derivative(per) + self.beta

    def end_period(self, which: str) -> float:
        p = self.p_top if which == "top" else self.p_bottom
        return float(np.mean(np.sum(p * self.dq(), axis=1)))

    @classmethod
    def graph_over(cls, bottom: GraphLagrangian | None, top: GraphLagrangian, beta,
                   N: int = 256, x0=None):
        beta = np.asarray(beta, dtype=float)
        x0 = np.zeros(top.dim) if x0 is None else np.asarray(x0, dtype=float)
        q = x0 + (np.arange(N) / N)[:, None] * beta
        pb = np.zeros_like(q) if bottom is None else bottom.theta(q)
        return cls(q, beta, pb, top.theta(q))


def cylinder_area(chain: CylinderChain, n_sigma: int = 8) -> float:
    """Symplectic area of u(sigma, s) = (q(s), (1 - sigma) p_b + sigma p_t).

    omega(d_sigma u, d_s u) with omega = sum dp ^ dq, integrated by
    Gauss-Legendre in sigma and the rectangle rule in the periodic s.
    """
    x, wts = np.polynomial.legendre.leggauss(n_sigma)
    sig = 0.5 * (x + 1.0)
    dq = chain.dq()
    total = 0.0
    for sg, wt in zip(sig, 0.5 * wts):
        u_sigma_p = chain.p_top - chain.p_bottom          # d_sigma u is vertical
        u_s_q = dq                                        # q-part of d_s u at this sigma
        total += wt * float(np.mean(np.sum(u_sigma_p * u_s_q, axis=1)))
    return total


def trivial_cylinder(metric: MetricField, curve, r: float) -> CylinderChain:
    """[0, r] x (lifted geodesic): bottom on the zero section, top at |p| = r."""
    q = curve.samples[:-1]
    N = len(q)
    chain = CylinderChain(q, curve.beta, np.zeros_like(q), np.zeros_like(q))
    v = chain.dq()
    G = metric.eval(q)
    gv = np.einsum("sij,sj->si", G, v)
    speed = np.sqrt(np.sum(gv * v, axis=1))
    chain.p_top = r * gv / speed[:, None]
    if N < 8:
        raise InvalidArgumentError("curve needs at least 8 samples")
    return chain


def maslov_of_graph(graph: GraphLagrangian, beta, samples: int = 400, x0=None,
                    max_samples: int = 102400) -> int:
    """Maslov index of the loop of tangent planes over the straight beta-loop.

    Tangent planes are spanned by the columns of [I; d theta] in (dq, dp)
    coordinates, measured against the constant vertical plane. Sampling is
    doubled until consecutive planes are resolved.
    """
    beta = np.asarray(beta, dtype=float)
    x0 = np.zeros(graph.dim) if x0 is None else np.asarray(x0, dtype=float)
    while True:
        t = np.linspace(0.0, 1.0, samples + 1)
        q = x0 + t[:, None] * beta
        S = graph.dtheta(q)
        I = np.broadcast_to(np.eye(graph.dim), S.shape)
        try:
            return maslov_loop(LagrangianLoop(t, np.concatenate([I, S], axis=1)))
        except ResolutionError:
            if 2 * samples > max_samples:
                raise
            samples *= 2


# ---------------------------------------------------------------------------
# Quantitative checks


@dataclass
class OrderReport:
    classes: list
    lengths_g: list
    lengths_gprime: list
    margins: list
    holds: bool
    min_eig_gap: float


def symplectic_order_check(g: MetricField, gprime: MetricField, classes, res: int = 32,
                           restarts: int = 4, seed: int = 0, tol: float = 1e-8) -> OrderReport:
    """l_g^min(beta) <= l_{g'}^min(beta) for g <= g' pointwise.

    The g-minimization is seeded with the g'-minimizer, which is a valid
    competitor: its g-length is at most its g'-length.
    """
    if g.dim != gprime.dim:
        raise InvalidArgumentError("metrics live on different tori")
    q = _grid(g.dim, res)
    gap = float(np.min(np.linalg.eigvalsh(gprime.eval(q) - g.eval(q))))
    if gap < -1e-12:
        raise PreconditionViolation(f"g <= g' fails on the grid (min eigenvalue {gap:.3e})")
    lg, lgp, margins = [], [], []
    for beta in classes:
        sp = min_geodesic(gprime, beta, restarts, seed)
        sg = min_geodesic(g, beta, restarts, seed, seeds=[sp.minimizer])
        lg.append(sg.minimal_length)
        lgp.append(sp.minimal_length)
        margins.append(sp.minimal_length - sg.minimal_length)
    holds = all(m >= -tol for m in margins)
    return OrderReport([tuple(int(x) for x in b) for b in classes], lg, lgp, margins, holds, gap)


def random_graph(metric: MetricField, eps: float, rng: np.random.Generator,
                 modes: int = 3, kmax: int = 2, res: int = 48) -> GraphLagrangian:
    """Random graph with sup norm in (0.3 eps, 0.95 eps) on a res^n grid."""
    n = metric.dim
    ms = []
    for _ in range(modes):
        k = rng.integers(-kmax, kmax + 1, size=n)
        if not np.any(k):
            k[0] = 1
        ms.append((tuple(int(x) for x in k), float(rng.standard_normal()), float(rng.standard_normal())))
    a = rng.standard_normal(n)
    raw = GraphLagrangian(metric, a, FourierScalar(n, [(k, x / 10, y / 10) for k, x, y in ms]))
    target = eps * rng.uniform(0.3, 0.95)
    c = target / raw.sup_norm(res)
    return GraphLagrangian(metric, c * a, FourierScalar(n, [(k, c * x / 10, c * y / 10) for k, x, y in ms]))


@dataclass
class CloseCloseReport:
    trials: int
    checked: int
    worst_ratio: float
    violations: list = field(default_factory=list)


def closeclose_check(metric: MetricField, eps: float, trials: int = 100, ball: int = 3,
                     seed: int = 0, restarts: int = 2, res: int = 48) -> CloseCloseReport:
    """|period(beta)| <= eps l^min(beta) over random eps-small graphs and a lattice ball."""
    from .homology_geodesics import lattice_ball

    rng = np.random.default_rng(seed)
    betas = lattice_ball(metric.dim, ball)
    lmin = {}
    worst, checked, bad = 0.0, 0, []
    for trial in range(trials):
        gr = random_graph(metric, eps, rng, res=res)
        sup = gr.sup_norm(res)
        for b in betas:
            key = tuple(int(x) for x in b)
            if key not in lmin:
                lmin[key] = min_geodesic(metric, b, restarts, seed).minimal_length
            per = liouville_period(gr, b)
            ratio = abs(per) / (eps * lmin[key])
            checked += 1
            worst = max(worst, ratio)
            if ratio > 1.0 or sup >= eps:
                bad.append((trial, key, ratio))
    return CloseCloseReport(trials, checked, worst, bad)
