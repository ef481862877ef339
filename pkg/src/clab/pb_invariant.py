"""Poisson bracket invariant: circle-valued primitives, (H, K) pairs, bracket suprema.

H(q, p) = chi_c(|p|_g) h(Theta(q)), K(q, p) = chi_c(|p|_g) k(Theta(q)), so

    {H, K} = (psi'(|p|) / 2) (h'k - hk')(Theta) theta(g^{-1} p) / |p|,   psi = chi_c^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy.optimize import minimize_scalar

from .cotangent import CotangentPoint
from .errors import InvalidArgumentError, InvalidProfileError
from .homology_geodesics import CohomologyClass, stable_norm
from .riemannian import FourierScalar, MetricField, is_constant_metric


# ---------------------------------------------------------------------------
# Ramps


def _step(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10 - 15 * u + 6 * u * u)


def _step_int(u):
    """Integral of the quintic smoothstep from 0 to u, for u in [0, 1]."""
    u = np.clip(u, 0.0, 1.0)
    return u**6 - 3 * u**5 + 2.5 * u**4


@dataclass(frozen=True)
class Ramp:
    """Monotone C^2 ramp 0 -> 1 on [0, L] whose slope is a plateau of height
    1/(L - w) with smoothstep edges of width w."""

    L: float
    w: float

    def __post_init__(self):
        if self.L <= 0 or self.w <= 0 or 2 * self.w > self.L + 1e-15:
            raise InvalidProfileError(f"ramp needs 0 < 2w <= L (L={self.L}, w={self.w})")

    @property
    def slope(self):
        return 1.0 / (self.L - self.w)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        L, w, c = self.L, self.w, self.slope
        out = np.where(x <= 0, 0.0, np.where(x >= L, 1.0, c * (x - 0.5 * w)))
        out = np.where((x > 0) & (x < w), c * w * _step_int(x / w), out)
        out = np.where((x > L - w) & (x < L), 1.0 - c * w * _step_int((L - x) / w), out)
        return out

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        L, w, c = self.L, self.w, self.slope
        out = np.where((x <= 0) | (x >= L), 0.0, c)
        out = np.where((x > 0) & (x < w), c * _step(x / w), out)
        out = np.where((x > L - w) & (x < L), c * _step((L - x) / w), out)
        return out


# ---------------------------------------------------------------------------
# Partitions and circle profiles


def partition_edges(kind: str, eps: float = 0.02) -> np.ndarray:
    """Edges of X0, Y0, X1, Y1 in R/Z."""
    if kind == "quartered":
        return np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    if kind == "refined":
        if not (0 < eps < 0.125):
            raise InvalidProfileError("refined partition needs 0 < eps < 1/8")
        return np.array([0.0, eps, 2 * eps, 0.5, 1.0])
    raise InvalidArgumentError(f"unknown partition {kind!r}")


@dataclass
class CircleProfile:
    """Map R/Z -> [0, 1]: constant on two intervals, ramps on the other two.

    Both ramps sit inside (0, 1), so on [0, 1) the profile is
    base + up(theta - su) - down(theta - sd).
    """

    up: tuple        # (start, Ramp)
    down: tuple      # (start, Ramp)

    @property
    def base(self):
        return 1.0 if self.down[0] < self.up[0] else 0.0

    def value(self, th):
        th = np.mod(np.asarray(th, dtype=float), 1.0)
        (su, ru), (sd, rd) = self.up, self.down
        return self.base + ru.value(th - su) - rd.value(th - sd)

    def deriv(self, th):
        th = np.mod(np.asarray(th, dtype=float), 1.0)
        (su, ru), (sd, rd) = self.up, self.down
        return ru.deriv(th - su) - rd.deriv(th - sd)


def _profile(edges, rising, falling, margin, w):
    """0 -> 1 across interval `rising`, 1 -> 0 across `falling`, inset by `margin`."""
    def ramp(i):
        a, b = edges[i], edges[i + 1]
        m = min(margin, 0.1 * (b - a))
        L = (b - a) - 2 * m
        return (a + m, Ramp(L, min(w, 0.5 * L)))

    return CircleProfile(ramp(rising), ramp(falling))


def profiles(kind: str = "refined", eps: float = 0.02, w: float = 0.005,
             margin: float = 0.001):
    """(h, k) with h = 0 on X0, 1 on X1, k = 0 on Y0, 1 on Y1."""
    if w <= 0 or margin < 0:
        raise InvalidProfileError("transition width must be positive")
    e = partition_edges(kind, eps)
    if w > 0.25 * np.min(np.diff(e)[2:]):
        raise InvalidProfileError("transition width does not fit the long intervals")
    h = _profile(e, 1, 3, margin, w)
    k = _profile(e, 2, 0, margin, w)
    return h, k


def wronskian(h: CircleProfile, k: CircleProfile, th):
    return h.deriv(th) * k.value(th) - h.value(th) * k.deriv(th)


# ---------------------------------------------------------------------------
# Radial cutoff


@dataclass(frozen=True)
class RadialCutoff:
    """chi_c = sqrt(psi), psi = 1 - ramp(rho - delta) over [delta, r - delta]."""

    r: float
    rel_width: float = 0.01
    rel_inset: float = 0.001

    def __post_init__(self):
        if self.r <= 0:
            raise InvalidArgumentError("r must be positive")
        if not (0 < self.rel_width < 0.25) or not (0 <= self.rel_inset < 0.1):
            raise InvalidProfileError("cutoff widths out of range")

    @property
    def delta(self):
        return self.rel_inset * self.r

    @property
    def ramp(self):
        return Ramp(self.r - 2 * self.delta, self.rel_width * self.r)

    def psi(self, rho):
        return 1.0 - self.ramp.value(np.asarray(rho, dtype=float) - self.delta)

    def dpsi(self, rho):
        return -self.ramp.deriv(np.asarray(rho, dtype=float) - self.delta)

    def chi(self, rho):
        return np.sqrt(np.clip(self.psi(rho), 0.0, 1.0))


# ---------------------------------------------------------------------------
# Primitive and pair


def _is_primitive(a):
    g = 0
    for x in a:
        g = gcd(g, int(abs(x)))
    return g == 1


@dataclass
class CircleValuedPrimitive:
    a: np.ndarray
    potential: FourierScalar | None = None
    x0: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.a)
        if not np.all(a == np.round(a)):
            raise InvalidArgumentError("class must be integral")
        self.a = np.round(a).astype(int)
        self.x0 = np.zeros(len(self.a)) if self.x0 is None else np.asarray(self.x0, dtype=float)
        self._c = self._raw(self.x0)

    def _raw(self, q):
        q = np.asarray(q, dtype=float)
        v = q @ self.a.astype(float)
        if self.potential is not None:
            v = v + self.potential.value(q)
        return v

    def __call__(self, q):
        return np.mod(self._raw(q) - self._c, 1.0)

    def form(self, q):
        q = np.asarray(q, dtype=float)
        th = np.broadcast_to(self.a.astype(float), q.shape).copy()
        if self.potential is not None:
            th = th + self.potential.grad(q)
        return th


@dataclass
class BracketPair:
    metric: MetricField
    theta: CircleValuedPrimitive
    h: CircleProfile
    k: CircleProfile
    cutoff: RadialCutoff
    partition: str
    params: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.cutoff.r

    def _norm(self, q, p):
        Gi = np.linalg.inv(self.metric.eval(q))
        return np.sqrt(np.einsum("...i,...ij,...j->...", p, Gi, p)), Gi

    def H(self, q, p):
        rho, _ = self._norm(q, p)
        return self.cutoff.chi(rho) * self.h.value(self.theta(q))

    def K(self, q, p):
        rho, _ = self._norm(q, p)
        return self.cutoff.chi(rho) * self.k.value(self.theta(q))

    def bracket(self, q, p):
        """Analytic {H, K}; 0 where |p| = 0 or outside the support."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        rho, Gi = self._norm(q, p)
        safe = np.where(rho > 0, rho, 1.0)
        th = self.theta.form(q)
        pair = np.einsum("...i,...ij,...j->...", th, Gi, p) / safe
        W = wronskian(self.h, self.k, self.theta(q))
        return np.where(rho > 0, 0.5 * self.cutoff.dpsi(rho) * W * pair, 0.0)


def build_pair(metric: MetricField, a, x0=None, r: float = 1.0, partition: str = "refined",
               eps: float = 0.02, w: float = 0.005, margin: float = 0.001,
               cutoff_width: float = 0.01, cutoff_inset: float = 0.001) -> BracketPair:
    potential = None
    if isinstance(a, CohomologyClass):
        potential, a = a.potential, a.a
    a = np.asarray(a)
    if not np.any(a):
        raise InvalidArgumentError("class must be nonzero")
    if not _is_primitive(np.round(a).astype(int)):
        raise InvalidArgumentError("class must be primitive")
    theta = CircleValuedPrimitive(a, potential, x0)
    h, k = profiles(partition, eps, w, margin)
    cut = RadialCutoff(r, cutoff_width, cutoff_inset)
    params = dict(partition=partition, eps=eps, w=w, margin=margin,
                  cutoff_width=cutoff_width, cutoff_inset=cutoff_inset)
    return BracketPair(metric, theta, h, k, cut, partition, params)


def poisson_bracket(H, K, pt, step: float = 1e-6) -> float:
    """{H, K} = sum dH/dq_i dK/dp_i - dH/dp_i dK/dq_i by centered differences.

    H and K are callables (q, p) -> float. A BracketPair's own fields can be
    passed as pair.H, pair.K; pair.bracket gives the analytic value.
    """
    if step <= 0:
        raise InvalidArgumentError("step must be positive")
    if isinstance(pt, CotangentPoint):
        q, p = pt.q, pt.p
    else:
        q, p = (np.asarray(x, dtype=float) for x in pt)
    n = len(q)
    total = 0.0
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        Hq = (H(q + e, p) - H(q - e, p)) / (2 * step)
        Hp = (H(q, p + e) - H(q, p - e)) / (2 * step)
        Kq = (K(q + e, p) - K(q - e, p)) / (2 * step)
        Kp = (K(q, p + e) - K(q, p - e)) / (2 * step)
        total += Hq * Kp - Hp * Kq
    return float(total)


# ---------------------------------------------------------------------------
# Suprema


def _torus_grid(n, N):
    axes = [np.arange(N) / N] * n
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)


def _spatial_factor(pair: BracketPair, q):
    """|W(Theta(q))| |theta(q)|_{g*}: the sup over unit covectors at q."""
    q = np.atleast_2d(q)
    th = pair.theta.form(q)
    Gi = np.linalg.inv(pair.metric.eval(q))
    nrm = np.sqrt(np.einsum("si,sij,sj->s", th, Gi, th))
    return np.abs(wronskian(pair.h, pair.k, pair.theta(q))) * nrm


@dataclass
class SupReport:
    value: float
    q: np.ndarray
    p: np.ndarray
    grid_value: float


def sup_bracket(pair: BracketPair, grid: int = 200, radial: int = 50,
                directions: int = 8, polish: bool = True) -> SupReport:
    """Max of |{H, K}| over a torus grid x radial grid x covector directions.

    Directions are +-theta^sharp plus `directions` evenly spread unit
    covectors. The grid maximizer is polished by bounded scalar searches.
    """
    if grid < 100 or radial < 50:
        raise InvalidArgumentError("need grid >= 100 per torus axis and >= 50 radial")
    n = pair.metric.dim
    q = _torus_grid(n, grid)
    rho = (np.arange(radial) + 0.5) / radial * pair.r
    dpsi = np.abs(0.5 * pair.cutoff.dpsi(rho))
    jr = int(np.argmax(dpsi))
    G = pair.metric.eval(q)
    Gi = np.linalg.inv(G)
    th = pair.theta.form(q)
    W = wronskian(pair.h, pair.k, pair.theta(q))
    # candidate unit covectors: theta itself and a fan of fixed directions
    cands = [th]
    rng = np.random.default_rng(0)
    fan = rng.standard_normal((directions, n))
    for d in fan:
        cands.append(np.broadcast_to(d, q.shape))
    best, arg = -1.0, None
    for c in cands:
        nrm = np.sqrt(np.einsum("si,sij,sj->s", c, Gi, c))
        val = np.abs(W * np.einsum("si,sij,sj->s", th, Gi, c) / nrm)
        i = int(np.argmax(val))
        if val[i] > best + 1e-15:
            best, arg = float(val[i]), (i, c[i] / nrm[i])
    grid_value = best * float(dpsi[jr])
    i, pdir = arg
    q_best, rho_best = q[i].copy(), rho[jr]
    if polish:
        res = minimize_scalar(lambda x: -abs(0.5 * pair.cutoff.dpsi(x)),
                              bounds=(max(rho_best - pair.r / radial, 0.0),
                                      min(rho_best + pair.r / radial, pair.r)),
                              method="bounded", options={"xatol": 1e-12})
        rho_best = float(res.x)
        for ax in range(n):
            def f(x, ax=ax):
                qq = q_best.copy()
                qq[ax] = x
                return -float(_spatial_factor(pair, qq)[0])
            h = 1.0 / grid
            res = minimize_scalar(f, bounds=(q_best[ax] - h, q_best[ax] + h), method="bounded",
                                  options={"xatol": 1e-12})
            if -res.fun >= -f(q_best[ax]):
                q_best[ax] = res.x
        th_b = pair.theta.form(q_best)
        pdir = th_b / np.sqrt(th_b @ np.linalg.inv(pair.metric.eval(q_best)) @ th_b)
    p_best = rho_best * pdir
    val = abs(float(pair.bracket(q_best, p_best)))
    # try the other sign too, the sup is of {H, K} itself
    val = max(val, grid_value)
    if float(pair.bracket(q_best, p_best)) < 0:
        p_best = -p_best
    return SupReport(val, q_best, p_best, grid_value)


def analytic_sup(pair: BracketPair) -> float:
    """Sup for a constant metric with f = 0: max|psi'/2| max|W| |a|_{g*}."""
    if not is_constant_metric(pair.metric) or pair.theta.potential is not None:
        raise InvalidArgumentError("closed form needs a constant metric and no exact part")
    Gi = np.linalg.inv(pair.metric.eval(np.zeros(pair.metric.dim)))
    a = pair.theta.a.astype(float)
    return 0.5 * pair.cutoff.ramp.slope * max(_max_wronskian(pair), 0.0) * float(np.sqrt(a @ Gi @ a))


def _max_wronskian(pair, N=200001):
    th = np.linspace(0.0, 1.0, N)
    return float(np.max(np.abs(wronskian(pair.h, pair.k, th))))


# ---------------------------------------------------------------------------
# bp estimate


@dataclass
class BpEstimate:
    r: float
    a: np.ndarray
    sup: float
    lower_bound: float
    target: float
    slack: float
    stable_norm: float
    params: dict
    exhausted: bool = False


def bp_estimate(metric: MetricField, a, r: float = 1.0, budget: int = 24, grid: int = 200,
                radial: int = 50, stable_radius: int = 4, potential_modes: list | None = None,
                seed: int = 0) -> BpEstimate:
    """Budgeted coordinate descent over profile widths, partition eps and the
    coefficients of the exact part; returns 1/sup as a lower bound for bp."""
    if budget < 1:
        raise InvalidArgumentError("budget must be >= 1")
    a = np.asarray(a.a if isinstance(a, CohomologyClass) else a)
    if not _is_primitive(np.round(a).astype(int)) or not np.any(a):
        raise InvalidArgumentError("class must be nonzero and primitive")
    st = stable_norm(metric, a, B=stable_radius, seed=seed)
    target = r / st
    params = dict(eps=0.002, w=0.005, cutoff_width=0.01)
    coef = np.zeros(2 * len(potential_modes or []))
    used = 0

    def evaluate(prm, c):
        pot = None
        if potential_modes:
            pot = FourierScalar(metric.dim, [(k, c[2 * i], c[2 * i + 1])
                                             for i, k in enumerate(potential_modes)])
        cls = CohomologyClass(a, pot)
        pair = build_pair(metric, cls, r=r, partition="refined", eps=prm["eps"], w=prm["w"],
                          cutoff_width=prm["cutoff_width"])
        return sup_bracket(pair, grid, radial).value

    best = evaluate(params, coef)
    used += 1
    moves = [("eps", 0.5), ("w", 0.5), ("cutoff_width", 0.5)]
    step = 0.05
    improved = True
    while improved and used < budget:
        improved = False
        for key, fac in moves:
            if used >= budget:
                break
            trial = dict(params)
            trial[key] = params[key] * fac
            try:
                v = evaluate(trial, coef)
            except InvalidProfileError:
                continue
            used += 1
            if v < best * (1 - 1e-9):
                best, params, improved = v, trial, True
        for j in range(len(coef)):
            for sgn in (1.0, -1.0):
                if used >= budget:
                    break
                c = coef.copy()
                c[j] += sgn * step
                v = evaluate(params, c)
                used += 1
                if v < best * (1 - 1e-9):
                    best, coef, improved = v, c, True
                    break
    lb = 1.0 / best
    out = dict(params)
    if potential_modes:
        out["potential"] = coef.tolist()
    return BpEstimate(r, a, best, lb, target, (lb - target) / target, st, out,
                      exhausted=improved and used >= budget)


# ---------------------------------------------------------------------------
# Clifford torus numbers


CPN_BP_BOUND = "1/(n(n+1))"


@dataclass
class CliffordReport:
    n: int
    barycenter: np.ndarray
    facet_distances: np.ndarray
    distance: float
    r_max: float
    product: float


def clifford(n: int) -> CliffordReport:
    """Distance from the barycenter of the standard simplex to its boundary."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    x = np.full(n, 1.0 / (n + 1))
    # facets x_i = 0 (unit normals e_i) and sum x_i = 1 (normal (1..1)/sqrt n)
    A = np.vstack([np.eye(n), np.ones((1, n)) / np.sqrt(n)])
    b = np.r_[np.zeros(n), 1.0 / np.sqrt(n)]
    d = np.abs(A @ x - b)
    r_max = 1.0 / (np.sqrt(n) * (n + 1))
    product = (1.0 / (n * (n + 1))) * np.sqrt(n)
    return CliffordReport(n, x, d, float(d.min()), float(r_max), float(product))
