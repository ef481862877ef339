"""Geometry of the cotangent bundle of the torus.

Tangent vectors of T*T^n are written (dq, dp) in canonical coordinates.
Conventions: lambda = p.dq, omega = d lambda = sum dp_i ^ dq_i, so
omega((dq1, dp1), (dq2, dp2)) = dp1.dq2 - dp2.dq1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import solve_ivp

from .errors import InvalidArgumentError, InvalidMetricError, TruncationError
from .riemannian import ClosedCurve, MetricField, _christoffel

# omega as a bilinear form on (dq, dp) column vectors: omega(X, Y) = X^T W Y
def omega_matrix(n: int) -> np.ndarray:
    Z = np.zeros((n, n))
    I = np.eye(n)
    return np.block([[Z, -I], [I, Z]])


def omega(X, Y) -> float:
    n = len(X) // 2
    return float(X[n:] @ Y[:n] - Y[n:] @ X[:n])


# ---------------------------------------------------------------------------
# Radial profile


def _smoothstep():
    t = Polynomial([0, 1])
    return 6 * t**5 - 15 * t**4 + 10 * t**3


def _bump():
    t = Polynomial([0, 1])
    return 140 * t**3 * (1 - t) ** 3


class RadialProfile:
    """chi = 1 on [0, r0], chi(r) = r on [r1, inf), C^2 and nondecreasing.

    On [r0, r1] the derivative chi' = S(tau) + c B(tau), tau = (r-r0)/(r1-r0),
    S the quintic smoothstep and B = 140 tau^3 (1-tau)^3 a unit-mass bump;
    c is fixed so that chi(r1) = r1. G(u) = int_0^u dr/chi and f = G^{-1}
    (which solves f' = chi o f) are tabulated.
    """

    def __init__(self, r0: float = 0.5, r1: float = 2.0, u_max: float = 12.0):
        if not (0 < r0 < r1):
            raise InvalidArgumentError("need 0 < r0 < r1")
        if not (r0 < 1.0 < r1):
            raise InvalidArgumentError("need r0 < 1 < r1 for chi(r) = r beyond r1")
        self.r0, self.r1 = float(r0), float(r1)
        L = self.r1 - self.r0
        self.L = L
        self.c = (self.r1 - 1.0) / L - 0.5
        dchi = _smoothstep() + self.c * _bump()
        tau = np.linspace(0, 1, 2001)
        if np.min(dchi(tau)) < -1e-14:
            raise InvalidArgumentError("blend is not monotone for these r0, r1")
        self._dchi = dchi
        self._chi_int = dchi.integ()          # chi = 1 + L * int_0^tau chi'
        self._d2chi = dchi.deriv()
        self._gl_x, self._gl_w = np.polynomial.legendre.leggauss(80)
        self.G_r0 = self.r0
        nodes = self.r0 + 0.5 * L * (1.0 + self._gl_x)
        self.G_r1 = self.r0 + 0.5 * L * float(np.sum(self._gl_w / self.chi(nodes)))
        self.u_max = float(u_max)
        self._build_f()

    # chi and derivatives -------------------------------------------------
    def chi(self, r):
        r = np.asarray(r, dtype=float)
        tau = np.clip((r - self.r0) / self.L, 0.0, 1.0)
        mid = 1.0 + self.L * self._chi_int(tau)
        return np.where(r <= self.r0, 1.0, np.where(r >= self.r1, r, mid))

    def dchi(self, r):
        r = np.asarray(r, dtype=float)
        tau = np.clip((r - self.r0) / self.L, 0.0, 1.0)
        return np.where(r <= self.r0, 0.0, np.where(r >= self.r1, 1.0, self._dchi(tau)))

    def d2chi(self, r):
        r = np.asarray(r, dtype=float)
        tau = np.clip((r - self.r0) / self.L, 0.0, 1.0)
        inside = (r > self.r0) & (r < self.r1)
        return np.where(inside, self._d2chi(tau) / self.L, 0.0)

    # G and its inverse -----------------------------------------------------
    def G(self, u):
        """G(u) = int_0^u dr/chi, Gauss-Legendre on the blend (chi is a polynomial there)."""
        u = np.asarray(u, dtype=float)
        x = np.clip(u, self.r0, self.r1)
        half = 0.5 * (x - self.r0)
        nodes = self.r0 + half[..., None] * (1.0 + self._gl_x)
        mid = self.r0 + half * np.sum(self._gl_w / self.chi(nodes), axis=-1)
        tail = self.G_r1 + np.log(np.maximum(u, self.r1) / self.r1)
        out = np.where(u <= self.r0, u, np.where(u >= self.r1, tail, mid))
        return out if out.shape else float(out)

    def _build_f(self):
        sol = solve_ivp(lambda s, y: self.chi(y), (self.G_r0, self.G_r1), [self.r0],
                        method="DOP853", rtol=1e-13, atol=1e-14, dense_output=True)
        self._f_mid = sol.sol

    def f(self, s):
        s = np.asarray(s, dtype=float)
        mid = np.clip(s, self.G_r0, self.G_r1)
        fm = self._f_mid(mid.ravel())[0].reshape(s.shape)
        tail = self.r1 * np.exp(np.minimum(s, 700.0) - self.G_r1)
        return np.where(s <= self.G_r0, s, np.where(s >= self.G_r1, tail, fm))

    def df(self, s):
        return self.chi(self.f(s))

    def d2f(self, s):
        fs = self.f(s)
        return self.dchi(fs) * self.chi(fs)

    def d3f(self, s):
        fs = self.f(s)
        c = self.chi(fs)
        return self.d2chi(fs) * c * c + self.dchi(fs) ** 2 * c

    def describe(self):
        return f"radial_profile(r0={self.r0}, r1={self.r1})"


def radial_profile(r0: float = 0.5, r1: float = 2.0) -> RadialProfile:
    return RadialProfile(r0, r1)


# ---------------------------------------------------------------------------
# Frames and J_g


@dataclass
class CotangentPoint:
    q: np.ndarray
    p: np.ndarray
    r: float

    @classmethod
    def make(cls, metric: MetricField, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        Gi = np.linalg.inv(metric.eval(q))
        return cls(q, p, float(np.sqrt(max(p @ Gi @ p, 0.0))))


@dataclass
class CotangentFrame:
    point: CotangentPoint
    H: np.ndarray        # 2n x n, horizontal lifts of the coordinate vectors
    F: np.ndarray        # 2n x n, vertical vectors d/dp_i
    R: np.ndarray        # Reeb vector
    radial: np.ndarray   # d/dr
    alpha: np.ndarray    # row, lambda / r
    J: np.ndarray        # 2n x 2n in (dq, dp) coordinates


def _gamma_p(Gam, p):
    """(Gamma p)_{l i} = sum_k Gamma^k_{il} p_k, symmetric in (l, i)."""
    return np.einsum("...kil,...k->...li", Gam, p)


def j_matrix(metric: MetricField, profile: RadialProfile, q, p, r_zero: float = 0.0):
    """Matrix of J_g at (q, p) in (dq, dp) coordinates (batched over leading axes).

    In the split coordinates (v, w) = (horizontal part, vertical part):
        J(h(v) + w) = h(g^{-1} w + (1/chi - 1) w(u) u) + (-g v + (1 - chi) phat(v) phat)
    with u = g^{-1} p / r, phat = p / r. On the zero section J = [[0, g^{-1}], [-g, 0]].
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    n = q.shape[-1]
    G = metric.eval(q)
    Gi = np.linalg.inv(G)
    Gam = _christoffel(metric, q)
    r = np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", p, Gi, p), 0.0))
    safe = np.where(r > r_zero, r, 1.0)
    phat = p / safe[..., None]
    u = np.einsum("...ij,...j->...i", Gi, p) / safe[..., None]
    chi = profile.chi(r)
    on = r > r_zero
    a = np.where(on, 1.0 / chi - 1.0, 0.0)[..., None, None]
    b = np.where(on, 1.0 - chi, 0.0)[..., None, None]
    # blocks of J in split coordinates, acting on (v, w)
    Jvv = np.zeros(G.shape)
    Jvw = Gi + a * u[..., :, None] * u[..., None, :]
    Jwv = -G + b * phat[..., :, None] * phat[..., None, :]
    Jww = np.zeros(G.shape)
    Js = _block(Jvv, Jvw, Jwv, Jww)
    Gp = _gamma_p(Gam, p)
    I = np.broadcast_to(np.eye(n), G.shape)
    Z = np.zeros(G.shape)
    P = _block(I, Z, Gp, I)
    Pinv = _block(I, Z, -Gp, I)
    return P @ Js @ Pinv


def _block(A, B, C, D):
    top = np.concatenate([A, B], axis=-1)
    bot = np.concatenate([C, D], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def frame_at(metric: MetricField, profile: RadialProfile, pt: CotangentPoint) -> CotangentFrame:
    q, p = pt.q, pt.p
    n = len(q)
    G = metric.eval(q)
    if np.min(np.linalg.eigvalsh(G)) <= 0:
        raise InvalidMetricError("metric is singular at q")
    Gi = np.linalg.inv(G)
    Gam = _christoffel(metric, q)
    Gp = _gamma_p(Gam, p)
    Hb = np.vstack([np.eye(n), Gp])
    Fb = np.vstack([np.zeros((n, n)), np.eye(n)])
    J = j_matrix(metric, profile, q, p)
    if pt.r > 0:
        u = Gi @ p / pt.r
        R = Hb @ u
        radial = Fb @ (p / pt.r)
        alpha = np.concatenate([p, np.zeros(n)]) / pt.r
    else:
        R = np.full(2 * n, np.nan)
        radial = np.full(2 * n, np.nan)
        alpha = np.zeros(2 * n)
    return CotangentFrame(pt, Hb, Fb, R, radial, alpha, J)


def zero_section_j(metric: MetricField, q) -> np.ndarray:
    G = metric.eval(np.asarray(q, dtype=float))
    Gi = np.linalg.inv(G)
    Z = np.zeros_like(G)
    return np.block([[Z, Gi], [-G, Z]])


def sigma_matrix(n: int) -> np.ndarray:
    """Differential of sigma(q, p) = (q, -p)."""
    return np.diag(np.concatenate([np.ones(n), -np.ones(n)]))


# ---------------------------------------------------------------------------
# Explicit cylinder


@dataclass
class DiscreteCylinder:
    """Samples u(s_i, t_j) = (q, p); t runs over [0, ell) on a periodic grid."""

    s: np.ndarray        # (Ns+1,)
    t: np.ndarray        # (Nt,)
    q: np.ndarray        # (Ns+1, Nt, n), lifted
    p: np.ndarray        # (Ns+1, Nt, n)
    ell: float
    beta: np.ndarray
    profile: RadialProfile | None = None

    @property
    def shape(self):
        return self.q.shape[:2]


def _geodesic_samples(metric, geodesic: ClosedCurve, t_frac):
    qf, dqf = geodesic.spline()
    q = qf(t_frac)
    v = dqf(t_frac) / geodesic.length   # unit speed in arc length t = frac * ell
    return q, v


def build_cylinder(metric: MetricField, profile: RadialProfile, geodesic: ClosedCurve,
                   S: float, grid: tuple, gamma=None) -> DiscreteCylinder:
    """Nodes (s_i, t_j) carry (gamma(t_j), f(s_i) gamma'(t_j)^flat).

    `gamma`, if given, is a callable t -> (q, v) in arc length used instead of
    the spline of the stored samples.
    """
    Ns, Nt = grid
    if Ns < 8 or Nt < 8:
        raise InvalidArgumentError("grid sizes must be >= 8")
    ell = geodesic.length
    s = np.linspace(0.0, S, Ns + 1)
    t = np.arange(Nt) * ell / Nt
    if gamma is None:
        qg, vg = _geodesic_samples(metric, geodesic, t / ell)
    else:
        qg, vg = gamma(t)
    flat = np.einsum("tij,tj->ti", metric.eval(qg), vg)
    fs = profile.f(s)
    q = np.broadcast_to(qg, (Ns + 1, Nt, metric.dim)).copy()
    p = fs[:, None, None] * flat[None, :, :]
    return DiscreteCylinder(s, t, q, p, ell, geodesic.beta, profile)


def _dt(arr, beta_shift, ht):
    """Centered periodic t-derivative; beta_shift is added across the wrap."""
    fwd = np.roll(arr, -1, axis=1)
    bwd = np.roll(arr, 1, axis=1)
    if beta_shift is not None:
        fwd[:, -1] += beta_shift
        bwd[:, 0] -= beta_shift
    return (fwd - bwd) / (2 * ht)


def holomorphicity_residual(cyl: DiscreteCylinder, metric: MetricField,
                            profile: RadialProfile) -> float:
    """max over interior nodes of |d_s u + J(u) d_t u| with centered differences."""
    hs = cyl.s[1] - cyl.s[0]
    ht = cyl.ell / len(cyl.t)
    beta = cyl.beta.astype(float)
    dq_t = _dt(cyl.q, beta, ht)[1:-1]
    dp_t = _dt(cyl.p, None, ht)[1:-1]
    dq_s = (cyl.q[2:] - cyl.q[:-2]) / (2 * hs)
    dp_s = (cyl.p[2:] - cyl.p[:-2]) / (2 * hs)
    J = j_matrix(metric, profile, cyl.q[1:-1], cyl.p[1:-1])
    Ut = np.concatenate([dq_t, dp_t], axis=-1)
    Us = np.concatenate([dq_s, dp_s], axis=-1)
    res = Us + np.einsum("...ij,...j->...i", J, Ut)
    return float(np.max(np.linalg.norm(res, axis=-1)))


def _omega_density(dq_s, dp_s, dq_t, dp_t):
    return np.sum(dp_s * dq_t - dp_t * dq_s, axis=-1)


@dataclass
class EnergyReport:
    E_omega: float
    E_alpha: float
    E: float
    bound: float
    best_bump: tuple


def _bump_weights(a, c, w):
    """Cosine bump of unit mass on [c - w, c + w] in the variable a."""
    x = (a - c) / w
    return np.where(np.abs(x) < 1.0, (1.0 + np.cos(np.pi * x)) / (2.0 * w), 0.0)


def energy(cyl: DiscreteCylinder, metric: MetricField, n_centers: int = 24,
           widths=(0.25, 0.5, 1.0)) -> EnergyReport:
    """omega-energy and alpha-energy of a discrete cylinder.

    E_omega integrates u*omega over {r <= 1} plus the pullback of d alpha of
    the contact component over {r > 1}. E_alpha is the sup over unit-mass
    bumps phi(a), a = log r, of int phi(a) da ^ alpha.
    """
    hs = cyl.s[1] - cyl.s[0]
    ht = cyl.ell / len(cyl.t)
    beta = cyl.beta.astype(float)
    Gi = np.linalg.inv(metric.eval(cyl.q))
    r = np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", cyl.p, Gi, cyl.p), 0.0))
    if np.max(r[-1]) == 0.0:
        return EnergyReport(0.0, 0.0, 0.0, 0.0, (None, None))
    if np.min(r[-1]) <= 1.0:
        raise TruncationError("the s = S circle does not lie in {r > 1}")
    dq_s = np.gradient(cyl.q, hs, axis=0, edge_order=2)
    dp_s = np.gradient(cyl.p, hs, axis=0, edge_order=2)
    dq_t = _dt(cyl.q, beta, ht)
    dp_t = _dt(cyl.p, None, ht)
    dens = _omega_density(dq_s, dp_s, dq_t, dp_t)
    # u*omega on {r <= 1}: integrate in s up to the crossing, per t column
    E_in = 0.0
    for j in range(len(cyl.t)):
        E_in += _integrate_below(cyl.s, dens[:, j], r[:, j], 1.0) * ht
    # contact component m = (q, p/r) on {r > 1}
    rs = np.where(r > 0, r, 1.0)[..., None]
    m = cyl.p / rs
    dm_s = np.gradient(m, hs, axis=0, edge_order=2)
    dm_t = _dt(m, None, ht)
    dens_m = _omega_density(dq_s, dm_s, dq_t, dm_t)
    E_end = 0.0
    for j in range(len(cyl.t)):
        E_end += _integrate_above(cyl.s, dens_m[:, j], r[:, j], 1.0) * ht
    # alpha-energy: int phi(a) da ^ alpha, a = log r
    # a = log r; the zero section is sent far below every bump support
    a = np.log(np.where(r > 0, r, np.exp(-50.0)))
    da_s = np.gradient(a, hs, axis=0, edge_order=2)
    da_t = _dt(a, None, ht)
    al_s = np.sum(m * dq_s, axis=-1)
    al_t = np.sum(m * dq_t, axis=-1)
    form = da_s * al_t - da_t * al_s
    a_top = float(np.min(a[-1]))
    best, arg = 0.0, (None, None)
    for w in widths:
        if 2 * w > a_top:
            continue
        for c in np.linspace(w, a_top - w, n_centers):
            phi = _bump_weights(a, c, w)
            val = float(np.sum(_trapz_s(phi * form, hs)) * ht)
            if val > best:
                best, arg = val, (float(c), float(w))
    if arg[0] is None:
        raise TruncationError("truncation too small to fit an admissible bump")
    E_om = E_in + E_end
    return EnergyReport(E_om, best, E_om + best, 3.0 * cyl.ell, arg)


def _trapz_s(vals, hs):
    return hs * (np.sum(vals, axis=0) - 0.5 * (vals[0] + vals[-1]))


def _integrate_below(s, y, r, level):
    """int y ds over {r <= level}, r increasing along s, linear cut at the crossing."""
    k = np.searchsorted(r, level, side="right")
    if k == 0:
        return 0.0
    if k >= len(s):
        return float(np.trapezoid(y, s))
    frac = (level - r[k - 1]) / (r[k] - r[k - 1])
    s_star = s[k - 1] + frac * (s[k] - s[k - 1])
    y_star = y[k - 1] + frac * (y[k] - y[k - 1])
    ss = np.concatenate([s[:k], [s_star]])
    yy = np.concatenate([y[:k], [y_star]])
    return float(np.trapezoid(yy, ss))


def _integrate_above(s, y, r, level):
    total = float(np.trapezoid(y, s))
    return total - _integrate_below(s, y, r, level)


# ---------------------------------------------------------------------------
# Checks of the splitting


def splitting_condition(frame: CotangentFrame) -> float:
    return float(np.linalg.cond(np.hstack([frame.H, frame.F])))


def sharp_pi_on_ker_alpha(metric: MetricField, frame: CotangentFrame):
    """Image of ker(alpha) cap H under v -> (0, g v).

    The image should be n-1 dimensional and tangent to the level set of r,
    i.e. annihilated by dr. Returns (image vectors, rank, max |dr(image)|).
    """
    q, p = frame.point.q, frame.point.p
    n = len(q)
    G = metric.eval(q)
    u = np.linalg.solve(G, p) / frame.point.r
    # horizontal h(v) lies in ker alpha iff p.v = 0
    basis = np.linalg.svd(p[None, :])[2][1:].T
    imgs = np.vstack([np.zeros((n, n - 1)), G @ basis])
    rank = int(np.linalg.matrix_rank(imgs, tol=1e-10))
    leak = float(np.max(np.abs(u @ imgs[n:]))) if n > 1 else 0.0
    return imgs, rank, leak
