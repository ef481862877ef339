"""Good metrics around a closed geodesic and the linearized CR operator.

The operator acts on fields z = (a_1..a_n, b_1..b_n) on [0, S] x R/ell Z.
Components 0..n-2 of a and b are normal, component n-1 is axial. The
discretization is a box scheme: unknowns live on nodes (s_i, t_j), each
equation is imposed at the cell center with edge-averaged differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .cotangent import RadialProfile
from .errors import (
    AssemblyError,
    EpsilonTooLargeError,
    InvalidArgumentError,
    NumericalFailure,
)
from .riemannian import ClosedCurve, FlatMetric, MetricField, fermi_chart


# ---------------------------------------------------------------------------
# Good metric


def _psi(x):
    xs = np.where(x > 0, x, 1.0)
    return np.where(x > 0, np.exp(-1.0 / xs), 0.0)


def _dpsi(x):
    xs = np.where(x > 0, x, 1.0)
    return np.where(x > 0, np.exp(-1.0 / xs) / xs**2, 0.0)


def _d2psi(x):
    xs = np.where(x > 0, x, 1.0)
    return np.where(x > 0, np.exp(-1.0 / xs) * (1.0 - 2.0 * xs) / xs**4, 0.0)


def cutoff_rho(x, order: int = 0):
    """Smooth nonincreasing rho: 1 on [0, 1/2], 0 on [1, inf), with derivatives."""
    x = np.asarray(x, dtype=float)
    A, B = _psi(1.0 - x), _psi(x - 0.5)
    D = A + B
    rho = A / D
    if order == 0:
        return rho
    A1, B1 = -_dpsi(1.0 - x), _dpsi(x - 0.5)
    N = A1 * B - A * B1
    d1 = N / D**2
    if order == 1:
        return rho, d1
    A2, B2 = _d2psi(1.0 - x), _d2psi(x - 0.5)
    N1 = A2 * B - A * B2
    D1 = A1 + B1
    d2 = (N1 * D - 2.0 * N * D1) / D**3
    return rho, d1, d2


class GoodMetric(MetricField):
    """g_eps = [rho_eps(|x'|^2)(1 + k|x'|^2) + (1 - rho_eps)(1 + eps)] delta.

    Flat base metric, axis {x' = center} along coordinate `axis`,
    rho_eps(t) = rho(t / eps). x' is the normal offset wrapped to [-1/2, 1/2).
    """

    derivative_source = "analytic"

    def __init__(self, dim, eps, k, axis=0, center=None):
        super().__init__(dim)
        self.eps = float(eps)
        self.k = float(k)
        self.axis = int(axis)
        self.normal = [i for i in range(dim) if i != self.axis]
        self.center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)

    def _xp(self, q):
        x = q[..., self.normal] - self.center[self.normal]
        return np.mod(x + 0.5, 1.0) - 0.5

    def _c(self, t, order):
        e, k = self.eps, self.k
        r = cutoff_rho(t / e, order)
        if order == 0:
            return r * (1 + k * t) + (1 - r) * (1 + e)
        if order == 1:
            rho, d1 = r
            return rho * (1 + k * t) + (1 - rho) * (1 + e), d1 / e * (k * t - e) + rho * k
        rho, d1, d2 = r
        c = rho * (1 + k * t) + (1 - rho) * (1 + e)
        c1 = d1 / e * (k * t - e) + rho * k
        c2 = d2 / e**2 * (k * t - e) + 2.0 * d1 * k / e
        return c, c1, c2

    def conformal_factor(self, q):
        q = np.asarray(q, dtype=float)
        x = self._xp(q)
        return self._c(np.sum(x * x, axis=-1), 0)

    def eval(self, q):
        return self.conformal_factor(q)[..., None, None] * np.eye(self.dim)

    def d1(self, q):
        q = np.asarray(q, dtype=float)
        x = self._xp(q)
        _, c1 = self._c(np.sum(x * x, axis=-1), 1)
        grad = np.zeros(q.shape)
        grad[..., self.normal] = 2.0 * c1[..., None] * x
        return grad[..., :, None, None] * np.eye(self.dim)

    def d2(self, q):
        q = np.asarray(q, dtype=float)
        x = self._xp(q)
        _, c1, c2 = self._c(np.sum(x * x, axis=-1), 2)
        H = np.zeros(q.shape + (self.dim,))
        for a, i in enumerate(self.normal):
            for b, j in enumerate(self.normal):
                H[..., i, j] = 4.0 * c2 * x[..., a] * x[..., b] + (2.0 * c1 if i == j else 0.0)
        return H[..., :, :, None, None] * np.eye(self.dim)

    def describe(self):
        return f"good_metric(dim={self.dim}, eps={self.eps}, k={self.k}, axis={self.axis})"


@dataclass
class GoodMetricParams:
    dim: int
    beta: tuple
    eps: float
    k: float
    center: tuple | None = None
    C: float | None = None

    def __post_init__(self):
        if self.C is None:
            self.C = self.k / self.dim


@dataclass
class GoodMetricResult:
    metric: GoodMetric
    base: MetricField
    axis_curve: ClosedCurve
    chart: object


def good_metric(params: GoodMetricParams, chart_samples: int = 64) -> GoodMetricResult:
    """Good metric around the straight minimizer of a coordinate class, flat base."""
    n = params.dim
    beta = np.asarray(params.beta, dtype=int)
    if np.count_nonzero(beta) != 1 or np.max(np.abs(beta)) != 1:
        raise InvalidArgumentError("the flat-base construction supports classes +-e_i")
    if params.eps <= 0 or params.k <= 0:
        raise InvalidArgumentError("eps and k must be positive")
    if params.eps >= 0.25:
        raise EpsilonTooLargeError("eps support would wrap around the torus")
    axis = int(np.flatnonzero(beta)[0])
    base = FlatMetric(n)
    # positivity of n C |x'|^2 delta - h on the eps-support; h = 0 for a flat base
    t = np.linspace(0.0, params.eps, 64)
    h_bound = 0.0 * t
    if np.any(n * params.C * t - h_bound < -1e-14):
        raise EpsilonTooLargeError("positivity check failed on the eps-support")
    center = np.zeros(n) if params.center is None else np.asarray(params.center, dtype=float)
    gm = GoodMetric(n, params.eps, n * params.C, axis, center)
    pts = center + np.linspace(0.0, 1.0, chart_samples + 1)[:, None] * beta
    curve = ClosedCurve.from_samples(gm, pts, beta)
    chart = fermi_chart(gm, curve, 0.5 * np.sqrt(params.eps), steps=4 * chart_samples,
                        check_grid=(32, 5)) if n > 1 else None
    return GoodMetricResult(gm, base, curve, chart)


def c0_distance(g1: MetricField, g2: MetricField, res: int = 64) -> float:
    """max over a grid of sup_{u,v} |g1(u,v) - g2(u,v)| / (|u|_{g2} |v|_{g2})."""
    n = g1.dim
    pts = np.stack(np.meshgrid(*([np.arange(res) / res] * n), indexing="ij"), -1).reshape(-1, n)
    A, B = g1.eval(pts), g2.eval(pts)
    L = np.linalg.cholesky(B)
    Li = np.linalg.inv(L)
    M = Li @ (A - B) @ np.swapaxes(Li, -1, -2)
    return float(np.max(np.abs(np.linalg.eigvalsh(M))))


# ---------------------------------------------------------------------------
# rho weight


def damping(profile: RadialProfile, s):
    """(1 - chi(f(s))) / f(s), set to 0 where f(s) <= r0."""
    fs = profile.f(s)
    safe = np.where(fs > profile.r0, fs, 1.0)
    return np.where(fs > profile.r0, (1.0 - profile.chi(fs)) / safe, 0.0)


def rho_weight(profile: RadialProfile, s_grid, max_step: float = 1e-3) -> np.ndarray:
    """rho' = rho (1 - chi o f)/f, rho(0) = 1, by RK4 between grid points."""
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(np.diff(s_grid) < 0) or s_grid[0] < 0:
        raise InvalidArgumentError("s grid must be nondecreasing and start at s >= 0")
    out = np.empty_like(s_grid)
    rho, s = 1.0, 0.0
    for i, target in enumerate(s_grid):
        span = target - s
        m = max(1, int(np.ceil(span / max_step)))
        h = span / m
        for _ in range(m):
            k1 = rho * damping(profile, s)
            k2 = (rho + 0.5 * h * k1) * damping(profile, s + 0.5 * h)
            k3 = (rho + 0.5 * h * k2) * damping(profile, s + 0.5 * h)
            k4 = (rho + h * k3) * damping(profile, s + h)
            rho += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            s += h
        s = target
        out[i] = rho
    return out


# ---------------------------------------------------------------------------
# Operator


@dataclass
class OperatorGrid:
    n: int
    k: float
    S: float
    Ns: int
    Nt: int
    profile: RadialProfile
    ell: float = 1.0
    O: np.ndarray | None = None
    hessian: Callable | None = None   # t -> (n-1, n-1), half of d2 g_nn

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgumentError("n must be >= 1")
        if self.Ns < 2 or self.Nt < 2:
            raise InvalidArgumentError("grid too small")
        if self.O is None:
            self.O = np.eye(self.n - 1)
        self.O = np.asarray(self.O, dtype=float).reshape(self.n - 1, self.n - 1)
        if self.n > 1 and not np.allclose(self.O.T @ self.O, np.eye(self.n - 1), atol=1e-10):
            raise InvalidArgumentError("O must be orthogonal")

    @property
    def hs(self):
        return self.S / self.Ns

    @property
    def ht(self):
        return self.ell / self.Nt

    @property
    def s(self):
        return np.linspace(0.0, self.S, self.Ns + 1)

    @property
    def t(self):
        return np.arange(self.Nt) * self.ht

    @property
    def size(self):
        return (self.Ns + 1) * self.Nt * 2 * self.n

    def coefficients(self, s):
        """f, (1 - chi o f)/f, chi o f, chi' o f at s."""
        pr = self.profile
        fs = pr.f(s)
        return fs, damping(pr, s), pr.chi(fs), pr.dchi(fs)

    def twist(self):
        """Action of the t -> t + ell shift on the 2n components."""
        n = self.n
        T = np.eye(2 * n)
        T[: n - 1, : n - 1] = self.O
        T[n : 2 * n - 1, n : 2 * n - 1] = self.O
        return T

    def describe(self):
        return (f"n={self.n} k={self.k} S={self.S} grid={self.Ns}x{self.Nt} ell={self.ell} "
                f"O={np.round(self.O, 12).tolist()}")


def _cell_matrices(grid: OperatorGrid, s_mid, M):
    """Ps, Pt, Q (2n x 2n) at one cell: equation = Ps Ds z + Pt Dt z + Q Av z.

    Rows: E1_l (0..n-2), E2_l (n-1..2n-3), E3 (2n-2), E4 (2n-1).
    M is the (n-1, n-1) coupling, k * I for the good metric.
    """
    n = grid.n
    f, c2, chi, dchi = (float(x) for x in grid.coefficients(np.array(s_mid)))
    Ps = np.zeros((2 * n, 2 * n))
    Pt = np.zeros((2 * n, 2 * n))
    Q = np.zeros((2 * n, 2 * n))
    for l in range(n - 1):
        r1, r2 = l, n - 1 + l
        Ps[r1, l] = 1.0
        Pt[r1, n + l] = 1.0
        for i in range(n - 1):
            Q[r1, i] = -f * M[i, l]
        Ps[r2, n + l] = 1.0
        Pt[r2, l] = -1.0
        Q[r2, n + l] = c2
    r3, r4 = 2 * n - 2, 2 * n - 1
    an, bn = n - 1, 2 * n - 1
    Ps[r3, bn] = 1.0
    Pt[r3, an] = -chi
    Q[r3, bn] = -dchi
    Ps[r4, an] = 1.0
    Pt[r4, bn] = 1.0 / chi
    return Ps, Pt, Q


def _corners(Ps, Pt, Q, hs, ht):
    a, b = Ps / (2 * hs), Pt / (2 * ht)
    q = Q / 4.0
    return {(0, 0): -a - b + q, (1, 0): a - b + q, (0, 1): -a + b + q, (1, 1): a + b + q}


def _bc_rows(grid: OperatorGrid):
    """Boundary rows as (rows at s=0 acting on node i=0, rows at s=S on (Ns-1, Ns))."""
    n, hs = grid.n, grid.hs
    B0 = np.zeros((n, 2 * n))
    for j in range(n):
        B0[j, n + j] = 1.0 / hs
    chiS = float(grid.profile.chi(grid.profile.f(grid.S)))
    rowsS_prev, rowsS = [], []
    for l in range(n - 1):
        for c in (l, n + l):
            r = np.zeros(2 * n)
            r[c] = 1.0 / hs
            rowsS.append(r)
            rowsS_prev.append(np.zeros(2 * n))
    r = np.zeros(2 * n)
    r[n - 1] = 1.0 / hs
    rp = np.zeros(2 * n)
    rp[n - 1] = -1.0 / hs
    rowsS.append(r)
    rowsS_prev.append(rp)
    r = np.zeros(2 * n)
    r[2 * n - 1] = 1.0 / (chiS * hs)
    rowsS.append(r)
    rowsS_prev.append(np.zeros(2 * n))
    return B0, np.array(rowsS_prev), np.array(rowsS)


def _coupling(grid: OperatorGrid, t):
    if grid.hessian is None:
        return grid.k * np.eye(grid.n - 1)
    M = np.asarray(grid.hessian(t), dtype=float).reshape(grid.n - 1, grid.n - 1)
    if not np.all(np.isfinite(M)):
        raise AssemblyError("coefficient callback returned non-finite values")
    return M


@dataclass
class DiscreteOperator:
    grid: OperatorGrid
    matrix: sp.csr_matrix

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, z):
        return self.matrix @ np.asarray(z).ravel()

    def field_index(self, i, j, c):
        return (i * self.grid.Nt + j) * 2 * self.grid.n + c


def assemble_operator(grid: OperatorGrid) -> DiscreteOperator:
    """Sparse matrix of the box-scheme discretization with boundary rows."""
    n, Ns, Nt = grid.n, grid.Ns, grid.Nt
    m = 2 * n
    hs, ht = grid.hs, grid.ht
    s_mid = (np.arange(Ns) + 0.5) * hs
    t_mid = (np.arange(Nt) + 0.5) * ht
    T = grid.twist()

    def idx(i, j):
        return (i * Nt + j) * m

    rows, cols, vals = [], [], []

    def put(r0, c0, block):
        rr, cc = np.nonzero(block)
        rows.append(r0 + rr)
        cols.append(c0 + cc)
        vals.append(block[rr, cc])

    const_t = grid.hessian is None
    row = 0
    for i in range(Ns):
        if const_t:
            K = _corners(*_cell_matrices(grid, s_mid[i], _coupling(grid, None)), hs, ht)
        for j in range(Nt):
            if not const_t:
                K = _corners(*_cell_matrices(grid, s_mid[i], _coupling(grid, t_mid[j])), hs, ht)
            jn = j + 1
            wrap = jn == Nt
            for (di, dj), B in K.items():
                jj = jn if dj else j
                if dj and wrap:
                    jj = 0
                    B = B @ T
                put(row, idx(i + di, jj), B)
            row += m
    B0, BSp, BS = _bc_rows(grid)
    for j in range(Nt):
        put(row, idx(0, j), B0)
        row += B0.shape[0]
    for j in range(Nt):
        put(row, idx(Ns - 1, j), BSp)
        put(row, idx(Ns, j), BS)
        row += BS.shape[0]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(row, grid.size))
    return DiscreteOperator(grid, A)


# ---------------------------------------------------------------------------
# Bloch blocks for t-invariant coefficients


class _BlockFactory:
    """Cell corner matrices cached once; builds the 1D Fourier blocks."""

    def __init__(self, grid: OperatorGrid):
        self.grid = grid
        Ns, hs, ht = grid.Ns, grid.hs, grid.ht
        s_mid = (np.arange(Ns) + 0.5) * hs
        M = _coupling(grid, None)
        K = [_corners(*_cell_matrices(grid, s, M), hs, ht) for s in s_mid]
        self.K = {key: np.array([k[key] for k in K]) for key in K[0]}
        self.bc = _bc_rows(grid)

    def pair(self, kind):
        n = self.grid.n
        if kind == "axial":
            return (n - 1, 2 * n - 1), (2 * n - 2, 2 * n - 1)
        return (0, n), (0, n - 1)

    def matrix(self, kind, phase) -> np.ndarray:
        """Dense block (2Ns+3, 2Ns+2), columns interleaved (a_0, b_0, a_1, b_1, ...).

        `phase` multiplies the value at t + ht relative to t.
        """
        grid = self.grid
        Ns, n = grid.Ns, grid.n
        comps, eqs = self.pair(kind)
        ci, ei = np.array(comps), np.array(eqs)
        left = (self.K[(0, 0)] + phase * self.K[(0, 1)])[:, ei][:, :, ci]
        right = (self.K[(1, 0)] + phase * self.K[(1, 1)])[:, ei][:, :, ci]
        A = np.zeros((2 * Ns + 3, 2 * (Ns + 1)), dtype=complex)
        i = np.arange(Ns)
        for r in range(2):
            for c in range(2):
                A[2 * i + r, 2 * i + c] = left[:, r, c]
                A[2 * i + r, 2 * i + 2 + c] = right[:, r, c]
        B0, BSp, BS = self.bc
        row = 2 * Ns
        A[row, 0:2] = B0[comps[1] - n, ci]
        row += 1
        for k in range(BS.shape[0]):
            if np.any(BS[k, ci]) or np.any(BSp[k, ci]):
                A[row, 2 * (Ns - 1) : 2 * Ns] = BSp[k, ci]
                A[row, 2 * Ns : 2 * Ns + 2] = BS[k, ci]
                row += 1
        if row != A.shape[0]:
            raise AssemblyError("unexpected boundary row count in block")
        return A


def _gram_band(A, bw=3):
    """Upper band storage of A^H A for eig_banded."""
    G = A.conj().T @ A
    m = G.shape[0]
    band = np.zeros((bw + 1, m), dtype=complex)
    for d in range(bw + 1):
        band[bw - d, d:] = np.diagonal(G, d)
    return band


def _bloch_modes(grid: OperatorGrid):
    """(kind, direction index, mode, kappa, eigvec of O) covering the operator."""
    n, Nt = grid.n, grid.Nt
    out = []
    if n > 1:
        T, Z = sla.schur(grid.O.astype(complex), output="complex")
        thetas = np.angle(np.diag(T))
        for c in range(n - 1):
            for mode in range(Nt):
                out.append(("normal", c, mode, (thetas[c] + 2 * np.pi * mode) / Nt, Z[:, c]))
    for mode in range(Nt):
        out.append(("axial", 0, mode, 2 * np.pi * mode / Nt, None))
    return out


@dataclass
class KernelReport:
    singular_values: np.ndarray
    dimension: int
    gap_ratio: float
    threshold: float
    grid: str
    method: str
    kernel_vector: np.ndarray | None = None
    kernel_block: tuple | None = None
    extra: dict = field(default_factory=dict)

    def correlation_with(self, other) -> float:
        v = self.kernel_vector
        w = np.asarray(other)
        return float(min(1.0, abs(np.vdot(w, v)) / (np.linalg.norm(v) * np.linalg.norm(w))))


def _finish(svals, threshold_ratio, m):
    svals = np.sort(np.asarray(svals))[:m]
    thr = threshold_ratio * float(np.median(svals))
    d = int(np.sum(svals < thr))
    if d == 0:
        gap = float(svals[0] / thr)
    elif d < len(svals):
        gap = float(svals[d] / max(svals[d - 1], np.finfo(float).tiny))
    else:
        gap = float("nan")
    return svals, d, gap, thr


def kernel_dimension(op, threshold_ratio: float = 1e-6, m: int = 8,
                     method: str = "auto") -> KernelReport:
    """Numerical kernel dimension from the m smallest singular values.

    method: "bloch" (t-Fourier block decomposition, needs t-invariant
    coefficients), "dense" or "sparse" on the assembled matrix, or "auto".
    """
    if not (0 < threshold_ratio < 1):
        raise InvalidArgumentError("threshold_ratio must lie in (0, 1)")
    if m < 4:
        raise InvalidArgumentError("need at least 4 singular values")
    grid = op.grid if isinstance(op, DiscreteOperator) else op
    if method == "auto":
        method = "bloch" if grid.hessian is None else ("dense" if grid.size <= 4000 else "sparse")
    if method == "bloch":
        if grid.hessian is not None:
            raise InvalidArgumentError("the Bloch route needs t-invariant coefficients")
        return _kernel_bloch(grid, threshold_ratio, m)
    A = op.matrix if isinstance(op, DiscreteOperator) else assemble_operator(grid).matrix
    if method == "dense":
        _, s, Vh = np.linalg.svd(A.toarray(), full_matrices=False)
        order = np.argsort(s)
        svals, d, gap, thr = _finish(s, threshold_ratio, m)
        return KernelReport(svals, d, gap, thr, grid.describe(), "dense", Vh[order[0]].conj())
    if method == "sparse":
        AtA = (A.T @ A).tocsc()
        scale = float(abs(AtA).max())
        try:
            w, V = eigsh(AtA, k=m, sigma=-1e-10 * scale, which="LM")
        except Exception as exc:  # ARPACK or factorization breakdown
            raise NumericalFailure(f"sparse eigensolver failed: {exc}") from exc
        order = np.argsort(w)
        s = np.sqrt(np.clip(w[order], 0.0, None))
        svals, d, gap, thr = _finish(s, threshold_ratio, m)
        return KernelReport(svals, d, gap, thr, grid.describe(), "sparse", V[:, order[0]])
    raise InvalidArgumentError(f"unknown method {method!r}")


def _kernel_bloch(grid: OperatorGrid, threshold_ratio, m):
    fac = _BlockFactory(grid)
    modes = _bloch_modes(grid)
    screen = {}
    # screen each distinct block by the smallest eigenvalues of its banded Gram matrix;
    # conjugate phases give conjugate blocks with equal singular values
    for kind, c, mode, kappa, _ in modes:
        key = (kind, round(float(abs(np.angle(np.exp(1j * kappa)))), 13))
        if key in screen:
            continue
        A = fac.matrix(kind, np.exp(1j * kappa))
        w = sla.eig_banded(_gram_band(A), eigvals_only=True, select="i",
                           select_range=(0, min(m, A.shape[1]) - 1), check_finite=False)
        screen[key] = (np.sqrt(np.clip(w, 0.0, None)), kappa)
    # confirm the most singular blocks with a dense SVD
    ranked = sorted(screen, key=lambda k: (screen[k][0][0], k))
    exact = {}
    for key in ranked[: 2 * m]:
        exact[key] = np.sort(sla.svdvals(fac.matrix(key[0], np.exp(1j * screen[key][1]))))[:m]
    found = []
    for kind, c, mode, kappa, _ in modes:
        key = (kind, round(float(abs(np.angle(np.exp(1j * kappa)))), 13))
        vals = exact.get(key, screen[key][0])
        found.extend((float(v), (kind, c, mode), kappa) for v in vals)
    found.sort(key=lambda x: (x[0], x[1]))
    svals, d, gap, thr = _finish([x[0] for x in found], threshold_ratio, m)
    _, label, kappa = found[0]
    vec = _reconstruct(grid, fac, label, kappa)
    return KernelReport(svals, d, gap, thr, grid.describe(), "bloch", vec, label,
                        {"distinct_blocks": len(screen), "confirmed": len(exact)})


def _reconstruct(grid: OperatorGrid, fac, label, kappa):
    """Full-grid field of the smallest right singular vector of one Bloch block."""
    n, Ns, Nt = grid.n, grid.Ns, grid.Nt
    kind, c, mode = label
    A = fac.matrix(kind, np.exp(1j * kappa))
    _, _, Vh = np.linalg.svd(A)
    v = Vh[-1].conj().reshape(Ns + 1, 2)
    ph = np.exp(1j * kappa * np.arange(Nt))
    z = np.zeros((Ns + 1, Nt, 2 * n), dtype=complex)
    if kind == "axial":
        z[:, :, n - 1] = v[:, 0:1] * ph
        z[:, :, 2 * n - 1] = v[:, 1:2] * ph
    else:
        _, Z = sla.schur(grid.O.astype(complex), output="complex")
        z[:, :, : n - 1] = (v[:, 0:1] * ph)[..., None] * Z[:, c]
        z[:, :, n : 2 * n - 1] = (v[:, 1:2] * ph)[..., None] * Z[:, c]
    z = z.ravel()
    # fix the global phase so the largest entry is real
    z = z * np.exp(-1j * np.angle(z[np.argmax(np.abs(z))]))
    if np.allclose(z.imag, 0.0, atol=1e-12 * np.abs(z).max()):
        z = z.real
    return z


def constant_axial_field(grid: OperatorGrid) -> np.ndarray:
    """The analytic kernel element a_n = 1, everything else 0."""
    z = np.zeros((grid.Ns + 1, grid.Nt, 2 * grid.n))
    z[:, :, grid.n - 1] = 1.0
    return z.ravel()


# ---------------------------------------------------------------------------
# Tilde system


def tilde_transform(grid: OperatorGrid, z, rho=None):
    """(a_l, b_l, a_n, b_n) -> (rho a_l, rho b_l, a_n, b_n / chi o f)."""
    n = grid.n
    z = np.asarray(z, dtype=float).reshape(grid.Ns + 1, grid.Nt, 2 * n).copy()
    if rho is None:
        rho = rho_weight(grid.profile, grid.s)
    chi = grid.profile.chi(grid.profile.f(grid.s))
    z[:, :, : n - 1] *= rho[:, None, None]
    z[:, :, n : 2 * n - 1] *= rho[:, None, None]
    z[:, :, 2 * n - 1] /= chi[:, None]
    return z.ravel()


def tilde_cell_residual(grid: OperatorGrid, zt):
    """Cell residuals of the transformed system with the same box stencil.

    Equations: d_s a~_l + d_t b~_l + g a~_l, d_s b~_l - d_t a~_l,
    d_s b~_n - d_t a~_n, d_s a~_n + d_t b~_n, with g = -rho'/rho - k f.
    """
    n, Ns, Nt = grid.n, grid.Ns, grid.Nt
    hs, ht = grid.hs, grid.ht
    z = np.asarray(zt).reshape(Ns + 1, Nt, 2 * n)
    zn = np.roll(z, -1, axis=1)
    zn[:, -1] = z[:, 0] @ grid.twist().T
    Ds = 0.5 * ((z[1:] - z[:-1]) + (zn[1:] - zn[:-1])) / hs
    Dt = 0.5 * ((zn[:-1] - z[:-1]) + (zn[1:] - z[1:])) / ht
    Av = 0.25 * (z[:-1] + z[1:] + zn[:-1] + zn[1:])
    s_mid = (np.arange(Ns) + 0.5) * hs
    f, c2, chi, dchi = grid.coefficients(s_mid)
    g = -c2 - grid.k * f
    out = np.zeros((Ns, Nt, 2 * n))
    for l in range(n - 1):
        out[:, :, l] = Ds[..., l] + Dt[..., n + l] + g[:, None] * Av[..., l]
        out[:, :, n - 1 + l] = Ds[..., n + l] - Dt[..., l]
    out[:, :, 2 * n - 2] = Ds[..., 2 * n - 1] - Dt[..., n - 1]
    out[:, :, 2 * n - 1] = Ds[..., n - 1] + Dt[..., 2 * n - 1]
    return out


def cell_residual(op: DiscreteOperator, z):
    """Interior (cell) part of op @ z reshaped to (Ns, Nt, 2n)."""
    g = op.grid
    r = op.apply(z)
    return r[: g.Ns * g.Nt * 2 * g.n].reshape(g.Ns, g.Nt, 2 * g.n)


def export_matrix_market(op: DiscreteOperator, path) -> None:
    from scipy.io import mmwrite

    mmwrite(str(path), op.matrix, comment=op.grid.describe())


def block_singular_vector(grid: OperatorGrid, kind: str = "normal", mode: int = 0, c: int = 0):
    """Smallest singular pair of one Bloch block, lifted to the full grid."""
    fac = _BlockFactory(grid)
    for kd, cc, md, kappa, _ in _bloch_modes(grid):
        if (kd, cc, md) == (kind, c, mode):
            A = fac.matrix(kind, np.exp(1j * kappa))
            sigma = float(sla.svdvals(A)[-1])
            return sigma, _reconstruct(grid, fac, (kind, c, mode), kappa)
    raise InvalidArgumentError("no such block")


def normal_b_energy(grid: OperatorGrid, z, rho=None) -> np.ndarray:
    """|b~'|^2 on the node grid, shape (Ns+1, Nt)."""
    n = grid.n
    zt = np.asarray(tilde_transform(grid, np.real(z), rho) + 1j * tilde_transform(grid, np.imag(z), rho)
                    if np.iscomplexobj(z) else tilde_transform(grid, z, rho))
    zt = zt.reshape(grid.Ns + 1, grid.Nt, 2 * n)
    return np.sum(np.abs(zt[:, :, n : 2 * n - 1]) ** 2, axis=-1)


def max_principle_check(grid: OperatorGrid, z, rho=None):
    """Row index in s where |b~'|^2 peaks, and its relative size."""
    e = normal_b_energy(grid, z, rho)
    i, _ = np.unravel_index(np.argmax(e), e.shape)
    return int(i), float(e.max() / max(np.sum(np.abs(np.asarray(z)) ** 2), 1e-300))
