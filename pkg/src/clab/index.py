"""Maslov and Conley-Zehnder indices, the Fredholm index formula.

Conventions: R^{2n} with coordinates (x, y), omega0(u, v) = x_u.y_v - y_u.x_v,
J0 = [[0, -I], [I, 0]]. A Lagrangian frame Z = [X; Y] has the unitary
representative (X + iY)(Z^T Z)^{-1/2}.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateEndpointError,
    InvalidArgumentError,
    InvalidCurveError,
    PreconditionViolation,
    ResolutionError,
)
from .riemannian import ClosedCurve, MetricField, _rk4_geodesic


def j0(n: int) -> np.ndarray:
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, -I], [I, Z]])


def rotation_path(theta: float, samples: int = 401, n: int = 1) -> "SymplecticPath":
    """Psi(t) = exp(theta t J0)."""
    t = np.linspace(0.0, 1.0, samples)
    J = j0(n)
    return SymplecticPath(t, np.array([sla.expm(theta * s * J) for s in t]))


def hamiltonian_path(S, samples: int = 401) -> "SymplecticPath":
    """Psi(t) = exp(t J0 S) for a constant symmetric S."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0] // 2
    A = j0(n) @ S
    t = np.linspace(0.0, 1.0, samples)
    return SymplecticPath(t, np.array([sla.expm(s * A) for s in t]))


def _unitary(Z):
    n2, n = Z.shape[-2:]
    m = n2 // 2
    G = np.swapaxes(Z, -1, -2) @ Z
    w, V = np.linalg.eigh(G)
    R = V @ (np.swapaxes(V, -1, -2) / np.sqrt(w)[..., :, None])
    return (Z[..., :m, :] + 1j * Z[..., m:, :]) @ R


@dataclass
class LagrangianLoop:
    t: np.ndarray
    frames: np.ndarray     # (T, 2n, n)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.frames = np.asarray(self.frames, dtype=float)
        T, n2, n = self.frames.shape
        if n2 != 2 * n:
            raise InvalidArgumentError("frames must have shape (T, 2n, n)")
        if len(self.t) != T:
            raise InvalidArgumentError("time grid and frames disagree")
        J = j0(n)
        lag = np.swapaxes(self.frames, 1, 2) @ J @ self.frames
        scale = np.linalg.norm(self.frames, axis=(1, 2)) ** 2
        if np.max(np.abs(lag).max(axis=(1, 2)) / scale) > 1e-10:
            raise InvalidArgumentError("frame is not Lagrangian")
        P0, P1 = self.projector(0), self.projector(-1)
        if np.max(np.abs(P0 - P1)) > 1e-8:
            raise InvalidArgumentError("loop does not close up")

    @property
    def n(self):
        return self.frames.shape[2]

    def projector(self, i):
        Q, _ = np.linalg.qr(self.frames[i])
        return Q @ Q.T

    def concatenate(self, other: "LagrangianLoop") -> "LagrangianLoop":
        t = np.concatenate([0.5 * self.t, 0.5 + 0.5 * other.t[1:]])
        return LagrangianLoop(t, np.concatenate([self.frames, other.frames[1:]]))


def det2_phases(frames) -> np.ndarray:
    """Unwrapped arg det(U)^2 along a sequence of Lagrangian frames."""
    U = _unitary(np.asarray(frames, dtype=float))
    d = np.linalg.det(U) ** 2
    steps = np.angle(d[1:] / d[:-1])
    return np.concatenate([[np.angle(d[0])], np.angle(d[0]) + np.cumsum(steps)]), steps


def maslov_loop(loop: LagrangianLoop, max_jump: float = np.pi / 4) -> int:
    """Winding number of det^2 of the unitary representative."""
    phases, steps = det2_phases(loop.frames)
    if steps.size and np.max(np.abs(steps)) >= max_jump:
        raise ResolutionError("consecutive frames rotate by more than the resolution limit")
    w = (phases[-1] - phases[0]) / (2 * np.pi)
    return int(np.round(w))


@dataclass
class SymplecticPath:
    t: np.ndarray
    samples: np.ndarray    # (T, 2n, 2n)
    tol: float = 1e-8

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 3 or self.samples.shape[1] != self.samples.shape[2] \
                or self.samples.shape[1] % 2:
            raise InvalidArgumentError("samples must have shape (T, 2n, 2n)")
        if len(self.t) != len(self.samples) or len(self.t) < 3:
            raise InvalidArgumentError("need at least 3 samples matching the time grid")
        if np.any(np.diff(self.t) <= 0):
            raise InvalidArgumentError("time grid must increase")
        if not np.allclose(self.samples[0], np.eye(self.dim), atol=self.tol):
            raise InvalidArgumentError("path must start at the identity")
        d = self.symplectic_defect()
        if d > self.tol:
            raise InvalidArgumentError(f"samples are not symplectic (defect {d:.2e})")

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def n(self):
        return self.dim // 2

    def symplectic_defect(self) -> float:
        J = j0(self.n)
        P = self.samples
        return float(np.max(np.abs(np.swapaxes(P, 1, 2) @ J @ P - J)))

    @property
    def nondegenerate(self) -> bool:
        M = self.samples[-1] - np.eye(self.dim)
        s = np.linalg.svd(M, compute_uv=False)
        return bool(s[-1] > 1e-9 * max(1.0, s[0]))

    def direct_sum(self, other: "SymplecticPath") -> "SymplecticPath":
        if not np.allclose(self.t, other.t):
            raise InvalidArgumentError("time grids differ")
        n, m = self.n, other.n
        out = np.zeros((len(self.t), 2 * (n + m), 2 * (n + m)))
        ia = np.r_[0:n, n + m : 2 * n + m]
        ib = np.r_[n : n + m, 2 * n + m : 2 * (n + m)]
        out[:, ia[:, None], ia] = self.samples
        out[:, ib[:, None], ib] = other.samples
        return SymplecticPath(self.t, out, max(self.tol, other.tol))

    def restrict(self, idx) -> "SymplecticPath":
        """Sub-path on coordinates (x_i, y_i) for i in idx."""
        idx = np.asarray(idx)
        full = np.concatenate([idx, idx + self.n])
        return SymplecticPath(self.t, self.samples[:, full[:, None], full], self.tol)


def _graph_frames(Psi):
    """Frames of Lambda(t) = {(C z, Psi z)}, C = diag(I, -I), in (x, y) ordering."""
    T, m, _ = Psi.shape
    n = m // 2
    C = np.diag(np.r_[np.ones(n), -np.ones(n)])
    top = np.broadcast_to(C, Psi.shape)
    # R^{2m} = (x1, y1, x2, y2) -> reorder to (x1, x2, y1, y2)
    Z = np.concatenate([top, Psi], axis=1)
    order = np.r_[0:n, m : m + n, n:m, m + n : 2 * m]
    return Z[:, order, :]


def conley_zehnder(path: SymplecticPath, max_jump: float = np.pi / 2,
                   _perturb: bool = True) -> int:
    """Robbin-Salamon index of the graph path relative to the diagonal.

    The crossing at t = 0 contributes half the signature, read off from the
    eigenphases at the first sample after 0; later crossings are counted by
    the net winding of the eigenphases through 1. A degenerate crossing at
    t = 0 is resolved by the rotation exp(eps t J0), eps = 1e-6.
    """
    if not path.nondegenerate:
        raise DegenerateEndpointError("det(Psi(1) - Id) = 0")
    P = path.samples
    UL = _unitary(_graph_frames(P))
    UD = _unitary(_graph_frames(np.broadcast_to(np.eye(path.dim), P.shape)))[0]
    A = UD.conj().T @ UL
    W = A @ np.swapaxes(A, 1, 2)
    ph = np.angle(np.linalg.eigvals(W))               # (T, 2n)
    det = np.linalg.det(W)
    steps = np.angle(det[2:] / det[1:-1])
    if steps.size and np.max(np.abs(steps)) >= max_jump:
        raise ResolutionError("path sampled too coarsely for the phase count")
    p1 = ph[1]
    if np.min(np.abs(p1)) < 1e-12:
        if _perturb:
            return conley_zehnder(perturbed(path), max_jump, _perturb=False)
        raise DegenerateEndpointError("degenerate crossing at t = 0 survives the perturbation")
    half = 0.5 * (np.sum(p1 > 0) - np.sum(p1 < 0))
    pos = np.mod(ph, 2 * np.pi)
    flow = (np.sum(steps) - (np.sum(pos[-1]) - np.sum(pos[1]))) / (2 * np.pi)
    # with this orientation exp(pi t J0) in n = 1 gives +1
    return int(np.round(half + flow))


def perturbed(path: SymplecticPath, eps: float = 1e-6) -> SymplecticPath:
    """exp(eps t J0) Psi(t), used to resolve degenerate crossings."""
    J = j0(path.n)
    R = np.array([sla.expm(eps * s * J) for s in path.t / path.t[-1]])
    return SymplecticPath(path.t, R @ path.samples, path.tol)


@dataclass
class IndexData:
    n: int
    euler: int
    c1: int = 0
    mu: int = 0
    cz_plus: list = field(default_factory=list)
    cz_minus: list = field(default_factory=list)
    punctures: int | None = None

    def __post_init__(self):
        k = len(self.cz_plus) + len(self.cz_minus)
        if self.punctures is None:
            self.punctures = k
        if self.punctures != k:
            raise InvalidArgumentError("puncture count must equal the number of asymptotic orbits")


def fredholm_index(data: IndexData) -> int:
    return int(data.n * data.euler + 2 * data.c1 + data.mu + sum(data.cz_plus)
               - sum(data.cz_minus) + data.punctures)


def maslov_transfer(mu_tau: int, transfer: int) -> int:
    return int(mu_tau) + int(transfer)


# ---------------------------------------------------------------------------
# Linearized cogeodesic flow


def _gamma(Gi, D):
    A = D + np.swapaxes(D, -3, -2) - np.moveaxis(D, -3, -1)
    return 0.5 * np.einsum("kl,ijl->kij", Gi, A)


def _flow_rhs(metric: MetricField, q, p, E, Y):
    """Cogeodesic vector field, its linearization, parallel frame transport."""
    G = metric.eval(q)
    Gi = np.linalg.inv(G)
    D1 = metric.d1(q)                  # (l, i, j)
    D2 = metric.d2(q)                  # (l, m, i, j)
    v = Gi @ p
    dq = v
    dp = 0.5 * np.einsum("i,lij,j->l", v, D1, v)
    Dv = np.einsum("lij,j->il", D1, v)             # column m = dg/dq_m v
    A_qq = -Gi @ Dv
    A_qp = Gi
    GiDv = Gi @ Dv
    A_pp = np.einsum("lij,j,ik->lk", D1, v, Gi)
    A_pq = 0.5 * np.einsum("i,lmij,j->lm", v, D2, v) - np.einsum("i,lij,jm->lm", v, D1, GiDv)
    DX = np.block([[A_qq, A_qp], [A_pq, A_pp]])
    Gam = _gamma(Gi, D1)
    dE = -np.einsum("kij,i,jc->kc", Gam, v, E)
    return dq, dp, dE, DX @ Y, Gam


def _frame_map(metric, q, p, E):
    """(x, y) -> vertical g E x + horizontal lift of E y, as a (2n, 2n) map to (dq, dp)."""
    G = metric.eval(q)
    Gam = _gamma(np.linalg.inv(G), metric.d1(q))
    Gp = np.einsum("lki,l->ki", Gam, p)
    n = len(q)
    Z = np.zeros((n, n))
    return np.block([[Z, E], [G @ E, Gp @ E]])


@dataclass
class CogeodesicPath:
    path: SymplecticPath
    q: np.ndarray
    p: np.ndarray
    frames: np.ndarray
    period: float
    drift: float

    def normal_block(self) -> SymplecticPath:
        n = self.path.n
        return self.path.restrict(np.arange(1, n))

    def tangent_block(self) -> SymplecticPath:
        return self.path.restrict(np.array([0]))


def linearized_cogeodesic_path(metric: MetricField, geodesic: ClosedCurve,
                               steps: int = 800, samples: int = 401,
                               geodesic_tol: float = 1e-6) -> CogeodesicPath:
    """Linearized cogeodesic flow along a closed geodesic in the parallel frame.

    The orbit has |p| = 1, so its period is the length of the geodesic. The
    path is stored against normalized time t / length.
    """
    n = metric.dim
    if (steps % (samples - 1)) != 0:
        raise InvalidArgumentError("steps must be a multiple of samples - 1")
    qf, dqf = geodesic.spline()
    q0 = qf(0.0)
    v0 = dqf(0.0)
    G0 = metric.eval(q0)
    v0 = v0 / np.sqrt(v0 @ G0 @ v0)
    L = geodesic.length
    q1, v1 = _rk4_geodesic(metric, q0, v0 * L, 1.0, steps)
    err = np.linalg.norm(q1 - q0 - geodesic.beta) + np.linalg.norm(v1 / L - v0)
    if err > geodesic_tol:
        raise InvalidCurveError(f"curve is not a closed geodesic (defect {err:.2e})")
    # orthonormal frame with the tangent first
    E = np.zeros((n, n))
    for c in range(n):
        w = v0 if c == 0 else _next_basis(E[:, :c], G0)
        for j in range(c):
            w = w - (E[:, j] @ G0 @ w) * E[:, j]
        E[:, c] = w / np.sqrt(w @ G0 @ w)
    p = G0 @ v0
    q = q0.copy()
    Y = np.eye(2 * n)
    h = L / steps
    every = steps // (samples - 1)
    Phi0 = _frame_map(metric, q, p, E)
    out = [np.eye(2 * n)]
    qs, ps, Es = [q.copy()], [p.copy()], [E.copy()]
    for k in range(steps):
        k1 = _flow_rhs(metric, q, p, E, Y)
        k2 = _flow_rhs(metric, q + 0.5 * h * k1[0], p + 0.5 * h * k1[1], E + 0.5 * h * k1[2], Y + 0.5 * h * k1[3])
        k3 = _flow_rhs(metric, q + 0.5 * h * k2[0], p + 0.5 * h * k2[1], E + 0.5 * h * k2[2], Y + 0.5 * h * k2[3])
        k4 = _flow_rhs(metric, q + h * k3[0], p + h * k3[1], E + h * k3[2], Y + h * k3[3])
        q = q + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p = p + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        E = E + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        Y = Y + h / 6 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        if (k + 1) % every == 0:
            Phi = _frame_map(metric, q, p, E)
            out.append(np.linalg.solve(Phi, Y @ Phi0))
            qs.append(q.copy())
            ps.append(p.copy())
            Es.append(E.copy())
    t = np.linspace(0.0, 1.0, samples)
    P = np.array(out)
    J = j0(n)
    drift = float(np.max(np.abs(np.swapaxes(P, 1, 2) @ J @ P - J)))
    if drift > 1e-6:
        raise PreconditionViolation(f"symplecticity drift {drift:.2e} exceeds 1e-6")
    return CogeodesicPath(SymplecticPath(t, P, tol=1e-6), np.array(qs), np.array(ps),
                          np.array(Es), L, drift)


def _next_basis(E, G):
    """A coordinate vector least aligned with the span of E."""
    n = G.shape[0]
    best, score = None, np.inf
    for i in range(n):
        e = np.eye(n)[:, i]
        s = np.sum((E.T @ G @ e) ** 2) / (e @ G @ e)
        if s < score - 1e-12:
            best, score = e, s
    return best


# ---------------------------------------------------------------------------
# CSV


def save_path_csv(path: SymplecticPath, filename) -> None:
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        for t, M in zip(path.t, path.samples):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in M.ravel()])


def load_path_csv(filename, tol: float = 1e-8) -> SymplecticPath:
    rows = np.loadtxt(filename, delimiter=",", ndmin=2)
    m = int(round(np.sqrt(rows.shape[1] - 1)))
    if m * m != rows.shape[1] - 1:
        raise InvalidArgumentError("row length is not 1 + (2n)^2")
    return SymplecticPath(rows[:, 0], rows[:, 1:].reshape(-1, m, m), tol)


def load_loop_csv(filename, n: int) -> LagrangianLoop:
    rows = np.loadtxt(filename, delimiter=",", ndmin=2)
    if rows.shape[1] != 1 + 2 * n * n:
        raise InvalidArgumentError("row length is not 1 + 2n^2")
    return LagrangianLoop(rows[:, 0], rows[:, 1:].reshape(-1, 2 * n, n))
