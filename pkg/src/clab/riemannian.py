"""Periodic Riemannian metrics on the torus R^n/Z^n.

Geodesics, parallel transport and Fermi charts along closed geodesics.
Metrics act on arrays of points of shape (..., n) and return (..., n, n).
Derivative arrays use the layout d1[..., l, i, j] = d_l g_ij and
d2[..., l, m, i, j] = d_l d_m g_ij.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .errors import (
    InvalidArgumentError,
    InvalidCurveError,
    InvalidMetricError,
    TubeTooWideError,
)

TWO_PI = 2.0 * np.pi


def _as_points(q, n):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != n:
        raise InvalidArgumentError(f"expected points with last axis {n}, got {q.shape}")
    return q


class MetricField:
    """Smooth periodic metric tensor. Subclasses implement `eval`.

    `d1`/`d2` default to centered finite differences; subclasses with
    closed forms override them and set `derivative_source`.
    """

    derivative_source = "finite-difference"
    fd_step = 1e-4

    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidArgumentError("dimension must be >= 1")
        self.dim = int(dim)

    def eval(self, q):
        raise NotImplementedError

    def __call__(self, q):
        return self.eval(q)

    def d1(self, q):
        q = _as_points(q, self.dim)
        h = self.fd_step
        out = np.empty(q.shape[:-1] + (self.dim, self.dim, self.dim))
        for l in range(self.dim):
            e = np.zeros(self.dim)
            e[l] = h
            # fourth order centered stencil
            out[..., l, :, :] = (
                -self.eval(q + 2 * e) + 8 * self.eval(q + e)
                - 8 * self.eval(q - e) + self.eval(q - 2 * e)
            ) / (12 * h)
        return out

    def d2(self, q):
        q = _as_points(q, self.dim)
        h = self.fd_step
        n = self.dim
        out = np.empty(q.shape[:-1] + (n, n, n, n))
        for m in range(n):
            e = np.zeros(n)
            e[m] = h
            out[..., :, m, :, :] = (
                -self.d1(q + 2 * e) + 8 * self.d1(q + e)
                - 8 * self.d1(q - e) + self.d1(q - 2 * e)
            ) / (12 * h)
        # symmetrize in (l, m)
        return 0.5 * (out + np.swapaxes(out, -4, -3))

    def inverse(self, q):
        return np.linalg.inv(self.eval(q))

    def check_positive(self, q):
        """Raise InvalidMetricError unless g(q) is SPD at every sample."""
        g = self.eval(q)
        if not np.all(np.isfinite(g)):
            raise InvalidMetricError("metric sample is not finite")
        if not np.allclose(g, np.swapaxes(g, -1, -2), atol=1e-12, rtol=1e-12):
            raise InvalidMetricError("metric sample is not symmetric")
        if np.min(np.linalg.eigvalsh(g)) <= 0.0:
            raise InvalidMetricError("metric sample is not positive definite")
        return g

    def describe(self) -> str:
        return f"{type(self).__name__}(dim={self.dim})"


class FlatMetric(MetricField):
    """Constant metric, identity by default."""

    derivative_source = "analytic"

    def __init__(self, dim: int, matrix=None):
        super().__init__(dim)
        if matrix is None:
            matrix = np.eye(dim)
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (dim, dim):
            raise InvalidArgumentError("matrix shape does not match dimension")
        self.matrix = matrix

    def eval(self, q):
        q = _as_points(q, self.dim)
        return np.broadcast_to(self.matrix, q.shape[:-1] + (self.dim, self.dim)).copy()

    def d1(self, q):
        q = _as_points(q, self.dim)
        return np.zeros(q.shape[:-1] + (self.dim,) * 3)

    def d2(self, q):
        q = _as_points(q, self.dim)
        return np.zeros(q.shape[:-1] + (self.dim,) * 4)

    @property
    def is_constant(self):
        return True

    def describe(self):
        if np.allclose(self.matrix, np.eye(self.dim)):
            return f"flat(dim={self.dim})"
        return f"flat(dim={self.dim}, matrix={self.matrix.tolist()})"


class FourierScalar:
    """Real trigonometric polynomial sum a cos(2 pi k.q) + b sin(2 pi k.q)."""

    def __init__(self, dim: int, modes: Sequence[tuple] = ()):
        self.dim = dim
        ks, a, b = [], [], []
        for k, ak, bk in modes:
            k = np.asarray(k, dtype=float)
            if k.shape != (dim,):
                raise InvalidArgumentError("Fourier wave vector has wrong length")
            ks.append(k)
            a.append(float(ak))
            b.append(float(bk))
        self.k = np.array(ks).reshape(-1, dim)
        self.a = np.array(a)
        self.b = np.array(b)

    @property
    def modes(self):
        return [(tuple(int(x) for x in k), a, b) for k, a, b in zip(self.k, self.a, self.b)]

    def _phase(self, q):
        return TWO_PI * (q @ self.k.T)

    def value(self, q):
        ph = self._phase(q)
        return np.cos(ph) @ self.a + np.sin(ph) @ self.b

    def grad(self, q):
        ph = self._phase(q)
        w = -np.sin(ph) * self.a + np.cos(ph) * self.b
        return TWO_PI * (w @ self.k)

    def hess(self, q):
        ph = self._phase(q)
        w = -(np.cos(ph) * self.a + np.sin(ph) * self.b)
        kk = np.einsum("mi,mj->mij", self.k, self.k)
        return TWO_PI**2 * np.einsum("...m,mij->...ij", w, kk)

    def amplitude_bound(self):
        return float(np.sum(np.abs(self.a)) + np.sum(np.abs(self.b)))


class ConformalMetric(MetricField):
    """g = exp(2 phi) delta with phi a real Fourier series."""

    derivative_source = "analytic"

    def __init__(self, dim: int, modes: Sequence[tuple]):
        super().__init__(dim)
        self.phi = FourierScalar(dim, modes)

    def eval(self, q):
        q = _as_points(q, self.dim)
        c = np.exp(2.0 * self.phi.value(q))
        return c[..., None, None] * np.eye(self.dim)

    def d1(self, q):
        q = _as_points(q, self.dim)
        c = np.exp(2.0 * self.phi.value(q))
        gp = self.phi.grad(q)
        return (2.0 * c[..., None] * gp)[..., :, None, None] * np.eye(self.dim)

    def d2(self, q):
        q = _as_points(q, self.dim)
        c = np.exp(2.0 * self.phi.value(q))
        gp = self.phi.grad(q)
        H = self.phi.hess(q)
        s = c[..., None, None] * (4.0 * gp[..., :, None] * gp[..., None, :] + 2.0 * H)
        return s[..., :, :, None, None] * np.eye(self.dim)

    def describe(self):
        return f"conformal(dim={self.dim}, modes={self.phi.modes})"


def _tube_s(x):
    return np.sin(TWO_PI * x) / TWO_PI


class TubeMetric(MetricField):
    """g = (1 + k |s(x')|^2) delta, s(x) = sin(2 pi x)/(2 pi) componentwise.

    The axis is the coordinate `axis`; x' are the remaining coordinates
    measured from `center`. Near the line {x' = center} this is
    (1 + k |x'|^2) delta + O(|x'|^4).
    """

    derivative_source = "analytic"

    def __init__(self, dim: int, k: float, axis: int = 0, center=None):
        super().__init__(dim)
        if dim < 2:
            raise InvalidArgumentError("tube metric needs dim >= 2")
        self.k = float(k)
        self.axis = int(axis)
        self.normal = [i for i in range(dim) if i != self.axis]
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        self.center = c

    def _x(self, q):
        return q[..., self.normal] - self.center[self.normal]

    def eval(self, q):
        q = _as_points(q, self.dim)
        s = _tube_s(self._x(q))
        c = 1.0 + self.k * np.sum(s * s, axis=-1)
        return c[..., None, None] * np.eye(self.dim)

    def d1(self, q):
        q = _as_points(q, self.dim)
        x = self._x(q)
        s = _tube_s(x)
        ds = np.cos(TWO_PI * x)
        grad = np.zeros(q.shape)
        grad[..., self.normal] = 2.0 * self.k * s * ds
        return grad[..., :, None, None] * np.eye(self.dim)

    def d2(self, q):
        q = _as_points(q, self.dim)
        x = self._x(q)
        s = _tube_s(x)
        ds = np.cos(TWO_PI * x)
        dds = -TWO_PI * np.sin(TWO_PI * x)
        hess = np.zeros(q.shape + (self.dim,))
        diag = 2.0 * self.k * (ds * ds + s * dds)
        for idx, i in enumerate(self.normal):
            hess[..., i, i] = diag[..., idx]
        return hess[..., :, :, None, None] * np.eye(self.dim)

    def describe(self):
        return f"tube(dim={self.dim}, k={self.k}, axis={self.axis})"


class ScaledMetric(MetricField):
    """c2 * base, for a positive constant c2."""

    def __init__(self, base: MetricField, c2: float):
        super().__init__(base.dim)
        if c2 <= 0:
            raise InvalidArgumentError("scale must be positive")
        self.base = base
        self.c2 = float(c2)
        self.derivative_source = base.derivative_source

    def eval(self, q):
        return self.c2 * self.base.eval(q)

    def d1(self, q):
        return self.c2 * self.base.d1(q)

    def d2(self, q):
        return self.c2 * self.base.d2(q)

    @property
    def is_constant(self):
        return getattr(self.base, "is_constant", False)

    def describe(self):
        return f"scaled({self.c2}, {self.base.describe()})"


class GridMetric(MetricField):
    """Metric sampled on a uniform periodic grid, trigonometric interpolation.

    values has shape (m,)*n + (n, n); derivatives are spectral.
    """

    derivative_source = "spectral"

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        n = values.shape[-1]
        if values.ndim != n + 2 or values.shape[-2] != n:
            raise InvalidArgumentError("grid values must have shape (m,)*n + (n, n)")
        m = values.shape[0]
        if any(s != m for s in values.shape[:n]):
            raise InvalidArgumentError("grid must have equal resolution per axis")
        super().__init__(n)
        self.res = m
        self.values = values
        if np.min(np.linalg.eigvalsh(values.reshape(-1, n, n))) <= 0:
            raise InvalidMetricError("grid metric sample is not positive definite")
        coef = np.fft.fftn(values, axes=tuple(range(n))) / m**n
        freqs = np.fft.fftfreq(m, d=1.0 / m)
        grids = np.meshgrid(*([freqs] * n), indexing="ij")
        self._k = np.stack([g.ravel() for g in grids], axis=-1)
        self._c = coef.reshape(-1, n, n)

    def _basis(self, q):
        # reduce mod 1 first so that shifts by lattice vectors are exact
        # whenever the reduction is
        ph = TWO_PI * (np.mod(q, 1.0) @ self._k.T)
        return np.exp(1j * ph)

    # the real part of the complex interpolant is a real trigonometric
    # polynomial that still matches the samples at the nodes
    def eval(self, q):
        q = _as_points(q, self.dim)
        return np.real(np.einsum("...m,mij->...ij", self._basis(q), self._c))

    def d1(self, q):
        q = _as_points(q, self.dim)
        ik = 1j * TWO_PI * self._k
        return np.real(np.einsum("...m,ml,mij->...lij", self._basis(q), ik, self._c))

    def d2(self, q):
        q = _as_points(q, self.dim)
        ik = 1j * TWO_PI * self._k
        kk = np.einsum("ml,mr->mlr", ik, ik)
        return np.real(np.einsum("...m,mlr,mij->...lrij", self._basis(q), kk, self._c))

    def describe(self):
        return f"grid(dim={self.dim}, res={self.res})"


GRID_MAGIC = "CLAB-GRID v1"


def write_grid_file(path, values) -> None:
    values = np.asarray(values, dtype="<f8")
    n = values.shape[-1]
    m = values.shape[0]
    with open(path, "wb") as fh:
        fh.write(f"{GRID_MAGIC} dim={n} res={m}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(values).tobytes(order="C"))


def read_grid_file(path) -> GridMetric:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        payload = fh.read()
    parts = header.split()
    if " ".join(parts[:2]) != GRID_MAGIC or len(parts) != 4:
        raise InvalidArgumentError(f"bad grid header: {header!r}")
    try:
        n = int(parts[2].split("=")[1])
        m = int(parts[3].split("=")[1])
    except (IndexError, ValueError) as exc:
        raise InvalidArgumentError(f"bad grid header: {header!r}") from exc
    shape = (m,) * n + (n, n)
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise InvalidArgumentError("grid payload size does not match header")
    return GridMetric(data.reshape(shape))


def is_constant_metric(metric: MetricField) -> bool:
    return bool(getattr(metric, "is_constant", False))


# ---------------------------------------------------------------------------
# Christoffel symbols and geodesics


def _christoffel(metric: MetricField, q):
    G = metric.eval(q)
    Gi = np.linalg.inv(G)
    D = metric.d1(q)
    # A[i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
    A = D + np.swapaxes(D, -3, -2) - np.moveaxis(D, -3, -1)
    return 0.5 * np.einsum("...kl,...ijl->...kij", Gi, A)


def christoffel(metric: MetricField, q):
    """Christoffel symbols Gamma[..., k, i, j] of the Levi-Civita connection."""
    q = _as_points(q, metric.dim)
    metric.check_positive(q)
    return _christoffel(metric, q)


@dataclass
class GeodesicPath:
    t: np.ndarray
    q: np.ndarray
    v: np.ndarray

    def speeds(self, metric):
        G = metric.eval(self.q)
        return np.sqrt(np.einsum("...i,...ij,...j->...", self.v, G, self.v))


def _geodesic_rhs(metric, q, v):
    Gam = _christoffel(metric, q)
    return v, -np.einsum("...kij,...i,...j->...k", Gam, v, v)


def _rk4_geodesic(metric, q, v, T, steps, keep=False):
    h = T / steps
    qs, vs = [q], [v]
    for _ in range(steps):
        k1q, k1v = _geodesic_rhs(metric, q, v)
        k2q, k2v = _geodesic_rhs(metric, q + 0.5 * h * k1q, v + 0.5 * h * k1v)
        k3q, k3v = _geodesic_rhs(metric, q + 0.5 * h * k2q, v + 0.5 * h * k2v)
        k4q, k4v = _geodesic_rhs(metric, q + h * k3q, v + h * k3v)
        q = q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if keep:
            qs.append(q)
            vs.append(v)
    if keep:
        return np.array(qs), np.array(vs)
    return q, v


def geodesic_shoot(metric: MetricField, q0, v0, T: float, steps: int) -> GeodesicPath:
    """Integrate the geodesic equation with fixed-step RK4 on [0, T]."""
    if steps <= 0:
        raise InvalidArgumentError("step count must be positive")
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if not np.any(v0):
        raise InvalidArgumentError("initial velocity must be nonzero")
    metric.check_positive(q0)
    qs, vs = _rk4_geodesic(metric, q0, v0, float(T), int(steps), keep=True)
    return GeodesicPath(np.linspace(0.0, T, steps + 1), qs, vs)


def exp_map(metric: MetricField, q, v, steps: int = 16):
    """Batch exponential map, q and v of shape (..., n)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    qq, _ = _rk4_geodesic(metric, q, v, 1.0, steps)
    return qq


# ---------------------------------------------------------------------------
# Closed curves


def curve_length(metric: MetricField, samples) -> float:
    """Polyline length with the metric averaged over each chord's endpoints."""
    samples = np.asarray(samples, dtype=float)
    d = np.diff(samples, axis=0)
    G = metric.eval(samples)
    Gm = 0.5 * (G[1:] + G[:-1])
    return float(np.sum(np.sqrt(np.einsum("si,sij,sj->s", d, Gm, d))))


@dataclass(frozen=True)
class ClosedCurve:
    """Lifted loop: samples[0..N] with samples[N] = samples[0] + beta."""

    samples: np.ndarray
    beta: np.ndarray
    length: float

    @classmethod
    def from_samples(cls, metric: MetricField, samples, beta, atol: float = 1e-8):
        samples = np.array(samples, dtype=float)
        beta = np.asarray(beta)
        if not np.all(np.asarray(beta) == np.round(beta)):
            raise InvalidCurveError("homology class must be an integer vector")
        beta = np.round(beta).astype(int)
        if samples.ndim != 2 or samples.shape[1] != len(beta) or len(samples) < 3:
            raise InvalidCurveError("samples must be an (N+1, n) array with N >= 2")
        gap = samples[-1] - samples[0] - beta
        if np.max(np.abs(gap)) > atol:
            raise InvalidCurveError("lift does not close up to beta")
        samples[-1] = samples[0] + beta
        return cls(samples, beta, curve_length(metric, samples))

    @classmethod
    def straight(cls, metric, q0, beta, N: int = 64):
        beta = np.asarray(beta, dtype=float)
        t = np.linspace(0.0, 1.0, N + 1)[:, None]
        return cls.from_samples(metric, np.asarray(q0, float) + t * beta, beta)

    @property
    def n(self):
        return self.samples.shape[1]

    @property
    def N(self):
        return self.samples.shape[0] - 1

    def spline(self):
        """Periodic cubic spline of the lift, parameter in [0, 1]."""
        s = np.linspace(0.0, 1.0, self.N + 1)
        per = self.samples - s[:, None] * self.beta
        per[-1] = per[0]
        sp = CubicSpline(s, per, bc_type="periodic")
        beta = self.beta.astype(float)

        def q(x):
            x = np.asarray(x, dtype=float)
            return sp(np.mod(x, 1.0)) + (x[..., None] if x.ndim else x) * beta

        def dq(x):
            x = np.asarray(x, dtype=float)
            return sp(np.mod(x, 1.0), 1) + beta

        return q, dq

    def resample(self, metric, N: int):
        q, _ = self.spline()
        return ClosedCurve.from_samples(metric, q(np.linspace(0.0, 1.0, N + 1)), self.beta)

    def translated(self, metric, shift):
        return ClosedCurve.from_samples(metric, self.samples + np.asarray(shift), self.beta)

    def reparametrized_by_arclength(self, metric, N: int | None = None):
        N = self.N if N is None else N
        d = np.diff(self.samples, axis=0)
        G = metric.eval(self.samples)
        Gm = 0.5 * (G[1:] + G[:-1])
        seg = np.sqrt(np.einsum("si,sij,sj->s", d, Gm, d))
        if np.min(seg) <= 0:
            raise InvalidCurveError("zero-speed segment")
        cum = np.concatenate([[0.0], np.cumsum(seg)]) / np.sum(seg)
        q, _ = self.spline()
        s_old = np.linspace(0.0, 1.0, self.N + 1)
        target = np.linspace(0.0, 1.0, N + 1)
        s_new = np.interp(target, cum, s_old)
        return ClosedCurve.from_samples(metric, q(s_new), self.beta)


# ---------------------------------------------------------------------------
# Parallel transport


def _initial_frame(metric, q0, tangent):
    """g-orthonormal frame [T, V_1..V_{n-1}] by Gram-Schmidt against tangent."""
    G = metric.eval(q0)
    n = len(q0)

    def ip(a, b):
        return float(a @ G @ b)

    T = tangent / np.sqrt(ip(tangent, tangent))
    frame = [T]
    # coordinate vectors ordered by how little they overlap the tangent
    order = np.argsort([abs(ip(np.eye(n)[i], T)) / np.sqrt(G[i, i]) for i in range(n)])
    for i in order:
        w = np.eye(n)[i].copy()
        for e in frame:
            w = w - ip(w, e) * e
        nw = np.sqrt(max(ip(w, w), 0.0))
        if nw > 1e-8 and len(frame) < n:
            frame.append(w / nw)
    if len(frame) < n:
        raise InvalidCurveError("could not complete an orthonormal frame")
    E = np.column_stack(frame)
    if np.linalg.det(E) < 0 and n > 1:
        E[:, -1] = -E[:, -1]
    return E


@dataclass
class TransportResult:
    s: np.ndarray          # curve parameter in [0, 1]
    q: np.ndarray          # (M+1, n)
    dq: np.ndarray         # (M+1, n) derivative in s
    frames: np.ndarray     # (M+1, n, n), columns transported vectors
    holonomy: np.ndarray   # (n, n), g(E_i(0), E_j(1))


def transport_frames(metric: MetricField, curve: ClosedCurve, steps: int | None = None,
                     frame0=None) -> TransportResult:
    d = np.diff(curve.samples, axis=0)
    if np.min(np.linalg.norm(d, axis=1)) <= 1e-14:
        raise InvalidCurveError("degenerate (zero-speed) segment")
    if steps is None:
        steps = max(4 * curve.N, 2000)
    qf, dqf = curve.spline()
    s = np.linspace(0.0, 1.0, steps + 1)
    h = 1.0 / steps
    if frame0 is None:
        frame0 = _initial_frame(metric, curve.samples[0], dqf(0.0))

    # connection coefficients along the curve at all RK4 stage points
    half = np.linspace(0.0, 1.0, 2 * steps + 1)
    A = np.einsum("xkij,xi->xkj", _christoffel(metric, qf(half)), dqf(half))
    E = frame0.copy()
    frames = [E]
    for i in range(steps):
        a0, am, a1 = A[2 * i], A[2 * i + 1], A[2 * i + 2]
        k1 = -a0 @ E
        k2 = -am @ (E + 0.5 * h * k1)
        k3 = -am @ (E + 0.5 * h * k2)
        k4 = -a1 @ (E + h * k3)
        E = E + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        frames.append(E)
    frames = np.array(frames)
    G0 = metric.eval(curve.samples[0])
    hol = frame0.T @ G0 @ frames[-1]
    return TransportResult(s, qf(s), dqf(s), frames, hol)


def parallel_transport(metric: MetricField, curve: ClosedCurve, steps: int | None = None):
    """Holonomy of the Levi-Civita connection around a closed curve.

    Returned in the initial orthonormal frame [T, V_1..V_{n-1}], T the unit
    tangent at the base point. For a closed geodesic it is block diagonal
    diag(1, O) with O the normal monodromy.
    """
    return transport_frames(metric, curve, steps).holonomy


# ---------------------------------------------------------------------------
# Fermi charts


class FermiChart:
    """Chart (x_n, x') -> exp_{gamma(x_n)}(sum x'_i V_i(x_n)).

    Chart coordinates are ordered (x_n, x'_1, .., x'_{n-1}); x_n is arc
    length in [0, length]. O is the normal monodromy of the frame.
    """

    def __init__(self, metric, center, x_axis, q_axis, frames, O, half_width,
                 exp_steps=16):
        self.metric = metric
        self.center = center
        self.x_axis = x_axis
        self.length = float(x_axis[-1])
        self.frames = frames
        self.O = O
        self.half_width = float(half_width)
        self.exp_steps = exp_steps
        self._gamma = CubicSpline(x_axis, q_axis)
        self._V = CubicSpline(x_axis, frames[:, :, 1:])

    @property
    def normal_frame(self):
        return self.frames[:, :, 1:]

    def point(self, xn, xp):
        xn = np.asarray(xn, dtype=float)
        xp = np.asarray(xp, dtype=float)
        base = self._gamma(xn)
        v = np.einsum("...ic,...c->...i", self._V(xn), xp)
        return exp_map(self.metric, base, v, self.exp_steps)

    def chart_point(self, x):
        x = np.asarray(x, dtype=float)
        return self.point(x[..., 0], x[..., 1:])

    def jacobian(self, x, h: float = 1e-4):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        cols = []
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            cols.append(
                (-self.chart_point(x + 2 * e) + 8 * self.chart_point(x + e)
                 - 8 * self.chart_point(x - e) + self.chart_point(x - 2 * e)) / (12 * h)
            )
        return np.stack(cols, axis=-1)

    def pulled_metric(self, x, h: float = 1e-4):
        """Pullback of the metric to chart coordinates at x = (x_n, x')."""
        x = np.asarray(x, dtype=float)
        D = self.jacobian(x, h)
        G = self.metric.eval(self.chart_point(x))
        return np.einsum("...ai,...ab,...bj->...ij", D, G, D)


def fermi_chart(metric: MetricField, geodesic: ClosedCurve, half_width: float,
                steps: int | None = None, check_grid: tuple = (64, 9),
                geodesic_tol: float = 1e-6) -> FermiChart:
    """Fermi chart around a closed geodesic with an explicit tube half-width."""
    if half_width <= 0:
        raise InvalidArgumentError("half_width must be positive")
    tr = transport_frames(metric, geodesic, steps)
    H = tr.holonomy
    if abs(H[0, 0] - 1.0) > geodesic_tol or np.max(np.abs(H[0, 1:]), initial=0.0) > geodesic_tol:
        raise InvalidCurveError("curve is not a closed geodesic within tolerance")
    # arc length along the spline parameter
    G = metric.eval(tr.q)
    speed = np.sqrt(np.einsum("si,sij,sj->s", tr.dq, G, tr.dq))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(tr.s))])
    chart = FermiChart(metric, geodesic, cum, tr.q, tr.frames, H[1:, 1:].copy(), half_width)
    if metric.dim > 1:
        _check_injective(chart, *check_grid)
    return chart


def _check_injective(chart: FermiChart, n_axial: int, n_normal: int):
    n = chart.metric.dim
    hw = chart.half_width
    xa = np.linspace(0.0, chart.length, n_axial, endpoint=False)
    xn = np.linspace(-hw, hw, n_normal)
    grids = np.meshgrid(xa, *([xn] * (n - 1)), indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=-1)
    P = chart.chart_point(X)
    G = chart.metric.eval(P)
    lam = np.linalg.eigvalsh(G)
    spacing = min(chart.length / n_axial, 2 * hw / (n_normal - 1))
    thresh = 0.25 * spacing / np.sqrt(lam.max())
    tree = cKDTree(np.mod(P, 1.0), boxsize=1.0)
    dist, _ = tree.query(np.mod(P, 1.0), k=2)
    if np.min(dist[:, 1]) < thresh:
        raise TubeTooWideError("Fermi chart folds over: sample images collide")
    J = chart.jacobian(X[:: max(1, len(X) // 400)])
    if np.min(np.linalg.det(J)) * np.sign(np.linalg.det(J[0])) <= 0:
        raise TubeTooWideError("Fermi chart Jacobian degenerates inside the tube")
