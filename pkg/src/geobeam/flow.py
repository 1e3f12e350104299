"""Geodesic flow, Jacobi-field linearization and derived quantities.

The linearized flow is handled in the perpendicular parallel frame
E_1..E_{n-1} of the geodesic.  A tangent vector to S*M at rho is written
as (a, y, y') where ``a`` is the component along the flow, ``y`` the
perpendicular base displacement and ``y'`` its covariant derivative.  The
flow then acts by

    a -> a,    (y, y') -> M(t) (y, y'),    M = [[B, A], [B', A']]

with A, B the matrix Jacobi solutions A(0)=0, A'(0)=I and B(0)=I, B'(0)=0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg, optimize

from .manifold import FlatTorus, GeometryError, ManifoldModel, RoundSphere

DEFAULT_STEP = 1e-3
DEFAULT_HORIZON = 200.0
LAMBDA_FLOOR = 0.05


class StiffnessError(RuntimeError):
    pass


class HorizonError(RuntimeError):
    pass


class PreconditionError(ValueError):
    pass


# ---------------------------------------------------------------------
# phase points


@dataclass(frozen=True)
class PhasePoint:
    """Point (x, xi) of the unit cosphere bundle, in state coordinates."""

    x: np.ndarray
    xi: np.ndarray

    def velocity(self, model: ManifoldModel) -> np.ndarray:
        return model.sharp(self.x, self.xi)

    def energy(self, model: ManifoldModel) -> float:
        v = self.velocity(model)
        return float(model.norm(self.x, v))


def phase_point(model: ManifoldModel, x, v, normalize: bool = True) -> PhasePoint:
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    if normalize:
        x, v = model.normalize(x, v)
    return PhasePoint(x=np.array(x), xi=np.array(model.flat(x, v)))


# ---------------------------------------------------------------------
# integrators


def rk4_geodesic(model: ManifoldModel, x, v, t, step: float = DEFAULT_STEP):
    """RK4 on (x, v) with per-step renormalization of |v|_g.

    Vectorized: ``x, v`` may carry leading batch axes matching ``t``.
    """
    x = np.array(x, float)
    v = np.array(v, float)
    t = np.asarray(t, float)
    if step <= 1e-12:
        raise StiffnessError("step size underflow")
    speed = model.norm(x, v)
    nsteps = int(np.ceil(np.max(np.abs(t)) / step)) if t.size else 0
    if nsteps == 0:
        return x, v
    h = (t / nsteps)[..., None]
    for _ in range(nsteps):
        k1x, k1v = v, model.geodesic_accel(x, v)
        x2, v2 = x + 0.5 * h * k1x, v + 0.5 * h * k1v
        k2x, k2v = v2, model.geodesic_accel(x2, v2)
        x3, v3 = x + 0.5 * h * k2x, v + 0.5 * h * k2v
        k3x, k3v = v3, model.geodesic_accel(x3, v3)
        x4, v4 = x + h * k3x, v + h * k3v
        k4x, k4v = v4, model.geodesic_accel(x4, v4)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        x, v = model.project(x, v)
        v = v * (speed / model.norm(x, v))[..., None]
    return x, v


def flow_states(model: ManifoldModel, x, v, t, step: float = DEFAULT_STEP, method: str = "auto"):
    """Flow arrays of (x, v) states for times ``t`` (broadcast)."""
    if method == "exact" or (method == "auto" and model.has_exact_flow):
        return model.exact_geodesic(np.asarray(x, float), np.asarray(v, float), t)
    return rk4_geodesic(model, x, v, t, step=step)


def flow(model: ManifoldModel, rho: PhasePoint, t: float, step: float = DEFAULT_STEP, method: str = "auto") -> PhasePoint:
    """The geodesic flow phi_t(rho)."""
    v = rho.velocity(model)
    xt, vt = flow_states(model, rho.x, v, t, step=step, method=method)
    return phase_point(model, xt, vt)


# ---------------------------------------------------------------------
# tangent coordinates


def _covariant_dv(model, x, v, dx, dv):
    if isinstance(model, RoundSphere):
        return dv - (np.dot(dv, x) / model.radius**2) * x
    G = model.christoffel(model.state_to_chart(x))
    return dv + np.einsum("kij,i,j->k", G, dx, v)


def tangent_coords(model: ManifoldModel, x, v, dx, dv, frame=None) -> np.ndarray:
    """(a, y, y') coordinates of the state perturbation (dx, dv) at (x, v)."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    E = model.perp_frame(x, v) if frame is None else np.atleast_2d(frame)
    Dv = _covariant_dv(model, x, v, np.asarray(dx, float), np.asarray(dv, float))
    a = model.inner(x, dx, v)
    y = np.array([model.inner(x, dx, e) for e in E])
    yp = np.array([model.inner(x, Dv, e) for e in E])
    return np.concatenate([[a], y, yp])


def tangent_vector(model: ManifoldModel, x, v, coords, frame=None):
    """Inverse of :func:`tangent_coords`: returns (dx, dv)."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    E = model.perp_frame(x, v) if frame is None else np.atleast_2d(frame)
    m = len(E)
    a, y, yp = coords[0], coords[1 : 1 + m], coords[1 + m :]
    dx = a * v + y @ E
    Dv = yp @ E
    if isinstance(model, RoundSphere):
        dv = Dv - a * x / model.radius**2
    else:
        G = model.christoffel(model.state_to_chart(x))
        dv = Dv - np.einsum("kij,i,j->k", G, dx, v)
    return dx, dv


# ---------------------------------------------------------------------
# Jacobi propagation


def _curvature_fn(model: ManifoldModel) -> Callable:
    m = model.dim - 1
    if model.curvature_kind != "variable":
        K = float(model.K)
        return lambda x, v, E: K * np.eye(m)
    if model.dim == 2:
        return lambda x, v, E: np.array([[float(model.gauss_curvature(x))]])
    return lambda x, v, E: model.curvature_matrix(x, v, E)


def _frames_along(model, xs, vs, x0, v0, times):
    if model.dim == 2:
        return model.rotate90(xs, vs)[:, None, :]
    E0 = model.perp_frame(x0, v0)
    if isinstance(model, FlatTorus):
        return np.broadcast_to(E0, (len(times),) + E0.shape).copy()
    if isinstance(model, RoundSphere):
        a = E0 @ v0
        return (E0 - np.outer(a, v0))[None] + a[None, :, None] * vs[:, None, :]
    # generic: frame ODE with periodic Gram-Schmidt
    frames = [E0]
    E = E0.copy()
    for i in range(1, len(times)):
        h = times[i] - times[i - 1]
        x, v = xs[i - 1], vs[i - 1]
        k1 = model.transport_rhs(x, v, E)
        E = E + h * k1
        if i % 100 == 0:
            E = _gram_schmidt(model, xs[i], vs[i], E)
        frames.append(E.copy())
    return np.array(frames)


def _gram_schmidt(model, x, v, E):
    basis = [v]
    out = []
    for e in E:
        w = e.copy()
        for b in basis:
            w = w - model.inner(x, w, b) * b
        w = w / model.norm(x, w)
        basis.append(w)
        out.append(w)
    return np.array(out)


@dataclass
class FlowSegment:
    """Linearized flow along a geodesic segment on a uniform time grid."""

    model: ManifoldModel
    rho: PhasePoint
    times: np.ndarray
    xs: np.ndarray
    vs: np.ndarray
    frames: np.ndarray
    A: np.ndarray
    dA: np.ndarray
    B: np.ndarray
    dB: np.ndarray
    R: np.ndarray
    step: float
    _curv: Callable = field(repr=False, default=None)

    @property
    def m(self) -> int:
        return self.A.shape[-1]

    def index(self, t: float) -> int:
        i = int(round((t - self.times[0]) / (self.times[1] - self.times[0])))
        if i < 0 or i >= len(self.times):
            raise PreconditionError(f"t={t} outside segment window [{self.times[0]}, {self.times[-1]}]")
        return i

    def jacobi_at(self, t: float):
        """(A, A', B, B') at arbitrary t via one RK4 step from the nearest node."""
        i = self.index(t)
        dt = t - self.times[i]
        if abs(dt) < 1e-15:
            return self.A[i], self.dA[i], self.B[i], self.dB[i]
        x, v, E = self.xs[i], self.vs[i], self.frames[i]
        xm, vm = flow_states(self.model, x, v, 0.5 * dt, step=self.step)
        x1, v1 = flow_states(self.model, x, v, dt, step=self.step)
        R0 = self.R[i]
        Rm = self._curv(xm, vm, None)
        R1 = self._curv(x1, v1, None)
        Y = np.hstack([self.A[i], self.B[i]])
        P = np.hstack([self.dA[i], self.dB[i]])
        Y, P = _rk4_jacobi_step(Y, P, R0, Rm, R1, dt)
        m = self.m
        return Y[:, :m], P[:, :m], Y[:, m:], P[:, m:]

    def dflow(self, t: float) -> np.ndarray:
        """Perpendicular block [[B, A], [B', A']] of d(phi_t)."""
        A, dA, B, dB = self.jacobi_at(t)
        return np.block([[B, A], [dB, dA]])

    def wronskian_drift(self) -> float:
        """Max drift of the Wronskians W(A,A), W(B,B), W(B,A) - I."""
        WAA = np.einsum("tji,tjk->tik", self.dA, self.A) - np.einsum("tji,tjk->tik", self.A, self.dA)
        WBB = np.einsum("tji,tjk->tik", self.dB, self.B) - np.einsum("tji,tjk->tik", self.B, self.dB)
        WBA = np.einsum("tji,tjk->tik", self.dB, self.A) - np.einsum("tji,tjk->tik", self.B, self.dA)
        I = np.eye(self.m)
        return float(max(np.abs(WAA).max(), np.abs(WBB).max(), np.abs(WBA + I).max()))

    def energy_drift(self) -> float:
        speeds = self.model.norm(self.xs, self.vs)
        return float(np.abs(speeds - 1.0).max())

    def to_rows(self):
        """Rows (t, x..., xi..., det A, smallest singular value of A)."""
        rows = []
        xi = self.model.flat(self.xs, self.vs)
        for i, t in enumerate(self.times):
            s = np.linalg.svd(self.A[i], compute_uv=False)
            rows.append([t, *self.xs[i], *xi[i], np.linalg.det(self.A[i]), s[-1]])
        return rows


def _rk4_jacobi_step(Y, P, R0, Rm, R1, h):
    k1y, k1p = P, -R0 @ Y
    k2y, k2p = P + 0.5 * h * k1p, -Rm @ (Y + 0.5 * h * k1y)
    k3y, k3p = P + 0.5 * h * k2p, -Rm @ (Y + 0.5 * h * k2y)
    k4y, k4p = P + h * k3p, -R1 @ (Y + h * k3y)
    return Y + h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y), P + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)


def propagate_linearization(
    model: ManifoldModel,
    rho: PhasePoint,
    T: float,
    step: float = DEFAULT_STEP,
    horizon: float = DEFAULT_HORIZON,
    check: bool = True,
) -> FlowSegment:
    """Propagate A, A', B, B' along the geodesic of ``rho`` for time T (T may be negative)."""
    if abs(T) > horizon:
        raise HorizonError(f"|T|={abs(T)} exceeds configured horizon {horizon}")
    if step <= 1e-12:
        raise StiffnessError("step size underflow")
    N = max(1, int(np.ceil(abs(T) / step - 1e-9)))
    h = T / N
    half = np.linspace(0.0, T, 2 * N + 1)
    x0 = rho.x
    v0 = rho.velocity(model)
    if model.has_exact_flow:
        xh, vh = model.exact_geodesic(np.broadcast_to(x0, (len(half), len(x0))), np.broadcast_to(v0, (len(half), len(v0))), half)
    else:
        xh, vh = _rk4_trajectory(model, x0, v0, h / 2, 2 * N)
    times = half[::2]
    xs, vs = xh[::2], vh[::2]
    frames = _frames_along(model, xs, vs, x0, v0, times)
    curv = _curvature_fn(model)
    if model.curvature_kind != "variable":
        Rh = np.broadcast_to(float(model.K) * np.eye(model.dim - 1), (len(half), model.dim - 1, model.dim - 1))
    elif model.dim == 2:
        Rh = np.array([curv(p, w, None) for p, w in zip(xh, vh)])
    else:
        fr_half = _frames_along(model, xh, vh, x0, v0, half)
        Rh = np.array([curv(p, w, E) for p, w, E in zip(xh, vh, fr_half)])
    m = model.dim - 1
    Y = np.hstack([np.zeros((m, m)), np.eye(m)])
    P = np.hstack([np.eye(m), np.zeros((m, m))])
    Ys = np.empty((N + 1, m, 2 * m))
    Ps = np.empty_like(Ys)
    Ys[0], Ps[0] = Y, P
    for i in range(N):
        Y, P = _rk4_jacobi_step(Y, P, Rh[2 * i], Rh[2 * i + 1], Rh[2 * i + 2], h)
        Ys[i + 1], Ps[i + 1] = Y, P
    seg = FlowSegment(
        model=model,
        rho=rho,
        times=times,
        xs=xs,
        vs=vs,
        frames=frames,
        A=Ys[:, :, :m],
        dA=Ps[:, :, :m],
        B=Ys[:, :, m:],
        dB=Ps[:, :, m:],
        R=Rh[::2],
        step=abs(h),
        _curv=curv,
    )
    if check:
        drift = _frame_drift(model, xs, vs, frames)
        if drift > 1e-6:
            raise GeometryError(f"parallel frame drift {drift:.2e} persists after re-orthonormalization")
    return seg


def _rk4_trajectory(model, x, v, h, n):
    xs = [np.array(x, float)]
    vs = [np.array(v, float)]
    for _ in range(n):
        x, v = rk4_geodesic(model, x, v, h, step=abs(h) + 1e-15)
        xs.append(x)
        vs.append(v)
    return np.array(xs), np.array(vs)


def _frame_drift(model, xs, vs, frames, stride=97):
    worst = 0.0
    for i in list(range(0, len(xs), stride)) + [len(xs) - 1]:
        full = np.vstack([frames[i], vs[i][None, :]])
        g = np.array([[model.inner(xs[i], a, b) for b in full] for a in full])
        worst = max(worst, float(np.abs(g - np.eye(len(full))).max()))
    return worst


# ---------------------------------------------------------------------
# derived quantities


def operator_norm_dflow(segment: FlowSegment, t: float, block: str = "full") -> float:
    """Spectral norm of d(phi_t).

    ``block="full"`` includes the flow direction (norm 1) and the whole
    perpendicular block; ``block="vertical"`` restricts to vertical input
    vectors (Y(0)=0), i.e. the norm of [A; A'].
    """
    A, dA, B, dB = segment.jacobi_at(t)
    if block == "vertical":
        return float(np.linalg.norm(np.vstack([A, dA]), 2))
    if block == "full":
        M = np.block([[B, A], [dB, dA]])
        return float(max(1.0, np.linalg.norm(M, 2)))
    raise ValueError(f"unknown block {block!r}")


@dataclass
class ConjugateReport:
    points: list  # (time, multiplicity)
    window: tuple
    tol: float
    warnings: list = field(default_factory=list)

    @property
    def times(self):
        return [p[0] for p in self.points]


def conjugate_points(segment: FlowSegment, window=None, tol: float = 1e-7) -> ConjugateReport:
    """Conjugate times (rank drops of A) in ``window`` with multiplicities."""
    t = segment.times
    if window is None:
        window = (min(t[0], t[-1]), max(t[0], t[-1]))
    lo, hi = window
    step = segment.step
    sv = np.linalg.svd(segment.A, compute_uv=False)
    smin = sv[:, -1]
    det = np.linalg.det(segment.A)
    inside = (t >= lo - 1e-12) & (t <= hi + 1e-12) & (np.abs(t) > 2 * step)
    scale = float(sv[inside, 0].max()) if inside.any() else 1.0
    scale = max(scale, 1e-300)

    def smin_at(s):
        return np.linalg.svd(segment.jacobi_at(s)[0], compute_uv=False)[-1]

    def det_at(s):
        return np.linalg.det(segment.jacobi_at(s)[0])

    idx = np.flatnonzero(inside)
    cands = []
    for j in idx:
        if j == 0 or j == len(t) - 1:
            continue
        local_min = smin[j] <= smin[j - 1] and smin[j] <= smin[j + 1]
        if not local_min or smin[j] > 0.05 * scale:
            continue
        a, b = sorted((t[j - 1], t[j + 1]))
        if det[j - 1] * det[j + 1] < 0:
            k = j - 1 if det[j - 1] * det[j] <= 0 else j
            a2, b2 = sorted((t[k], t[k + 1]))
            root = optimize.brentq(det_at, a2, b2, xtol=1e-14)
        else:
            res = optimize.minimize_scalar(smin_at, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
            root = float(res.x)
        s = np.linalg.svd(segment.jacobi_at(root)[0], compute_uv=False)
        mult = int(np.sum(s < tol * scale))
        if mult > 0 and lo <= root <= hi:
            cands.append((float(root), mult))
    cands.sort()
    notes = []
    merged = []
    for c in cands:
        if merged and abs(c[0] - merged[-1][0]) < 2 * step:
            notes.append(f"conjugate times {merged[-1][0]:.6f} and {c[0]:.6f} closer than the step; refine")
            warnings.warn(notes[-1])
            if c[1] > merged[-1][1]:
                merged[-1] = c
            continue
        merged.append(c)
    return ConjugateReport(points=merged, window=(lo, hi), tol=tol, warnings=notes)


# ---------------------------------------------------------------------
# Riccati comparison


def random_piecewise_curvature(k: float, m: int, a: float, b: float, rng, pieces: int = 6, step: float = DEFAULT_STEP,
                               positive_part: float = 0.0):
    """Random piecewise-constant symmetric R(t) >= -k^2 I with switch times on the step grid."""
    n = int(round((b - a) / step))
    cuts = np.sort(rng.choice(np.arange(1, n), size=pieces - 1, replace=False))
    edges = a + step * np.concatenate([[0], cuts, [n]])
    mats = []
    for _ in range(pieces):
        Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
        ev = rng.uniform(-k**2, positive_part, size=m)
        ev[rng.random(m) < 0.3] = -k**2
        mats.append((Q * ev) @ Q.T)

    def R(t):
        i = int(np.searchsorted(edges, t, side="right") - 1)
        return mats[min(max(i, 0), pieces - 1)]

    R.edges = edges
    R.mats = mats
    return R


def riccati_bound(t, a, b, k):
    with np.errstate(divide="ignore"):
        ca = np.abs(1.0 / np.tanh(k * (t - a)))
        cb = np.abs(1.0 / np.tanh(k * (t - b)))
    return k * np.maximum(ca, cb)


def riccati_bound_check(R: Callable, k: float, grid, n_vectors: int = 64, rng=None, step: float = DEFAULT_STEP) -> dict:
    """Propagate U = A'A^{-1} with A(a)=0, A'(a)=I and test the comparison bound.

    ``grid`` is the interval [a, b] sampled uniformly; ``R(t)`` is evaluated
    at RK4 nodes.  Returns ``max_violation`` (max of |<Ux,x>| - bound over the
    grid and random unit x) and ``saturation_gap`` (min of bound - |<Ux,x>|).
    If A turns singular inside (a, b) the interval is cut at the first
    conjugate time and the check runs on the remaining piece.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    grid = np.asarray(grid, float)
    a, b = float(grid[0]), float(grid[-1])
    m = np.atleast_2d(R(a)).shape[0]
    mins = np.linalg.eigvalsh(np.array([R(s) for s in grid])).min()
    if mins < -k**2 - 1e-12:
        raise PreconditionError("R(t) >= -k^2 I violated")
    N = max(1, int(np.ceil((b - a) / step - 1e-9)))
    h = (b - a) / N
    ts = a + h * np.arange(N + 1)
    A, P = np.zeros((m, m)), np.eye(m)
    As, Ps = [A], [P]
    for i in range(N):
        t0 = ts[i]
        # right-continuous R sampled inside the step keeps switch points exact
        A, P = _rk4_jacobi_step(A, P, R(t0 + 1e-12 * h), R(t0 + 0.5 * h), R(t0 + h - 1e-12 * h), h)
        As.append(A)
        Ps.append(P)
    As, Ps = np.array(As), np.array(Ps)
    smin = np.linalg.svd(As[1:], compute_uv=False)[:, -1]
    cut = b
    # a rank drop between grid nodes leaves smin within about one step of |A'| (sign flips of det too)
    near = smin <= h * np.linalg.norm(Ps[1:], 2, axis=(1, 2))
    near[0] = False
    flips = np.zeros_like(near)
    flips[1:] = np.sign(np.linalg.det(As[2:])) != np.sign(np.linalg.det(As[1:-1]))
    bad = np.flatnonzero(near | flips | (smin < 1e-8 * np.linalg.norm(As[1:], axis=(1, 2))))
    split = False
    if bad.size:
        cut = ts[1 + bad[0]]
        split = True
    X = rng.standard_normal((n_vectors, m))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    use = (ts > a + 0.5 * h) & (ts < cut - 0.5 * h)
    worst = -np.inf
    gap = np.inf
    if use.any():
        U = Ps[use] @ np.linalg.inv(As[use])
        U = 0.5 * (U + np.swapaxes(U, 1, 2))
        q = np.abs(np.einsum("ij,tjk,ik->ti", X, U, X))
        bnd = riccati_bound(ts[use], a, cut, k)[:, None]
        worst = float((q - bnd).max())
        gap = float((bnd - q).min())
    return {"max_violation": worst, "saturation_gap": gap, "interval": (a, cut), "split": split,
            "pass": worst <= 1e-6}


# ---------------------------------------------------------------------
# expansion rate / Ehrenfest time


def sample_phase_points(model: ManifoldModel, count: int, rng) -> list:
    out = []
    for _ in range(count):
        if isinstance(model, FlatTorus):
            x = rng.uniform(0, model.periods)
            v = rng.standard_normal(model.dim)
        elif isinstance(model, RoundSphere):
            x = rng.standard_normal(model.dim + 1)
            v = rng.standard_normal(model.dim + 1)
        elif model.curvature_kind == "constant_negative":
            x = np.array([rng.uniform(-1, 1), np.exp(rng.uniform(-0.5, 0.5))])
            v = rng.standard_normal(2)
        else:
            lo, hi = model.r_range
            x = np.array([rng.uniform(lo + 0.3 * (hi - lo), hi - 0.3 * (hi - lo)), rng.uniform(0, 2 * np.pi)])
            v = rng.standard_normal(2)
        out.append(phase_point(model, x, v))
    return out


def estimate_lambda_max(model: ManifoldModel, sample_count: int = 32, T: float = 10.0, rng=None,
                        step: float = 1e-2) -> dict:
    """Max over samples of (1/T) log ||d(phi_T)||."""
    if sample_count < 32:
        raise PreconditionError("sample_count must be at least 32")
    rng = np.random.default_rng(0) if rng is None else rng
    rates = []
    for rho in sample_phase_points(model, sample_count, rng):
        seg = propagate_linearization(model, rho, T, step=step, check=False)
        rates.append(np.log(operator_norm_dflow(seg, T)) / T)
    rates = np.array(rates)
    return {"lambda_max": float(rates.max()), "spread": (float(rates.min()), float(rates.max())), "T": T}


def ehrenfest_time(h: float, lam: float, floor: float = LAMBDA_FLOOR) -> float:
    """log(1/h) / (2 Lambda), with Lambda replaced by ``floor`` when below it."""
    if not 0 < h < 1:
        raise PreconditionError("need 0 < h < 1")
    lam = max(float(lam), floor)
    return float(np.log(1.0 / h) / (2.0 * lam))


# ---------------------------------------------------------------------
# stable / unstable splitting


@dataclass
class SplittingEstimate:
    """E_+ (forward contracting) and E_- (backward contracting) at rho.

    Subspaces are given by row bases in the tangent coordinates of the
    backend: (a, y, y') for geodesic flows, plain R^2 for the cat map.
    """

    rho: object
    E_plus: np.ndarray
    E_minus: np.ndarray
    residual: float
    B_hat: float
    usable: bool
    U_stable: Optional[np.ndarray] = None
    U_unstable: Optional[np.ndarray] = None
    notes: list = field(default_factory=list)


def _green(segment_fwd, segment_bwd, T):
    A, _, B, _ = segment_fwd.jacobi_at(T)
    Us = -np.linalg.solve(A, B)
    A, _, B, _ = segment_bwd.jacobi_at(-T)
    Uu = -np.linalg.solve(A, B)
    return 0.5 * (Us + Us.T), 0.5 * (Uu + Uu.T)


def _graph_basis(U):
    m = U.shape[0]
    rows = np.hstack([np.zeros((m, 1)), np.eye(m), U])
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _anosov_constant(seg_f, seg_b, Us, Uu, T):
    m = Us.shape[0]
    ts = np.linspace(0, T, 41)[1:]
    logn = []
    for sign, seg, U in ((1, seg_f, Us), (-1, seg_b, Uu)):
        v = np.vstack([np.eye(m), U])
        base = np.linalg.norm(v, 2)
        for t in ts:
            M = seg.dflow(sign * t)
            logn.append((t, np.log(np.linalg.norm(M @ v, 2) / base)))
    for Bc in np.geomspace(1.0, 1e3, 121):
        if all(l <= np.log(Bc) - t / Bc + 1e-9 for t, l in logn):
            return float(Bc)
    return np.inf


def stable_unstable(model: ManifoldModel, rho: PhasePoint, T: float = 10.0, step: float = 1e-2,
                    residual_threshold: float = 0.1, angle_tol: float = 1e-3) -> SplittingEstimate:
    """Estimate E_+ / E_- from the Green bundles U = -A(+-T)^{-1} B(+-T).

    The residual combines the invariance defect |d(phi_1) E - E(phi_1 rho)|
    with the relative collapse of the gap U_u - U_s between T and 2T
    (the gap collapses like 1/T without hyperbolicity).
    """
    if T < 5:
        raise PreconditionError("T >= 5 required")
    seg_f = propagate_linearization(model, rho, 2 * T + 1, step=step, check=False)
    seg_b = propagate_linearization(model, rho, -2 * T, step=step, check=False)
    notes = []
    try:
        Us, Uu = _green(seg_f, seg_b, T)
        Us2, Uu2 = _green(seg_f, seg_b, 2 * T)
    except np.linalg.LinAlgError:
        return SplittingEstimate(rho, np.empty((0, 1)), np.empty((0, 1)), np.inf, np.inf, False,
                                 notes=["conjugate point at +-T: Green bundle undefined"])
    gap1 = np.linalg.eigvalsh(Uu - Us).min()
    gap2 = np.linalg.eigvalsh(Uu2 - Us2).min()
    collapse = abs(gap1 - gap2) / max(abs(gap1), 1e-300)
    # invariance: move E(rho) by d(phi_1) and compare with E(phi_1 rho)
    rho1 = flow(model, rho, 1.0)
    s1f = propagate_linearization(model, rho1, 2 * T, step=step, check=False)
    s1b = propagate_linearization(model, rho1, -T, step=step, check=False)
    Us_1, Uu_1 = _green(s1f, s1b, T)
    M = seg_f.dflow(1.0)
    m = Us.shape[0]
    inv = 0.0
    for U, U1 in ((Us2, Us_1), (Uu2, Uu_1)):
        moved = M @ np.vstack([np.eye(m), U])
        Y, Yp = moved[:m], moved[m:]
        U_moved = Yp @ np.linalg.inv(Y)
        inv = max(inv, float(np.linalg.norm(U_moved - U1, 2)))
    residual = max(inv, collapse)
    Eplus, Eminus = _graph_basis(Us2), _graph_basis(Uu2)
    angle = float(np.min(linalg.subspace_angles(Eplus.T, Eminus.T)))
    usable = residual <= residual_threshold and angle > angle_tol and gap2 > 0
    if not usable:
        notes.append("non-hyperbolic: splitting estimate flagged unusable")
        warnings.warn(notes[-1])
        B_hat = np.inf
    else:
        B_hat = _anosov_constant(seg_f, seg_b, Us2, Uu2, T)
    return SplittingEstimate(rho, Eplus, Eminus, residual, B_hat, usable, U_stable=Us2, U_unstable=Uu2, notes=notes)


# ---------------------------------------------------------------------
# partial invertibility near conjugate points


@dataclass
class PandaResult:
    basis: np.ndarray  # rows: vertical vectors (Y'(0) directions)
    factor: float
    C_hat: float
    window: tuple


def panda_subspace(segment: FlowSegment, t0: float, eps: float, m: int, samples: int = 201) -> PandaResult:
    """Vertical subspace of dimension n-1-m on which |d(phi_t) V| <= factor |d(pi) d(phi_t) V|.

    The subspace is spanned by the right singular vectors of A(t0) with the
    n-1-m largest singular values; the factor is measured on (t0-eps, t0+eps)
    through a generalized eigenvalue problem at each sample time.
    """
    rep = conjugate_points(segment, (t0 - 2 * eps, t0 + 2 * eps))
    inside = [p for p in rep.points if t0 - 2 * eps < p[0] < t0 + 2 * eps]
    count = sum(p[1] for p in inside)
    if count > m:
        raise PreconditionError(f"{count} conjugate points in (t0-2eps, t0+2eps) exceed m={m}")
    dim = segment.m - m
    if dim <= 0:
        return PandaResult(np.zeros((0, segment.m)), 1.0, 0.0, (t0 - eps, t0 + eps))
    A0 = segment.jacobi_at(t0)[0]
    _, _, Vt = np.linalg.svd(A0)
    W = Vt[:dim].T
    worst = 1.0
    for t in np.linspace(t0 - eps, t0 + eps, samples)[1:-1]:
        A, dA, _, _ = segment.jacobi_at(t)
        AW, PW = A @ W, dA @ W
        G = AW.T @ AW
        if np.linalg.eigvalsh(G).min() <= 0:
            worst = np.inf
            break
        lam = linalg.eigh(PW.T @ PW, G, eigvals_only=True).max()
        worst = max(worst, float(np.sqrt(1.0 + lam)))
    C_hat = (worst**2 - 1.0) * eps**2 if np.isfinite(worst) else np.inf
    return PandaResult(W.T, worst, C_hat, (t0 - eps, t0 + eps))
