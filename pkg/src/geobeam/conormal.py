"""Submanifolds, their unit conormal bundles, the Sasaki distance and tubes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg, optimize
from scipy.spatial import cKDTree

from .flow import PhasePoint, PreconditionError, SplittingEstimate, flow_states, phase_point, tangent_coords
from .manifold import FlatTorus, GeometryError, HyperbolicHalfPlane, ManifoldModel, RoundSphere

ANGLE_TOL = 1e-3
GRAY_TOL = 1e-2


# ---------------------------------------------------------------------
# submanifolds


@dataclass
class Submanifold:
    """An embedded submanifold H given by a parametrization u -> x(u).

    ``kind`` is ``"point"`` (k = n) or ``"curve"`` (a curve on a surface,
    k = 1).  Curves carry a unit-speed-agnostic parametrization on
    ``domain``; ``periodic`` marks closed curves.
    """

    model: ManifoldModel
    kind: str
    param: Callable
    domain: tuple = (0.0, 0.0)
    periodic: bool = False
    label: str = ""
    _KH: Optional[float] = field(default=None, repr=False)

    @property
    def codim(self) -> int:
        return self.model.dim if self.kind == "point" else self.model.dim - 1

    @property
    def dim(self) -> int:
        return self.model.dim - self.codim

    # -- constructors -----------------------------------------------
    @classmethod
    def point(cls, model: ManifoldModel, x, label="point"):
        x = np.asarray(x, float)
        if isinstance(model, RoundSphere):
            x = model.radius * x / np.linalg.norm(x)
        model.check_domain(x)
        return cls(model, "point", lambda u, _x=x: _x.copy(), label=label)

    @classmethod
    def curve(cls, model: ManifoldModel, param, domain, periodic=False, label="curve"):
        if model.dim != 2:
            raise GeometryError("curves are supported on surfaces only")
        H = cls(model, "curve", param, tuple(domain), periodic, label)
        H.check_immersion()
        return H

    @classmethod
    def geodesic(cls, model: ManifoldModel, x, v, length, label="geodesic"):
        x, v = model.normalize(np.asarray(x, float), np.asarray(v, float))
        L = float(length)

        def param(u):
            return flow_states(model, x, v, u)[0]

        return cls.curve(model, param, (-L / 2, L / 2), label=label)

    # -- geometry ---------------------------------------------------
    @property
    def base_point(self):
        return self.param(0.0)

    def tangent(self, u, h=1e-6):
        if self.kind == "point":
            return None
        a, b = self.domain
        if not self.periodic:
            u = min(max(u, a + h), b - h)
        return (self.param(u + h) - self.param(u - h)) / (2 * h)

    def unit_tangent(self, u):
        x = self.param(u)
        x, T = self.model.project(x, self.tangent(u))
        return T / self.model.norm(x, T)

    def normal(self, u):
        x = self.param(u)
        return self.model.rotate90(x, self.unit_tangent(u))

    def check_immersion(self, samples=64):
        a, b = self.domain
        for u in np.linspace(a, b, samples):
            x = self.param(u)
            if self.model.norm(x, self.tangent(u)) < 1e-8:
                raise GeometryError("parametrization not immersive")

    def length(self, samples=2001) -> float:
        if self.kind == "point":
            return 0.0
        u = np.linspace(*self.domain, samples)
        speed = np.array([self.model.norm(self.param(s), self.tangent(s)) for s in u])
        return float(np.trapezoid(speed, u))

    def arclength_grid(self, count: int):
        """Parameters u_0..u_{count-1} equally spaced in arc length."""
        u = np.linspace(*self.domain, 4001)
        speed = np.array([self.model.norm(self.param(s), self.tangent(s)) for s in u])
        s = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(u))])
        if self.periodic:
            targets = np.arange(count) * s[-1] / count
        else:
            targets = (np.arange(count) + 0.5) * s[-1] / count
        return np.interp(targets, s, u)

    def geodesic_curvature(self, u, h=1e-4) -> float:
        x = self.param(u)
        T0 = self.unit_tangent(u)
        Tp = self.unit_tangent(u + h)
        Tm = self.unit_tangent(u - h)
        speed = self.model.norm(x, self.tangent(u))
        # covariant derivative of T along the curve
        Pp = self.model.transport(self.param(u + h), x, Tp)
        Pm = self.model.transport(self.param(u - h), x, Tm)
        DT = (Pp - Pm) / (2 * h * speed)
        return float(self.model.inner(x, DT, self.model.rotate90(x, T0)))

    @property
    def K_H(self) -> float:
        """Bound on |K| along H plus the squared geodesic curvature of H."""
        if self._KH is None:
            if self.kind == "point":
                self._KH = 0.0
            else:
                us = np.linspace(*self.domain, 33)
                if not self.periodic:
                    us = us[1:-1]
                K = max(abs(float(self.model.gauss_curvature(self.param(u)))) for u in us)
                kg = max(abs(self.geodesic_curvature(u)) for u in us)
                self._KH = K + kg**2
        return self._KH

    def describe(self) -> dict:
        return {"kind": self.kind, "label": self.label, "domain": list(self.domain), "periodic": self.periodic}

    # -- conormal states --------------------------------------------
    def fiber_frame(self):
        """Orthonormal basis of T_x M at a point H (rows)."""
        x = self.base_point
        if isinstance(self.model, RoundSphere):
            e = np.eye(self.model.dim + 1)
            basis = []
            for v in e:
                w = v - (v @ x) * x / self.model.radius**2
                for b in basis:
                    w = w - (w @ b) * b
                if np.linalg.norm(w) > 1e-6:
                    basis.append(w / np.linalg.norm(w))
                if len(basis) == self.model.dim:
                    break
            return np.array(basis)
        g = self.model.state_metric(x)
        basis = []
        for v in np.eye(self.model.dim):
            w = v.copy()
            for b in basis:
                w = w - (w @ g @ b) * b
            basis.append(w / np.sqrt(w @ g @ w))
        return np.array(basis)

    def state(self, u, w):
        """(x, v) of the conormal point with parameters (u, w).

        For a point H on a surface ``w`` is the fiber angle; for a curve
        ``w`` is the side (+1 / -1) of the unit normal.
        """
        if self.kind == "point":
            E = self.fiber_frame()
            if self.model.dim == 2:
                v = np.cos(w) * E[0] + np.sin(w) * E[1]
            else:
                v = np.asarray(w, float) @ E
            return self.base_point, v
        x = self.param(u)
        return x, w * self.normal(u)


@dataclass(frozen=True)
class ConormalPoint:
    u: float
    w: object
    rho: PhasePoint
    index: int = -1


def sample_snh(H: Submanifold, spacing: float) -> list:
    """Net of SN*H with spacing at most ``spacing`` (Sasaki)."""
    if spacing <= 0:
        raise PreconditionError("spacing must be positive")
    model = H.model
    out = []
    if H.kind == "point":
        if model.dim == 2:
            N = max(3, int(np.ceil(2 * np.pi / spacing)))
            for j in range(N):
                th = 2 * np.pi * j / N
                x, v = H.state(0.0, th)
                out.append(ConormalPoint(0.0, th, phase_point(model, x, v), j))
        else:
            d = model.dim
            N = max(8, int(np.ceil(_sphere_area(d - 1) / spacing ** (d - 1))))
            for j, w in enumerate(_fibonacci_sphere(N, d)):
                x, v = H.state(0.0, w)
                out.append(ConormalPoint(0.0, tuple(w), phase_point(model, x, v), j))
        return out
    L = H.length()
    M = max(2, int(np.ceil(L / spacing)))
    us = H.arclength_grid(M)
    j = 0
    for u in us:
        for side in (1, -1):
            x, v = H.state(u, side)
            out.append(ConormalPoint(float(u), side, phase_point(model, x, v), j))
            j += 1
    return out


def _sphere_area(k):
    from scipy.special import gamma

    return 2 * np.pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


def _fibonacci_sphere(N, d):
    if d != 3:
        raise GeometryError("point conormal sampling implemented for n = 2, 3")
    i = np.arange(N) + 0.5
    phi = np.arccos(1 - 2 * i / N)
    th = np.pi * (1 + 5**0.5) * i
    return np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)


def snh_tangent(H: Submanifold, cp: ConormalPoint, h: float = 1e-6) -> np.ndarray:
    """Orthonormal basis (rows) of T SN*H at ``cp`` in (a, y, y') coordinates."""
    model = H.model
    x, v = H.state(cp.u, cp.w)
    if H.kind == "point":
        if model.dim != 2:
            raise GeometryError("tangent of SN*H for point H implemented on surfaces")
        xp, vp = H.state(0.0, cp.w + h)
        xm, vm = H.state(0.0, cp.w - h)
    else:
        xp, vp = H.state(cp.u + h, cp.w)
        xm, vm = H.state(cp.u - h, cp.w)
    dx = (xp - xm) / (2 * h)
    dv = (vp - vm) / (2 * h)
    if isinstance(model, FlatTorus):
        dx = model.log(xm, xp) / (2 * h)
    c = tangent_coords(model, x, v, dx, dv)
    return (c / np.linalg.norm(c))[None, :]


# ---------------------------------------------------------------------
# Sasaki distance


def _angle(a, b):
    # half-chord form keeps full precision for nearly parallel vectors
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b / np.linalg.norm(b, axis=-1, keepdims=True)
    return 2 * np.arctan2(np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1))


def sasaki_batch(model: ManifoldModel, X1, V1, X2, V2, return_flag: bool = False):
    """Sasaki distances between unit states, vectorized over leading axes.

    sqrt(d_base^2 + d_fiber^2), the fiber part being the angle between V2
    and V1 parallel-transported along the minimizing base geodesic.
    """
    X1, V1, X2, V2 = (np.asarray(a, float) for a in (X1, V1, X2, V2))
    flag = np.zeros(np.broadcast(X1[..., 0], X2[..., 0]).shape, bool)
    if isinstance(model, FlatTorus):
        d = np.linalg.norm(model.log(X1, X2), axis=-1)
        fib = _angle(V1, V2)
    elif isinstance(model, RoundSphere):
        R = model.radius
        c = np.clip(np.sum(X1 * X2, axis=-1) / R**2, -1, 1)
        d = R * np.arccos(c)
        W = X2 - c[..., None] * X1
        nW = np.linalg.norm(W, axis=-1, keepdims=True)
        U = np.where(nW > 1e-14, W / np.where(nW > 0, nW, 1), 0.0)
        ang = (d / R)[..., None]
        Ud = -np.sin(ang) * X1 / R + np.cos(ang) * U
        a = np.sum(V1 * U, axis=-1, keepdims=True)
        PV = V1 + a * (Ud - U)
        fib = _angle(PV, V2)
        flag = d > 0.9 * np.pi * R
        fib = np.where(flag, _angle(V1, V2), fib)
    elif isinstance(model, HyperbolicHalfPlane):
        d = model.distance(X1, X2)
        U1 = model.log(X1, X2)
        U2 = -model.log(X2, X1)
        small = d < 1e-13
        a1 = np.arctan2(V1[..., 1], V1[..., 0]) - np.arctan2(U1[..., 1], U1[..., 0])
        a2 = np.arctan2(V2[..., 1], V2[..., 0]) - np.arctan2(U2[..., 1], U2[..., 0])
        direct = np.arctan2(V2[..., 1], V2[..., 0]) - np.arctan2(V1[..., 1], V1[..., 0])
        diff = np.where(small, direct, a2 - a1)
        fib = np.abs((diff + np.pi) % (2 * np.pi) - np.pi)
    else:
        shp = np.broadcast(X1[..., 0], X2[..., 0]).shape
        X1b, V1b = np.broadcast_to(X1, shp + X1.shape[-1:]), np.broadcast_to(V1, shp + V1.shape[-1:])
        X2b, V2b = np.broadcast_to(X2, shp + X2.shape[-1:]), np.broadcast_to(V2, shp + V2.shape[-1:])
        d = np.empty(shp)
        fib = np.empty(shp)
        for idx in np.ndindex(shp):
            x1, v1, x2, v2 = X1b[idx], V1b[idx], X2b[idx], V2b[idx]
            d[idx] = model.distance(x1, x2)
            pv = model.transport(x1, x2, v1)
            c = model.inner(x2, pv, v2) / (model.norm(x2, pv) * model.norm(x2, v2))
            fib[idx] = np.arccos(np.clip(c, -1, 1))
        flag = d > 0.9 * model.injectivity_radius()
    out = np.sqrt(d**2 + fib**2)
    if return_flag:
        return out, flag
    return out


def sasaki_distance(model: ManifoldModel, rho1: PhasePoint, rho2: PhasePoint, return_flag: bool = False):
    d, f = sasaki_batch(model, rho1.x, rho1.velocity(model), rho2.x, rho2.velocity(model), return_flag=True)
    if f:
        warnings.warn("base distance beyond injectivity estimate: chordal fallback used")
    if return_flag:
        return float(d), bool(f)
    return float(d)


# ---------------------------------------------------------------------
# proxy index for neighbour queries


class ProxyIndex:
    """Neighbour search over unit states through a Euclidean proxy embedding.

    The proxy distance is at most ``lipschitz`` times the Sasaki distance, so
    a proxy ball of radius ``lipschitz * r`` contains every Sasaki r-neighbour;
    candidates are then confirmed with the exact Sasaki distance.  Models
    without a proxy fall back to brute force.
    """

    def __init__(self, model: ManifoldModel, X, V):
        self.model = model
        self.X = np.asarray(X, float)
        self.V = np.asarray(V, float)
        self.tree = None
        self.lipschitz = np.inf
        P = self._proxy(self.X, self.V)
        if P is not None:
            if isinstance(model, FlatTorus):
                box = np.concatenate([model.periods, np.full(model.dim, 1e6)])
                P = np.mod(P, box)
                self.tree = cKDTree(P, boxsize=box)
                self._box = box
            else:
                self.tree = cKDTree(P)
                self._box = None

    def _proxy(self, X, V):
        if isinstance(self.model, FlatTorus):
            self.lipschitz = 1.0
            return np.concatenate([np.mod(X, self.model.periods), V + 1e5], axis=-1)
        if isinstance(self.model, RoundSphere):
            self.lipschitz = 2.5
            return np.concatenate([X, V], axis=-1)
        return None

    def query(self, X, V, r):
        """List (per query) of indices within Sasaki distance r, with distances."""
        X = np.asarray(X, float).reshape(-1, self.X.shape[-1])
        V = np.asarray(V, float).reshape(-1, self.V.shape[-1])
        if self.tree is None:
            D = sasaki_batch(self.model, X[:, None], V[:, None], self.X[None], self.V[None])
            return [(np.flatnonzero(row <= r), row[row <= r]) for row in D]
        P = self._proxy(X, V)
        if self._box is not None:
            P = np.mod(P, self._box)
        cand = self.tree.query_ball_point(P, self.lipschitz * r)
        out = []
        for i, c in enumerate(cand):
            if not c:
                out.append((np.empty(0, int), np.empty(0)))
                continue
            c = np.asarray(c)
            d = sasaki_batch(self.model, X[i], V[i], self.X[c], self.V[c])
            keep = d <= r
            out.append((c[keep], d[keep]))
        return out

    def candidates(self, X, V, r):
        """Boolean mask of queries that have any proxy neighbour (cheap prefilter)."""
        X = np.asarray(X, float).reshape(-1, self.X.shape[-1])
        V = np.asarray(V, float).reshape(-1, self.V.shape[-1])
        if self.tree is None:
            return np.ones(len(X), bool)
        P = self._proxy(X, V)
        if self._box is not None:
            P = np.mod(P, self._box)
        d, _ = self.tree.query(P, k=1, distance_upper_bound=self.lipschitz * r)
        return np.isfinite(d)


# ---------------------------------------------------------------------
# defining function


@dataclass
class DefiningFunction:
    H: Submanifold
    evaluate: Callable
    delta_F: float
    ratio_range: tuple
    right_inverse_bound: float

    def __call__(self, x, v):
        return self.evaluate(np.asarray(x, float), np.asarray(v, float))


def _nearest_on_curve(H, x, grid):
    model = H.model
    xs = np.array([H.param(u) for u in grid])
    if isinstance(model, (FlatTorus, RoundSphere, HyperbolicHalfPlane)):
        d = model.distance(xs, np.broadcast_to(x, xs.shape))
    else:
        d = np.array([model.distance(p, x) for p in xs])
    i = int(np.argmin(d))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    if b > a:
        res = optimize.minimize_scalar(lambda u: float(model.distance(H.param(u), x)), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12})
        return float(res.x)
    return float(grid[i])


def base_defining_components(H: Submanifold, x, v):
    """Defining-function components at the unit state (x, v)."""
    model = H.model
    if H.kind == "point":
        E = H.fiber_frame()
        x0 = H.base_point
        w = model.log(x0, x)
        if isinstance(model, RoundSphere):
            return E @ w
        g = model.state_metric(x0)
        return E @ g @ w
    grid = np.linspace(*H.domain, 257)
    if H.periodic:
        grid = grid[:-1]
    u = _nearest_on_curve(H, x, grid)
    xu = H.param(u)
    nu = H.normal(u)
    T = H.unit_tangent(u)
    lg = model.log(xu, x)
    f1 = float(np.sign(model.inner(xu, lg, nu)) * model.norm(xu, lg))
    pv = model.transport(x, xu, v)
    f2 = float(model.inner(xu, pv, T) / model.norm(xu, pv))
    return np.array([f1, f2])


def distance_to_snh(H: Submanifold, x, v, sample=None) -> float:
    """Brute-force Sasaki distance from (x, v) to SN*H with local refinement."""
    model = H.model
    if sample is None:
        sample = sample_snh(H, 2e-3 if H.kind == "point" else 1e-2)
    Xs = np.array([c.rho.x for c in sample])
    Vs = np.array([c.rho.velocity(model) for c in sample])
    d = sasaki_batch(model, x, v, Xs, Vs)
    i = int(np.argmin(d))
    best = float(d[i])
    c = sample[i]
    if H.kind == "point" and model.dim == 2:
        step = 2 * np.pi / len(sample)

        def f(th):
            xx, vv = H.state(0.0, th)
            return float(sasaki_batch(model, x, v, xx, vv))

        res = optimize.minimize_scalar(f, bounds=(c.w - step, c.w + step), method="bounded", options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    elif H.kind == "curve":
        grid_step = (H.domain[1] - H.domain[0]) / max(1, len(sample) // 2)

        def f(u):
            xx, vv = H.state(u, c.w)
            return float(sasaki_batch(model, x, v, xx, vv))

        lo, hi = c.u - 2 * grid_step, c.u + 2 * grid_step
        if not H.periodic:
            lo, hi = max(lo, H.domain[0]), min(hi, H.domain[1])
        res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def _perturb(model, x, v, base_len, fib_angle, rng):
    """Move (x, v) a base distance along a random direction, then rotate the fiber."""
    if model.dim != 2:
        raise GeometryError("perturbations implemented on surfaces")
    th = rng.uniform(0, 2 * np.pi)
    w = np.cos(th) * v + np.sin(th) * model.rotate90(x, v)
    x1, w1 = flow_states(model, x, w, base_len)
    pv = model.transport(x, x1, v) if base_len > 0 else v
    pv = pv / model.norm(x1, pv)
    v1 = np.cos(fib_angle) * pv + np.sin(fib_angle) * model.rotate90(x1, pv)
    return model.wrap(x1), v1


def defining_function(H: Submanifold, rng=None, samples: int = 48, delta_max: float = 1.0, rounds: int = 6) -> DefiningFunction:
    """Defining function of SN*H with a sampled comparability radius.

    Base components come from H (normal coordinates at a point H; signed
    distance for a curve) and fiber components measure the tangential part
    of the covector; the comparability radius is found by bisection.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    model = H.model
    snh = sample_snh(H, 0.25)
    dense = sample_snh(H, 2e-3 if H.kind == "point" else 1e-2)

    def F(x, v):
        return base_defining_components(H, x, v)

    def ratios(delta):
        out = []
        for _ in range(samples):
            c = snh[rng.integers(len(snh))]
            s = delta * rng.uniform(0.05, 1.0)
            mix = rng.uniform(0, 1)
            x1, v1 = _perturb(model, c.rho.x, c.rho.velocity(model), s * np.sqrt(mix), s * np.sqrt(1 - mix), rng)
            d = distance_to_snh(H, x1, v1, dense)
            if d < 1e-12:
                continue
            out.append(np.linalg.norm(F(x1, v1)) / d)
        return np.array(out)

    lo, hi = 0.0, delta_max
    rr = ratios(hi)
    if np.all((rr >= 0.5) & (rr <= 2.0)):
        lo = hi
        best = rr
    else:
        best = None
        probe = hi / 2
        for _ in range(rounds):
            rr = ratios(probe)
            if np.all((rr >= 0.5) & (rr <= 2.0)):
                lo, best = probe, rr
                probe = 0.5 * (probe + hi)
            else:
                hi = probe
                probe = 0.5 * (lo + probe)
        if best is None:
            raise GeometryError("defining-function comparability fails at all tested radii")
    # on SN*H itself F vanishes (up to the ~sqrt(eps) accuracy of the bounded nearest-point search)
    zero = max(np.linalg.norm(F(c.rho.x, c.rho.velocity(model))) for c in snh[:16])
    if zero > 1e-6:
        raise GeometryError(f"defining function does not vanish on SN*H ({zero:.2e})")
    return DefiningFunction(H, F, lo, (float(best.min()), float(best.max())), float(1.0 / best.min()))


# ---------------------------------------------------------------------
# tubes


@dataclass(frozen=True)
class Tube:
    """Flow-out over |t| <= tau + r of the r-slice around ``center``."""

    center: ConormalPoint
    tau: float
    r: float
    id: int


def tube_membership(model: ManifoldModel, tube: Tube, q: PhasePoint) -> bool:
    """Whether q lies in the tube, by orbit sampling at step r/4."""
    T = tube.tau + tube.r
    n = int(np.ceil(2 * T / (tube.r / 4))) + 1
    ts = np.linspace(-T, T, n)
    v = q.velocity(model)
    X, V = flow_states(model, np.broadcast_to(q.x, (n, len(q.x))), np.broadcast_to(v, (n, len(v))), ts)
    c = tube.center.rho
    d = sasaki_batch(model, X, V, c.x, c.velocity(model))
    return bool(np.min(d) < tube.r)


def tau_inj(H: Submanifold, spacing: float = 0.05, tol: float = 0.02, rounds: int = 6, cap: float = 1.0) -> float:
    """Lower estimate of the largest tau <= cap with an injective flow-out of SN*H.

    Flow-outs of an SN*H net over (-tau, tau) are searched for collisions:
    pairs of samples that land within ``tol`` of each other although their
    (t, point) labels are far apart.  ``tol`` must exceed the net
    resolution after flowing (it is floored at ``spacing``); near focal
    sets the flow spreads the net and a larger value is needed.
    """
    model = H.model
    # a collision is only visible to the net if tol exceeds the sample spacing
    tol = max(tol, spacing)
    snh = sample_snh(H, spacing)
    X0 = np.array([c.rho.x for c in snh])
    V0 = np.array([c.rho.velocity(model) for c in snh])
    dt = spacing

    def collides(tau):
        ts = np.arange(-tau, tau + 1e-12, dt)
        X, V = flow_states(model, X0[:, None, :], V0[:, None, :], ts[None, :])
        X = X.reshape(-1, X0.shape[-1])
        V = V.reshape(-1, V0.shape[-1])
        lab_t = np.tile(ts, len(snh))
        lab_q = np.repeat(np.arange(len(snh)), len(ts))
        idx = ProxyIndex(model, X, V)
        hits = idx.query(X, V, tol)
        sep = 3 * max(dt, spacing)
        for i, (js, _) in enumerate(hits):
            for j in js:
                if j <= i:
                    continue
                dq = sasaki_batch(model, X0[lab_q[i]], V0[lab_q[i]], X0[lab_q[j]], V0[lab_q[j]])
                if abs(lab_t[i] - lab_t[j]) + dq > sep:
                    return True
        return False

    if not collides(cap):
        return cap
    lo, hi = 0.0, cap
    for _ in range(rounds):
        mid = 0.5 * (lo + hi)
        if collides(mid):
            hi = mid
        else:
            lo = mid
    return lo


# ---------------------------------------------------------------------
# splitting classification


@dataclass
class SplittingClass:
    rho: object
    m_plus: int
    m_minus: int
    in_M_H: bool
    in_S_H: bool
    in_A_H: bool
    theta: Optional[tuple] = None
    indeterminate: bool = False
    angles: dict = field(default_factory=dict)


def _intersection_dim(T, E):
    ang = linalg.subspace_angles(T.T, E.T)
    k = int(np.sum(ang < ANGLE_TOL))
    gray = bool(np.any((ang >= ANGLE_TOL) & (ang <= GRAY_TOL)))
    return k, gray, ang


def _intersection_basis(T, E):
    # vectors of span(T) within angle tolerance of span(E)
    QT = linalg.orth(T.T)
    QE = linalg.orth(E.T)
    U, s, Vt = np.linalg.svd(QT.T @ QE)
    keep = np.arccos(np.clip(s, -1, 1)) < ANGLE_TOL
    return (QT @ U[:, keep]).T


def classify_splitting(rho, splitting: SplittingEstimate, tangent_basis) -> SplittingClass:
    """N_+- = T SN*H intersected with E_+-, and the M_H / S_H / A_H flags.

    ``tangent_basis`` holds T_rho SN*H as rows, in the same coordinates as
    the splitting's subspaces.
    """
    if not splitting.usable:
        raise PreconditionError("splitting estimate is not usable (non-hyperbolic); classification refused")
    T = np.atleast_2d(np.asarray(tangent_basis, float))
    mp, gp, ap = _intersection_dim(T, splitting.E_plus)
    mm, gm, am = _intersection_dim(T, splitting.E_minus)
    Np = _intersection_basis(T, splitting.E_plus)
    Nm = _intersection_basis(T, splitting.E_minus)
    both = np.vstack([Np, Nm]) if (len(Np) + len(Nm)) else np.zeros((0, T.shape[1]))
    span = np.linalg.matrix_rank(both, tol=1e-6) if len(both) else 0
    in_M = mp > 0 and mm > 0
    in_S = span == np.linalg.matrix_rank(T)
    return SplittingClass(rho=rho, m_plus=mp, m_minus=mm, in_M_H=in_M, in_S_H=in_S, in_A_H=in_M and in_S,
                          indeterminate=gp or gm, angles={"plus": ap, "minus": am})


def theta_angles(v, splitting: SplittingEstimate, flow_direction=None):
    """(Theta^+, Theta^-) of v: ratios of the oblique projections onto E_- and E_+."""
    v = np.asarray(v, float)
    Ep, Em = splitting.E_plus, splitting.E_minus
    basis = np.vstack([Ep, Em])
    if flow_direction is not None:
        fd = np.asarray(flow_direction, float)
        fd = fd / np.linalg.norm(fd)
        if np.linalg.norm(v - (v @ fd) * fd) < 1e-12:
            raise PreconditionError("v lies in the span of the flow direction")
        basis = np.vstack([basis, fd])
    coef, *_ = np.linalg.lstsq(basis.T, v, rcond=None)
    kp = len(Ep)
    pp = coef[:kp] @ Ep
    pm = coef[kp : kp + len(Em)] @ Em
    np_, nm = np.linalg.norm(pp), np.linalg.norm(pm)
    th_plus = nm / np_ if np_ > 0 else np.inf
    th_minus = np_ / nm if nm > 0 else np.inf
    return float(th_plus), float(th_minus)
