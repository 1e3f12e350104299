"""Analytic model manifolds.

Every model works with two coordinate systems:

* *chart* coordinates, in which :meth:`ManifoldModel.metric` returns the
  ``n x n`` metric tensor (used by the finite-difference Christoffel /
  Riemann machinery and by the Laplacian checks), and
* *state* coordinates, in which geodesics, tangent vectors and frames are
  represented.  For every model except the sphere these coincide with the
  chart; the sphere uses its embedding in ``R^{n+1}``.

Tangent vectors are always stored as contravariant vectors in state
coordinates.  Covectors are produced on demand with :meth:`flat`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

FD_STEP = 1e-5


class GeometryError(ValueError):
    """Raised for out-of-domain points or degenerate geometric input."""


class FrameDriftError(GeometryError):
    pass


class TubeOverlapError(GeometryError):
    pass


@dataclass
class CurvatureData:
    x: np.ndarray
    frame: np.ndarray  # rows E_1..E_n, E_n the geodesic direction
    R: np.ndarray  # (n-1, n-1) in the parallel frame
    gauss: Optional[float] = None


def _rot90(v):
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


class ManifoldModel:
    """Base class for the analytic models.

    Subclasses override the closed-form hooks they can provide; anything
    missing falls back on finite differences of :meth:`metric`.
    """

    name: str = "abstract"
    curvature_kind: str = "variable"
    has_exact_flow: bool = False

    def __init__(self, dim: int):
        self.dim = int(dim)

    # -- chart level -------------------------------------------------
    @property
    def state_dim(self) -> int:
        return self.dim

    def metric(self, x) -> np.ndarray:
        raise NotImplementedError

    def check_domain(self, x) -> None:
        pass

    def christoffel(self, x) -> np.ndarray:
        """Christoffel symbols ``G[k, i, j]`` in chart coordinates."""
        return christoffel_fd(self.metric, np.asarray(x, float))

    def chart_to_state(self, x):
        return np.asarray(x, float)

    def state_to_chart(self, x):
        return np.asarray(x, float)

    # -- state level -------------------------------------------------
    def state_metric(self, x):
        """Metric in state coordinates, batched over leading axes."""
        x = np.asarray(x, float)
        if x.ndim == 1:
            return self.metric(x)
        flat = x.reshape(-1, x.shape[-1])
        g = np.array([self.metric(p) for p in flat])
        return g.reshape(x.shape[:-1] + g.shape[-2:])

    def inner(self, x, a, b):
        g = self.state_metric(x)
        return np.einsum("...i,...ij,...j->...", a, g, b)

    def norm(self, x, a):
        return np.sqrt(np.maximum(self.inner(x, a, a), 0.0))

    def flat(self, x, v):
        """Lower an index: vector -> covector."""
        return np.einsum("...ij,...j->...i", self.state_metric(x), v)

    def sharp(self, x, xi):
        return np.linalg.solve(self.state_metric(x), xi[..., None])[..., 0]

    def project(self, x, v):
        """Project state data onto the manifold and its tangent space."""
        return x, v

    def normalize(self, x, v):
        x, v = self.project(x, v)
        return x, v / self.norm(x, v)[..., None]

    def wrap(self, x):
        return x

    def rotate90(self, x, v):
        """Metric rotation by +pi/2 in a 2-dimensional tangent space."""
        if self.dim != 2:
            raise GeometryError("rotate90 is only defined for surfaces")
        g = self.state_metric(x)
        g11, g22 = g[..., 0, 0], g[..., 1, 1]
        out = np.empty_like(v)
        out[..., 0] = -v[..., 1] * np.sqrt(g22 / g11)
        out[..., 1] = v[..., 0] * np.sqrt(g11 / g22)
        return out

    def perp_frame(self, x, v) -> np.ndarray:
        """Orthonormal vectors E_1..E_{n-1} perpendicular to unit ``v``."""
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        if self.dim == 2:
            return self.rotate90(x, v)[None, :]
        g = self.state_metric(x)
        basis = [v]
        for e in np.eye(len(x)):
            w = e.copy()
            for b in basis:
                w = w - (w @ g @ b) * b
            nw = np.sqrt(max(w @ g @ w, 0.0))
            if nw > 1e-6:
                basis.append(w / nw)
            if len(basis) == self.dim:
                break
        return np.array(basis[1:])

    def geodesic_accel(self, x, v):
        G = self.christoffel(x)
        return -np.einsum("kij,i,j->k", G, v, v)

    def transport_rhs(self, x, v, E):
        """d/dt of vectors ``E`` (rows) parallel along velocity ``v``."""
        G = self.christoffel(x)
        return -np.einsum("kij,i,mj->mk", G, v, E)

    def exact_geodesic(self, x, v, t):
        raise NotImplementedError

    def exact_transport(self, x, v, E, t):
        """Parallel transport of rows ``E`` along the geodesic (x, v) for time t."""
        raise NotImplementedError

    def log(self, x, y):
        raise NotImplementedError

    def distance(self, x, y):
        w = self.log(x, y)
        return self.norm(x, w)

    def transport(self, x, y, w):
        """Parallel transport of ``w`` from x to y along the minimizing geodesic."""
        x = np.asarray(x, float)
        u = self.log(x, y)
        d = self.norm(x, u)
        if d < 1e-14:
            return np.array(w, float)
        u = u / d
        if self.dim == 2:
            a = self.inner(x, w, u)
            b = self.inner(x, w, self.rotate90(x, u))
            xy, uy = self.exact_geodesic(x, u, d)
            return a * uy + b * self.rotate90(xy, uy)
        return self.exact_transport(x, u, np.atleast_2d(w), d)[0]

    def injectivity_radius(self) -> float:
        return np.inf

    # -- curvature ---------------------------------------------------
    def gauss_curvature(self, x) -> float:
        """Gauss curvature at a state point (surfaces)."""
        return riemann_sectional_fd(self, self.state_to_chart(x), 0, 1)

    def curvature_matrix(self, x, v, E) -> np.ndarray:
        """R_ij = <R(E_i, v) v, E_j> for rows E (perpendicular frame)."""
        k = len(E)
        if self.curvature_kind != "variable" and hasattr(self, "K"):
            return self.K * np.eye(k)
        if self.dim == 2:
            return np.array([[self.gauss_curvature(x)]])
        return curvature_matrix_fd(self, x, v, E)


# ---------------------------------------------------------------------
# finite-difference machinery (chart coordinates)


def metric_derivative_fd(metric, x, h=FD_STEP):
    n = len(x)
    dg = np.empty((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        dg[k] = (metric(x + e) - metric(x - e)) / (2 * h)
    return dg


def christoffel_fd(metric, x, h=FD_STEP):
    g = metric(x)
    ginv = np.linalg.inv(g)
    dg = metric_derivative_fd(metric, x, h)  # dg[k, i, j] = d_k g_ij
    # Gamma^l_ij = 1/2 g^lk (d_i g_kj + d_j g_ki - d_k g_ij)
    # t[k, i, j] = d_i g_kj + d_j g_ki - d_k g_ij
    t = np.einsum("ikj->kij", dg) + np.einsum("jki->kij", dg) - dg
    return 0.5 * np.einsum("lk,kij->lij", ginv, t)


def riemann_fd(model, x, h=1e-4):
    """Riemann tensor R^l_{ijk} in chart coordinates.

    Convention: R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z,
    so that the round sphere has positive sectional curvature.
    """
    x = np.asarray(x, float)
    n = len(x)
    G = model.christoffel(x)
    dG = np.empty((n, n, n, n))
    for m in range(n):
        e = np.zeros(n)
        e[m] = h
        dG[m] = (model.christoffel(x + e) - model.christoffel(x - e)) / (2 * h)
    # R^l_{ijk} = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik
    R = (
        np.einsum("iljk->lijk", dG)
        - np.einsum("jlik->lijk", dG)
        + np.einsum("lim,mjk->lijk", G, G)
        - np.einsum("ljm,mik->lijk", G, G)
    )
    return R


def riemann_sectional_fd(model, x, a, b):
    x = np.asarray(x, float)
    R = riemann_fd(model, x)
    g = model.metric(x)
    n = len(x)
    X = np.zeros(n)
    Y = np.zeros(n)
    X[a] = 1.0
    Y[b] = 1.0
    # <R(X,Y)Y, X>
    RXYY = np.einsum("lijk,i,j,k->l", R, X, Y, Y)
    num = RXYY @ g @ X
    den = (X @ g @ X) * (Y @ g @ Y) - (X @ g @ Y) ** 2
    return float(num / den)


def curvature_matrix_fd(model, x, v, E):
    R = riemann_fd(model, model.state_to_chart(x))
    g = model.metric(model.state_to_chart(x))
    # <R(E_i, v) v, E_j>
    RE = np.einsum("lijk,mi,j,k->ml", R, E, v, v)
    M = RE @ g @ E.T
    return 0.5 * (M + M.T)


# ---------------------------------------------------------------------
# models


class FlatTorus(ManifoldModel):
    name = "flat_torus"
    curvature_kind = "flat"
    has_exact_flow = True
    K = 0.0

    def __init__(self, dim: int = 2, periods=2 * np.pi):
        super().__init__(dim)
        self.periods = np.broadcast_to(np.asarray(periods, float), (dim,)).copy()

    def metric(self, x):
        return np.eye(self.dim)

    def state_metric(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim))

    def inner(self, x, a, b):
        return np.sum(np.asarray(a) * np.asarray(b), axis=-1)

    def christoffel(self, x):
        return np.zeros((self.dim,) * 3)

    def wrap(self, x):
        return np.mod(x, self.periods)

    def exact_geodesic(self, x, v, t):
        t = np.asarray(t, float)[..., None]
        return x + t * v, np.broadcast_to(v, np.broadcast(x + t * v).shape).copy()

    def exact_transport(self, x, v, E, t):
        return np.array(E, float)

    def log(self, x, y):
        d = np.asarray(y, float) - np.asarray(x, float)
        return d - self.periods * np.round(d / self.periods)

    def injectivity_radius(self):
        return 0.5 * float(self.periods.min())

    def gauss_curvature(self, x):
        return 0.0


class RoundSphere(ManifoldModel):
    """Round sphere of radius ``radius`` embedded in R^{n+1}."""

    name = "round_sphere"
    curvature_kind = "constant_positive"
    has_exact_flow = True

    def __init__(self, dim: int = 2, radius: float = 1.0):
        super().__init__(dim)
        self.radius = float(radius)
        self.K = 1.0 / self.radius**2

    @property
    def state_dim(self):
        return self.dim + 1

    # chart: hyperspherical angles (theta_1..theta_{n-1}, phi)
    def metric(self, x):
        x = np.asarray(x, float)
        diag = np.empty(self.dim)
        s = self.radius**2
        for i in range(self.dim):
            diag[i] = s
            s = s * np.sin(x[i]) ** 2
        return np.diag(diag)

    def christoffel_exact(self, x):
        # diagonal metric: d_k g_ii = 2 cot(x_k) g_ii for k < i, else 0
        x = np.asarray(x, float)
        n = self.dim
        g = np.diag(self.metric(x))
        cot = np.cos(x) / np.sin(x)
        G = np.zeros((n, n, n))
        for i in range(n):
            for k in range(i):
                G[i, i, k] = G[i, k, i] = cot[k]
                G[k, i, i] = -g[i] * cot[k] / g[k]
        return G

    def chart_to_state(self, x):
        x = np.asarray(x, float)
        out = np.empty(x.shape[:-1] + (self.dim + 1,))
        s = np.ones(x.shape[:-1])
        for i in range(self.dim - 1):
            out[..., i] = s * np.cos(x[..., i])
            s = s * np.sin(x[..., i])
        out[..., self.dim - 1] = s * np.cos(x[..., -1])
        out[..., self.dim] = s * np.sin(x[..., -1])
        return self.radius * out

    def state_to_chart(self, p):
        p = np.asarray(p, float) / self.radius
        n = self.dim
        ang = np.empty(p.shape[:-1] + (n,))
        for i in range(n - 1):
            tail = np.linalg.norm(p[..., i + 1 :], axis=-1)
            ang[..., i] = np.arctan2(tail, p[..., i])
        ang[..., n - 1] = np.arctan2(p[..., n], p[..., n - 1])
        return ang

    def state_metric(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.eye(self.dim + 1), x.shape[:-1] + (self.dim + 1,) * 2)

    def inner(self, x, a, b):
        return np.sum(np.asarray(a) * np.asarray(b), axis=-1)

    def flat(self, x, v):
        return np.array(v, float)

    def sharp(self, x, xi):
        return np.array(xi, float)

    def project(self, x, v):
        x = np.asarray(x, float)
        x = self.radius * x / np.linalg.norm(x, axis=-1, keepdims=True)
        v = np.asarray(v, float)
        v = v - (np.sum(v * x, axis=-1, keepdims=True) / self.radius**2) * x
        return x, v

    def rotate90(self, x, v):
        if self.dim != 2:
            raise GeometryError("rotate90 is only defined for surfaces")
        return np.cross(np.asarray(x) / self.radius, v)

    def perp_frame(self, x, v):
        if self.dim == 2:
            return self.rotate90(x, v)[None, :]
        basis = [np.asarray(x) / self.radius, np.asarray(v, float)]
        for e in np.eye(self.dim + 1):
            w = e - sum((e @ b) * b for b in basis)
            nw = np.linalg.norm(w)
            if nw > 1e-6:
                basis.append(w / nw)
            if len(basis) == self.dim + 1:
                break
        return np.array(basis[2:])

    def geodesic_accel(self, x, v):
        return -(np.sum(v * v, axis=-1, keepdims=True) / self.radius**2) * x

    def transport_rhs(self, x, v, E):
        return -(E @ v)[:, None] * x[None, :] / self.radius**2

    def exact_geodesic(self, x, v, t):
        t = np.asarray(t, float)[..., None]
        a = t / self.radius
        xt = np.cos(a) * x + self.radius * np.sin(a) * v
        vt = -np.sin(a) * x / self.radius + np.cos(a) * v
        return xt, vt

    def exact_transport(self, x, v, E, t):
        # components along v rotate with the geodesic, the rest is constant
        E = np.atleast_2d(np.asarray(E, float))
        _, vt = self.exact_geodesic(x, v, t)
        a = E @ v
        return E - np.outer(a, v) + np.outer(a, vt)

    def log(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        c = np.clip(np.sum(x * y, axis=-1) / self.radius**2, -1.0, 1.0)
        th = np.arccos(c)
        w = y - c[..., None] * x
        nw = np.linalg.norm(w, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(nw > 1e-300, self.radius * th / np.where(nw > 0, nw, 1.0), 0.0)
        return w * scale[..., None]

    def distance(self, x, y):
        c = np.clip(np.sum(np.asarray(x) * np.asarray(y), axis=-1) / self.radius**2, -1, 1)
        return self.radius * np.arccos(c)

    def transport(self, x, y, w):
        x = np.asarray(x, float)
        u = self.log(x, y)
        d = np.linalg.norm(u)
        if d < 1e-14:
            return np.array(w, float)
        return self.exact_transport(x, u / d, np.atleast_2d(w), d)[0]

    def injectivity_radius(self):
        return np.pi * self.radius

    def gauss_curvature(self, x):
        return self.K

    def christoffel(self, x):
        return self.christoffel_exact(np.asarray(x, float))


class HyperbolicHalfPlane(ManifoldModel):
    """Upper half-plane model restricted to a bounding box."""

    name = "hyperbolic_half_plane"
    curvature_kind = "constant_negative"
    has_exact_flow = True
    K = -1.0

    def __init__(self, box=(-50.0, 50.0, 1e-6, 1e6)):
        super().__init__(2)
        self.box = tuple(float(b) for b in box)

    def check_domain(self, x):
        x = np.asarray(x, float)
        x0, x1, y0, y1 = self.box
        ok = (x[..., 0] >= x0) & (x[..., 0] <= x1) & (x[..., 1] >= y0) & (x[..., 1] <= y1)
        if not np.all(ok):
            raise GeometryError(f"point outside the half-plane patch {self.box}")

    def metric(self, x):
        x = np.asarray(x, float)
        if x[1] <= 0:
            raise GeometryError("half-plane metric needs y > 0")
        return np.eye(2) / x[1] ** 2

    def state_metric(self, x):
        x = np.asarray(x, float)
        y = x[..., 1]
        return np.eye(2) / (y**2)[..., None, None]

    def inner(self, x, a, b):
        return np.sum(np.asarray(a) * np.asarray(b), axis=-1) / np.asarray(x)[..., 1] ** 2

    def christoffel(self, x):
        y = x[1]
        G = np.zeros((2, 2, 2))
        G[0, 0, 1] = G[0, 1, 0] = -1.0 / y
        G[1, 0, 0] = 1.0 / y
        G[1, 1, 1] = -1.0 / y
        return G

    def rotate90(self, x, v):
        return _rot90(np.asarray(v, float))

    def geodesic_accel(self, x, v):
        y = x[..., 1]
        a = np.empty_like(v)
        a[..., 0] = 2 * v[..., 0] * v[..., 1] / y
        a[..., 1] = (v[..., 1] ** 2 - v[..., 0] ** 2) / y
        return a

    @staticmethod
    def _to_sl2(x, v):
        # g = n(x, y) k(phi), geodesic flow is right multiplication by diag(e^{t/2}, e^{-t/2})
        X, Y = x[..., 0], x[..., 1]
        theta = np.arctan2(v[..., 1], v[..., 0])
        phi = 0.5 * (theta - 0.5 * np.pi)
        sy = np.sqrt(Y)
        c, s = np.cos(phi), np.sin(phi)
        a11, a12, a22 = sy, X / sy, 1.0 / sy
        return (a11 * c - a12 * s, a11 * s + a12 * c, -a22 * s, a22 * c)

    def exact_geodesic(self, x, v, t):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        t = np.asarray(t, float)
        a, b, c, d = self._to_sl2(x, v)
        e = np.exp(0.5 * t)
        a, b, c, d = a * e, b / e, c * e, d / e
        den = c * 1j + d
        z = (a * 1j + b) / den
        w = 1j / den**2
        xt = np.stack([z.real, z.imag], axis=-1)
        vt = np.stack([w.real, w.imag], axis=-1)
        return xt, vt

    def log(self, x, y):
        """Inverse exponential map, vectorized over leading axes."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        x1, y1 = x[..., 0], x[..., 1]
        x2, y2 = y[..., 0], y[..., 1]
        d = self.distance(x, y)
        dx = x2 - x1
        vertical = np.abs(dx) < 1e-12 * np.maximum(1.0, np.abs(y2 - y1))
        safe = np.where(vertical, 1.0, dx)
        c = ((x2**2 + y2**2) - (x1**2 + y1**2)) / (2 * safe)
        tx, ty = y1, -(x1 - c)
        flip = np.sign(tx) != np.sign(dx)
        tx = np.where(flip, -tx, tx)
        ty = np.where(flip, -ty, ty)
        nt = np.hypot(tx, ty)
        ux = np.where(vertical, 0.0, y1 * tx / nt)
        uy = np.where(vertical, np.sign(y2 - y1) * y1, y1 * ty / nt)
        return np.stack([d * ux, d * uy], axis=-1)

    def distance(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        num = np.sum((x - y) ** 2, axis=-1)
        return np.arccosh(1 + num / (2 * x[..., 1] * y[..., 1]))

    def gauss_curvature(self, x):
        return -1.0


class WarpedProductSurface(ManifoldModel):
    """Surface ``dr^2 + f(r)^2 dtheta^2`` on (r_min, r_max) x S^1.

    Curvature is ``K = -f''/f``; geodesics have no closed form and are
    integrated numerically.
    """

    name = "warped_product"
    curvature_kind = "variable"

    def __init__(self, f: Callable, df: Callable, d2f: Callable, r_range=(0.1, 3.0), label="warped"):
        super().__init__(2)
        self.f, self.df, self.d2f = f, df, d2f
        self.r_range = tuple(r_range)
        self.label = label

    def check_domain(self, x):
        r = np.asarray(x)[..., 0]
        if np.any(r <= self.r_range[0]) or np.any(r >= self.r_range[1]):
            raise GeometryError(f"r outside {self.r_range}")

    def metric(self, x):
        return np.diag([1.0, self.f(x[0]) ** 2])

    def state_metric(self, x):
        x = np.asarray(x, float)
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = self.f(x[..., 0]) ** 2
        return g

    def christoffel(self, x):
        r = x[0]
        f, df = self.f(r), self.df(r)
        G = np.zeros((2, 2, 2))
        G[0, 1, 1] = -f * df
        G[1, 0, 1] = G[1, 1, 0] = df / f
        return G

    def geodesic_accel(self, x, v):
        r = x[..., 0]
        f, df = self.f(r), self.df(r)
        a = np.empty_like(v)
        a[..., 0] = f * df * v[..., 1] ** 2
        a[..., 1] = -2 * df / f * v[..., 0] * v[..., 1]
        return a

    def wrap(self, x):
        x = np.array(x, float)
        x[..., 1] = np.mod(x[..., 1], 2 * np.pi)
        return x

    def gauss_curvature(self, x):
        r = np.asarray(x)[..., 0]
        return -self.d2f(r) / self.f(r)

    def exact_geodesic(self, x, v, t):
        from .flow import rk4_geodesic

        return rk4_geodesic(self, x, v, t)

    def log(self, x, y):
        from scipy.optimize import least_squares

        x = np.asarray(x, float)
        y = np.asarray(y, float)
        dy = y - x
        dy[1] = (dy[1] + np.pi) % (2 * np.pi) - np.pi
        g = self.metric(x)
        w0 = dy.copy()

        def resid(w):
            L = np.sqrt(w @ g @ w)
            if L < 1e-14:
                return x - y
            xt, _ = self.exact_geodesic(x, w / L, L)
            r = xt - y
            r[1] = (r[1] + np.pi) % (2 * np.pi) - np.pi
            return r

        sol = least_squares(resid, w0, xtol=1e-13, ftol=1e-13)
        return sol.x


_REGISTRY: dict[str, Callable[..., ManifoldModel]] = {}


def register(name: str, factory: Callable[..., ManifoldModel]) -> None:
    _REGISTRY[name] = factory


def get_model(name: str, **params) -> ManifoldModel:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(**params)


def registered_models() -> list[str]:
    return sorted(_REGISTRY)


register("flat_torus", FlatTorus)
register("round_sphere", RoundSphere)
register("hyperbolic_half_plane", HyperbolicHalfPlane)
register(
    "catenoid_like",
    lambda **kw: WarpedProductSurface(np.cosh, np.sinh, np.cosh, label="catenoid_like", **kw),
)
register(
    "hyperbolic_cusp_like",
    lambda **kw: WarpedProductSurface(np.exp, np.exp, np.exp, label="hyperbolic_cusp_like", **kw),
)


# ---------------------------------------------------------------------
# operations


def metric_at(model: ManifoldModel, x) -> np.ndarray:
    x = np.asarray(x, float)
    model.check_domain(x)
    g = model.metric(x)
    if not np.allclose(g, g.T) or np.linalg.eigvalsh(g).min() <= 1e-10:
        raise GeometryError(f"metric not positive definite at {x}")
    return g


def curvature_matrix_along(model: ManifoldModel, x, v, frame, t: float = 0.0) -> CurvatureData:
    """Curvature matrix R(t) of a geodesic in its parallel frame.

    ``x, v`` is the geodesic's initial state and ``frame`` the perpendicular
    frame at time 0; both are advanced to time ``t`` first.
    """
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    E = np.atleast_2d(np.asarray(frame, float))
    if t != 0.0:
        E = model.exact_transport(x, v, E, t) if model.dim > 2 else None
        x, v = model.exact_geodesic(x, v, t)
        if E is None:
            E = model.perp_frame(x, v)
    full = np.vstack([E, v[None, :]])
    gram = np.array([[model.inner(x, a, b) for b in full] for a in full])
    drift = np.abs(gram - np.eye(len(full))).max()
    if drift > 1e-6:
        raise FrameDriftError(f"frame not orthonormal (drift {drift:.2e})")
    R = model.curvature_matrix(x, v, E)
    K = float(model.gauss_curvature(x)) if model.dim == 2 else None
    return CurvatureData(x=x, frame=full, R=R, gauss=K)


def _normal_geodesic_points(model, base, normal, sig):
    """Points exp_{base}(sig * normal) for each base point and each sigma."""
    pts = np.empty(base.shape[:1] + sig.shape + base.shape[1:])
    vel = np.empty_like(pts)
    for i in range(len(base)):
        sgn = np.sign(sig)
        sgn[sgn == 0] = 1.0
        p, w = model.exact_geodesic(
            np.broadcast_to(base[i], sig.shape + base.shape[1:]),
            sgn[:, None] * normal[i][None, :],
            np.abs(sig),
        )
        pts[i], vel[i] = p, w
    return pts


def _fermi_integral(model, x0, v0, s, a, b, nt, ns):
    # trapezoid in both directions; the area density J solves J'' + K J = 0 in sigma
    t = np.linspace(a, b, nt + 1)
    xs, vs = model.exact_geodesic(np.broadcast_to(x0, (len(t), len(x0))), np.broadcast_to(v0, (len(t), len(v0))), t)
    normals = np.array([model.rotate90(p, w) for p, w in zip(xs, vs)])
    total = 0.0
    for sgn in (1.0, -1.0):
        sig = np.linspace(0.0, s, ns + 1)
        half = np.linspace(0.0, s, 2 * ns + 1)
        pts = _normal_geodesic_points(model, xs, sgn * normals, half)
        K = np.array([[model.gauss_curvature(p) for p in row] for row in pts])
        h = s / ns
        J = np.empty((len(t), ns + 1))
        J[:, 0] = 1.0
        dJ = np.zeros(len(t))
        for k in range(ns):
            K0, Km, K1 = K[:, 2 * k], K[:, 2 * k + 1], K[:, 2 * k + 2]
            y, p = J[:, k], dJ
            k1y, k1p = p, -K0 * y
            k2y, k2p = p + 0.5 * h * k1p, -Km * (y + 0.5 * h * k1y)
            k3y, k3p = p + 0.5 * h * k2p, -Km * (y + 0.5 * h * k2y)
            k4y, k4p = p + h * k3p, -K1 * (y + h * k3y)
            J[:, k + 1] = y + h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
            dJ = p + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        if np.any(J <= 0):
            raise TubeOverlapError("Fermi coordinates degenerate: tube half-width past the focal radius")
        integrand = K[:, ::2] * J
        total += np.trapezoid(np.trapezoid(integrand, sig, axis=1), t)
    return total


def integrated_curvature(model: ManifoldModel, x0, v0, s: float, window=(0.0, 1.0), per_unit: int = 64) -> float:
    """Integral of the Gauss curvature over the Fermi tube of half-width ``s``.

    The tube is ``{exp_{gamma(t)}(sigma N(t)) : t in window, |sigma| <= s}``
    (no end caps).  Trapezoid rule on a ``per_unit`` x 64 grid, refined once
    and Richardson-extrapolated.
    """
    if model.dim != 2:
        raise GeometryError("integrated_curvature is implemented for surfaces")
    if s <= 0:
        raise GeometryError("half-width must be positive")
    kmax = getattr(model, "K", None)
    if kmax is not None and kmax > 0 and s >= 0.5 * np.pi / np.sqrt(kmax):
        raise TubeOverlapError("half-width exceeds the focal radius estimate")
    a, b = window
    x0, v0 = model.normalize(np.asarray(x0, float), np.asarray(v0, float))
    nt = max(2, int(np.ceil(per_unit * (b - a))))
    coarse = _fermi_integral(model, x0, v0, s, a, b, nt, 64)
    fine = _fermi_integral(model, x0, v0, s, a, b, 2 * nt, 128)
    return float((4 * fine - coarse) / 3)


# ---------------------------------------------------------------------
# Gauss-Bonnet fixtures


def polygon_angles(model: ManifoldModel, vertices) -> np.ndarray:
    """Interior angles of the geodesic polygon with the given state vertices."""
    V = [np.asarray(p, float) for p in vertices]
    out = []
    m = len(V)
    for i in range(m):
        p = V[i]
        a = model.log(p, V[i - 1])
        b = model.log(p, V[(i + 1) % m])
        c = model.inner(p, a, b) / (model.norm(p, a) * model.norm(p, b))
        out.append(np.arccos(np.clip(c, -1, 1)))
    return np.array(out)


def _area_density(model, q, dq_du, dq_dw):
    if isinstance(model, RoundSphere):
        return np.linalg.norm(np.cross(dq_du, dq_dw))
    g = model.state_metric(q)
    G = np.array([[dq_du @ g @ dq_du, dq_du @ g @ dq_dw], [dq_dw @ g @ dq_du, dq_dw @ g @ dq_dw]])
    return np.sqrt(max(np.linalg.det(G), 0.0))


def polygon_curvature_integral(model: ManifoldModel, vertices, order: int = 32, with_area=False):
    """Integral of K dA over a geodesic polygon (fan triangulation from vertex 0).

    Each triangle (v0, va, vb) is parametrized by geodesic rays from v0 to
    the edge va-vb and integrated with tensor Gauss-Legendre quadrature.
    """
    V = [np.asarray(p, float) for p in vertices]
    xg, wg = np.polynomial.legendre.leggauss(order)
    xg = 0.5 * (xg + 1)
    wg = 0.5 * wg
    h = 1e-6
    total = 0.0
    area = 0.0

    def q(v0, va, vb, u, w):
        e = model.log(va, vb)
        L = model.norm(va, e)
        pu, _ = model.exact_geodesic(va, e / L, u * L)
        r = model.log(v0, pu)
        d = model.norm(v0, r)
        if d * w < 1e-15:
            return v0
        p, _ = model.exact_geodesic(v0, r / d, w * d)
        return p

    for k in range(1, len(V) - 1):
        v0, va, vb = V[0], V[k], V[k + 1]
        for u, wu in zip(xg, wg):
            for w, ww in zip(xg, wg):
                p = q(v0, va, vb, u, w)
                du = (q(v0, va, vb, u + h, w) - q(v0, va, vb, u - h, w)) / (2 * h)
                dw = (q(v0, va, vb, u, w + h) - q(v0, va, vb, u, w - h)) / (2 * h)
                dens = _area_density(model, p, du, dw)
                total += wu * ww * model.gauss_curvature(p) * dens
                area += wu * ww * dens
    if with_area:
        return total, area
    return total


def gauss_bonnet_defect(model: ManifoldModel, vertices) -> dict:
    """Compare the angle excess of a geodesic polygon with the curvature integral."""
    ang = polygon_angles(model, vertices)
    m = len(ang)
    excess = float(ang.sum() - (m - 2) * np.pi)
    kint = polygon_curvature_integral(model, vertices)
    return {"angles": ang, "excess": excess, "curvature_integral": kint, "mismatch": excess - kint}
