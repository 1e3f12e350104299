"""Explicit eigenfunctions on model manifolds, their averages over
submanifolds, and growth-law fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .conormal import Submanifold
from .manifold import FlatTorus, ManifoldModel, RoundSphere
from .quadrature import adaptive_gauss_legendre

MAX_DEGREE = 2000
DEFAULT_DEGREES = (16, 23, 33, 47, 67, 96, 137, 195, 280, 400)


class PrecisionError(ValueError):
    pass


class FitError(ValueError):
    pass


@dataclass
class Eigenfunction:
    """phi with -Lap phi = lam^2 phi; ``evaluate`` takes points of shape (..., d)."""

    model: ManifoldModel
    lam: float
    evaluate: Callable
    label: str
    l2_norm: float = 1.0
    sup: Optional[float] = None

    def __call__(self, x):
        return self.evaluate(np.asarray(x, float))


# ---------------------------------------------------------------------
# torus


def torus_eigenfunction(m, model: Optional[FlatTorus] = None) -> Eigenfunction:
    """exp(i <m, x>) / (2 pi)^{n/2} on the standard torus; lam = |m|."""
    m = np.asarray(m, int)
    model = FlatTorus(len(m)) if model is None else model
    if not np.allclose(model.periods, 2 * np.pi):
        raise ValueError("torus eigenfunctions assume periods 2 pi")
    c = (2 * np.pi) ** (-len(m) / 2)

    def ev(x, _m=m.astype(float), _c=c):
        return _c * np.exp(1j * (x @ _m))

    return Eigenfunction(model, float(np.linalg.norm(m)), ev, f"torus{tuple(m.tolist())}", 1.0, c)


# ---------------------------------------------------------------------
# sphere


def legendre(l: int, t):
    """P_l(t) by the three-term recurrence (vectorized in t)."""
    t = np.asarray(t, float)
    p0, p1 = np.ones_like(t), t.copy()
    if l == 0:
        return p0
    for k in range(1, l):
        p0, p1 = p1, ((2 * k + 1) * t * p1 - k * p0) / (k + 1)
    return p1


def legendre_at_zero(l: int) -> float:
    """P_l(0) = (-1)^j (2j-1)!!/(2j)!! for l = 2j, zero for odd l (product form)."""
    if l % 2:
        return 0.0
    j = l // 2
    k = np.arange(1, j + 1)
    return float((-1) ** j * np.prod((2 * k - 1) / (2 * k)))


def zonal_normalization(l: int) -> float:
    return float(np.sqrt((2 * l + 1) / (4 * np.pi)))


def sphere_zonal(l: int, model: Optional[RoundSphere] = None) -> Eigenfunction:
    """L^2-normalized zonal harmonic about the north pole of the unit 2-sphere."""
    if l < 0:
        raise ValueError("degree must be nonnegative")
    if l > MAX_DEGREE:
        raise PrecisionError(f"degree {l} > {MAX_DEGREE}: recurrence accuracy not certified")
    model = RoundSphere(2) if model is None else model
    if model.dim != 2 or model.radius != 1.0:
        raise ValueError("zonal harmonics are provided on the unit 2-sphere")
    N = zonal_normalization(l)

    def ev(x, _l=l, _N=N):
        x = np.asarray(x, float)
        t = x[..., 2] / np.linalg.norm(x, axis=-1)
        return _N * legendre(_l, t)

    return Eigenfunction(model, float(np.sqrt(l * (l + 1))), ev, f"zonal{l}", 1.0, N)


# ---------------------------------------------------------------------
# residual checks


def _second_difference(g, h):
    """Richardson-extrapolated central second difference (order h^6); g(s) vectorized in s."""
    def D(k):
        return (g(k) - 2 * g(0.0) + g(-k)) / k**2

    d1, d2, d3 = D(h), D(h / 2), D(h / 4)
    r1, r2 = (4 * d2 - d1) / 3, (4 * d3 - d2) / 3
    return (16 * r2 - r1) / 15


def _first_difference(g, h):
    def D(k):
        return (g(k) - g(-k)) / (2 * k)

    d1, d2, d3 = D(h), D(h / 2), D(h / 4)
    r1, r2 = (4 * d2 - d1) / 3, (4 * d3 - d2) / 3
    return (16 * r2 - r1) / 15


def laplacian_residual(phi: Eigenfunction, points) -> float:
    """max |(Lap + lam^2) phi| / max(lam^2, 1) at the points, by finite differences.

    The step scales like 0.1/lam so the relative truncation error is
    independent of the frequency.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    lam2 = phi.lam**2
    h = 0.1 / max(phi.lam, 1.0)
    model = phi.model
    if isinstance(model, FlatTorus):
        lap = 0.0
        for i in range(model.dim):
            e = np.zeros(model.dim)
            e[i] = 1.0
            lap = lap + _second_difference(lambda s, _e=e: phi(pts + s * _e), h)
        res = lap + lam2 * phi(pts)
    elif isinstance(model, RoundSphere):
        th = np.arccos(np.clip(pts[:, 2] / np.linalg.norm(pts, axis=1), -1, 1))
        th = np.clip(th, 4 * h, np.pi - 4 * h)
        ph = np.arctan2(pts[:, 1], pts[:, 0])

        def g(s):
            t = th + s
            return phi(np.stack([np.sin(t) * np.cos(ph), np.sin(t) * np.sin(ph), np.cos(t)], -1))

        res = _second_difference(g, h) + _first_difference(g, h) / np.tan(th) + lam2 * g(0.0)
    else:
        raise ValueError("residual check implemented for torus and sphere models")
    return float(np.max(np.abs(res)) / max(lam2, 1.0))


# ---------------------------------------------------------------------
# averages


@dataclass
class AverageRecord:
    H: str
    weight: str
    lam: float
    integral: complex
    value: float
    error: float

    def row(self):
        return [self.lam, 1.0 / self.lam if self.lam else np.inf, self.value, self.error]


def average_over(H: Submanifold, phi: Eigenfunction, w: Optional[Callable] = None, weight: str = "1",
                 atol: float = 1e-8, rtol: float = 1e-4) -> AverageRecord:
    """|int_H w phi dsigma_H| by adaptive Gauss-Legendre along H; |phi(x)| when H is a point."""
    if H.kind == "point":
        v = complex(np.asarray(phi(H.base_point)).item())
        return AverageRecord(H.label, weight, phi.lam, v, abs(v), 0.0)
    model = H.model
    a, b = H.domain
    w = (lambda u: np.ones_like(u)) if w is None else w

    def integrand(u):
        X = np.array([H.param(s) for s in u])
        dX = np.array([H.tangent(s) for s in u])
        speed = model.norm(X, dX)
        return w(u) * phi(X) * speed

    panels = max(8, int(np.ceil(phi.lam * (b - a) / np.pi)))
    val, err, _ = adaptive_gauss_legendre(integrand, a, b, panels=panels, atol=atol, rtol=rtol)
    return AverageRecord(H.label, weight, phi.lam, complex(val), float(abs(val)), err)


def equator_zonal_exact(l: int) -> float:
    """Closed form of the equator integral of the normalized zonal harmonic."""
    return 2 * np.pi * zonal_normalization(l) * legendre_at_zero(l)


def equator(model: Optional[RoundSphere] = None) -> Submanifold:
    model = RoundSphere(2) if model is None else model
    return Submanifold.curve(model, lambda u: np.array([np.cos(u), np.sin(u), 0.0]), (0.0, 2 * np.pi),
                             periodic=True, label="equator")


# ---------------------------------------------------------------------
# growth fits


FIT_MODELS = ("power", "power_over_sqrtlog")


def growth_fit(records, model: str = "power") -> dict:
    """Least squares of log(value) (plus 1/2 log log lam for power_over_sqrtlog) on log lam."""
    if model not in FIT_MODELS:
        raise ValueError(f"unknown growth model {model!r}")
    data = np.array([(r.lam, r.value) if isinstance(r, AverageRecord) else tuple(r) for r in records], float)
    if len(data) < 8:
        raise FitError("need at least 8 records")
    lam, val = data[:, 0], data[:, 1]
    if np.any(lam <= np.e) or np.any(val <= 0):
        raise FitError("need lam > e and positive values")
    if np.log10(lam.max() / lam.min()) < 1 - 1e-9:
        raise FitError("records must span a decade in lam")
    y = np.log(val)
    if model == "power_over_sqrtlog":
        y = y + 0.5 * np.log(np.log(lam))
    X = np.column_stack([np.ones_like(lam), np.log(lam)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - X @ coef
    return {"model": model, "exponent": float(coef[1]), "prefactor": float(np.exp(coef[0])),
            "residual": float(np.sqrt(np.mean(res**2)))}


def compare_growth(records) -> dict:
    """Both fits plus the preferred model (smaller residual) and the residual ratio."""
    fits = {m: growth_fit(records, m) for m in FIT_MODELS}
    rp, rl = fits["power"]["residual"], fits["power_over_sqrtlog"]["residual"]
    preferred = "power_over_sqrtlog" if rl < rp else "power"
    ratio = (min(rp, rl) / max(rp, rl)) if max(rp, rl) > 0 else 1.0
    return {"fits": fits, "preferred": preferred, "residual_ratio": float(ratio)}


def pole_records(degrees=DEFAULT_DEGREES):
    """Sup-norm records of the zonal family (attained at the pole)."""
    out = []
    for l in degrees:
        phi = sphere_zonal(int(l))
        v = float(phi(np.array([0.0, 0.0, 1.0])))
        out.append(AverageRecord("north pole", "1", phi.lam, complex(v), abs(v), 0.0))
    return out
