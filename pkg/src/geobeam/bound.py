"""Evaluation of the cover-to-estimate average bound, h-schedules, baselines
and a quantitative implicit function theorem."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .flow import LAMBDA_FLOOR, PreconditionError, ehrenfest_time

PROVENANCE = ("empirical-fit", "config", "existence-only")


class InfeasibleError(ValueError):
    pass


# ---------------------------------------------------------------------
# constants


@dataclass
class ConstantsLedger:
    """Named constants with provenance; lookups never fall back to defaults."""

    entries: dict = field(default_factory=dict)

    def set(self, name: str, value: float, provenance: str, note: str = "") -> "ConstantsLedger":
        if provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {provenance!r}; expected one of {PROVENANCE}")
        self.entries[name] = (float(value), provenance, note)
        return self

    def get(self, name: str) -> float:
        if name not in self.entries:
            raise KeyError(f"constant {name!r} missing from the ledger (no silent defaults)")
        return self.entries[name][0]

    def provenance(self, name: str) -> str:
        return self.entries[name][1]

    def __contains__(self, name) -> bool:
        return name in self.entries

    def to_rows(self):
        return [[k, v, p, n] for k, (v, p, n) in sorted(self.entries.items())]

    @classmethod
    def standard(cls, lambda_hat: float, tau: float = 0.5, D: float = 8, R0: float = 1.0, a: float = 1.0,
                 c_tilde: Optional[float] = None, lambda_provenance: str = "empirical-fit") -> "ConstantsLedger":
        """A ledger with the slots every evaluation needs; the unknown C_{n,k} is set to 1."""
        led = cls()
        led.set("lambda_hat", lambda_hat, lambda_provenance)
        led.set("tau0", tau, "config")
        led.set("D_max", D, "config")
        led.set("R0", R0, "config")
        led.set("a", a, "config", "recurrence rate in r_t = exp(-a t)/a")
        led.set("C_nk", 1.0, "existence-only", "carried as 1; only h-dependence is asserted")
        led.set("w_inf", 1.0, "config")
        led.set("alpha", 0.99, "config", "h-independent R: alpha < 1")
        if c_tilde is not None:
            led.set("c_tilde", c_tilde, "empirical-fit")
        return led


# ---------------------------------------------------------------------
# schedules


@dataclass
class Schedule:
    kind: str
    h_grid: np.ndarray
    eps: float
    delta: float
    alpha: float
    t0: float
    T0_coef: float          # T0(h) = T0_coef * log(1/h)
    lambda_hat: float
    R0: float
    dropped: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def R(self, h):
        return np.asarray(h, float) ** self.eps

    def r0(self, h):
        return np.asarray(h, float) ** self.delta

    def T0(self, h):
        return self.T0_coef * np.log(1.0 / np.asarray(h, float))

    def T_max(self, h):
        return 2 * self.alpha * ehrenfest_time(float(h), self.lambda_hat)

    def check(self):
        """Raise if any schedule-only precondition fails on the grid."""
        for h in self.h_grid:
            if not 8 * self.r0(h) <= self.R(h) * (1 + 1e-12):
                raise InfeasibleError(f"8 h^delta <= R(h) fails at h={h:g}")
            if self.R(h) > self.R0:
                raise InfeasibleError(f"R(h) > R0 at h={h:g}")
            if self.T0(h) > self.T_max(h) * (1 + 1e-12):
                raise InfeasibleError(f"T0(h) > 2 alpha T_e(h) at h={h:g}")
        if not self.alpha < 1 - 2 * self.eps:
            raise InfeasibleError("alpha must be below 1 - 2 eps")


def _feasible_grid(h_grid, eps, delta, R0):
    h = np.sort(np.asarray(h_grid, float))[::-1]
    ok = (8 * h**delta <= h**eps) & (h**eps <= R0)
    return h[ok], h[~ok].tolist()


def make_schedule(kind: str, eps: float, h_grid: Sequence[float], ledger: ConstantsLedger, delta: Optional[float] = None,
                  t0: float = 1.0) -> Schedule:
    """h-schedules of the two proofs.

    ``noConj``: R = h^eps, r0 = h^{2 eps}, T0 = b log(1/h) with b just below
    eps / (12 (2 Lambda + a)) and alpha just below 1 - 2 eps.

    ``tangentSpace``: R = h^eps, r0 = h^delta, T0 = (eps / c~) log(1/h) with
    a just below (1 - 2 eps)/eps, alpha = a eps, c~ >= max(c_tilde, Lambda/a)
    and eps (1 + Lambda/c~) < delta < 1/2.

    Grid points where 8 h^delta <= R(h) <= R0 fails are dropped and listed
    in ``dropped``; an empty remainder is an infeasibility error.
    """
    lam = max(ledger.get("lambda_hat"), LAMBDA_FLOOR)
    R0 = ledger.get("R0")
    notes = []
    if kind == "noConj":
        if not 0 < eps < 0.25:
            raise PreconditionError("noConj schedule needs 0 < eps < 1/4")
        a = ledger.get("a")
        delta = 2 * eps
        alpha = (1 - 2 * eps) * (1 - 1e-6)
        b = 0.999 * eps / (12 * (2 * lam + a))
        if b > alpha / lam:
            b = 0.999 * alpha / lam
            notes.append("b lowered so that T0 <= 2 alpha T_e")
        coef = b
        notes.append(f"b = {b:.6g}")
    elif kind == "tangentSpace":
        if not 0 < eps < 0.5:
            raise PreconditionError("tangentSpace schedule needs 0 < eps < 1/2")
        a = 0.999 * (1 - 2 * eps) / eps
        alpha = a * eps
        c_t = max(ledger.get("c_tilde"), lam / a)
        lo = eps * (1 + lam / c_t)
        if delta is None:
            delta = 0.5 - 1e-3
        if not lo < delta < 0.5:
            raise InfeasibleError(f"need {lo:.4g} < delta < 1/2")
        coef = eps / c_t
        notes.append(f"c_tilde = {c_t:.6g}, a = {a:.6g}")
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    grid, dropped = _feasible_grid(h_grid, eps, delta, R0)
    if grid.size == 0:
        raise InfeasibleError(f"no h in the grid satisfies 8 h^delta <= h^eps <= R0 (eps={eps}, delta={delta})")
    s = Schedule(kind, grid, eps, delta, alpha, t0, coef, lam, R0, dropped, notes)
    s.check()
    return s


# ---------------------------------------------------------------------
# counts and evaluation


@dataclass
class BoundCounts:
    """Tube counts of a partition, stated at cover radius r."""

    B: float
    rungs: list                # (count, t_l, T_l)
    r: float
    snh_dim: int
    k: int
    D: float
    tau: float
    extrapolated: bool = False

    @classmethod
    def from_partition(cls, partition, k: Optional[int] = None, D: Optional[float] = None,
                       tau: Optional[float] = None) -> "BoundCounts":
        cover = partition.cover
        H = getattr(cover, "H", None)
        k = k if k is not None else (H.codim if H is not None else 1)
        D = D if D is not None else getattr(cover, "D", 1)
        tau = tau if tau is not None else getattr(cover, "tau", 0.0)
        if not tau > 0:
            raise PreconditionError("tau must be positive to evaluate the bound")
        rungs = [(float(len(g.G)), float(g.t), float(g.T)) for g in partition.rungs]
        return cls(float(len(partition.B)), rungs, float(cover.r), int(cover.snh_dim), int(k), float(D), float(tau))

    def at_radius(self, R: float) -> "BoundCounts":
        """Counts extrapolated to radius R by the power law (r/R)^{n-1}."""
        if np.isclose(R, self.r, rtol=1e-12):
            return self
        s = (self.r / R) ** self.snh_dim
        return BoundCounts(self.B * s, [(g * s, t, T) for g, t, T in self.rungs], float(R), self.snh_dim, self.k,
                           self.D, self.tau, True)


def ladder_counts(c: float, R: float, snh_dim: int, t0: float, T0: float, decay: float = 1.0,
                  k: int = 1, D: float = 1.0, tau: float = 0.5, ratio: float = 0.2) -> BoundCounts:
    """Counts following the ladder laws |G_l| = c ratio^l R^{1-n}, |B| = c e^{-decay T0} R^{1-n}."""
    m = int(np.floor(np.log2(T0 / t0) + 1e-12)) if T0 >= t0 else -1
    rungs = [(c * ratio**l * R ** (-snh_dim), t0, T0 / 2**l) for l in range(m + 1)]
    B = c * np.exp(-decay * T0) * R ** (-snh_dim)
    return BoundCounts(B, rungs, R, snh_dim, k, D, tau)


REMAINDER_TERMS = (
    "prefactor * sum_l (|G_l| t_l T_l)^(1/2) / h * ||(-h^2 Lap - 1) u||",
    "C h^-1 ||w||_inf ||(-h^2 Lap - 1) u||_{H^((k-3)/2)_h}",
    "C_N h^N (||u|| + ||(-h^2 Lap - 1) u||_{H^((k-3)/2)_h})",
)


@dataclass
class BoundEstimate:
    h: float
    R: float
    bad_term: float
    good_term: float
    prefactor: float
    bound: float             # bound on h^{(k-1)/2} |int_H w u| / ||u||
    classical: float         # lambda^{(k-1)/2}
    log_improved: float      # lambda^{(k-1)/2} / sqrt(log lambda)
    ratio: float             # bound * lambda^{(k-1)/2} / classical
    extrapolated: bool
    remainders: tuple = REMAINDER_TERMS
    remainder_values: tuple = (0.0, 0.0, 0.0)

    def row(self):
        return [self.h, self.bad_term, self.good_term, self.bound, self.classical, self.log_improved, self.ratio]


def baseline(lam: float, k: int, kind: str) -> float:
    """Classical lambda^{(k-1)/2} or log-improved lambda^{(k-1)/2}/sqrt(log lambda)."""
    if not lam > np.e:
        raise PreconditionError("baseline needs lambda > e")
    base = lam ** ((k - 1) / 2)
    if kind == "classical":
        return float(base)
    if kind == "logImproved":
        return float(base / np.sqrt(np.log(lam)))
    raise ValueError(f"unknown baseline kind {kind!r}")


def evaluate_bound(counts, h: float, ledger: ConstantsLedger, schedule: Optional[Schedule] = None,
                   check_windows: bool = True) -> BoundEstimate:
    """Main L^2 coefficient of the cover-to-estimate bound at frequency 1/h.

    ``counts`` is a :class:`BoundCounts` or a CoverPartition.  With a
    schedule the counts are extrapolated to R(h) = h^eps; without one the
    cover radius is used as an h-independent R.
    """
    if not isinstance(counts, BoundCounts):
        counts = BoundCounts.from_partition(counts)
    if not 0 < h < 1:
        raise PreconditionError("need 0 < h < 1")
    if schedule is not None:
        R = float(schedule.R(h))
        alpha = schedule.alpha
        lam = schedule.lambda_hat
    else:
        R = counts.r
        alpha = ledger.get("alpha")
        lam = ledger.get("lambda_hat")
    c = counts.at_radius(R)
    if check_windows:
        T_max = 2 * alpha * ehrenfest_time(h, lam)
        for l, (_, _, T) in enumerate(c.rungs):
            if T > T_max * (1 + 1e-12):
                raise PreconditionError(f"rung {l}: T_l={T:.4g} exceeds 2 alpha T_e(h)={T_max:.4g} at h={h:g}")
    n1 = c.snh_dim
    pref = ledger.get("C_nk") * c.D * ledger.get("w_inf") * R ** (n1 / 2) / np.sqrt(c.tau)
    bad = float(np.sqrt(c.B))
    good = float(sum(np.sqrt(g * t / T) for g, t, T in c.rungs if g > 0))
    bound = pref * (bad + good)
    lam_f = 1.0 / h
    cl = baseline(lam_f, c.k, "classical") if lam_f > np.e else lam_f ** ((c.k - 1) / 2)
    li = baseline(lam_f, c.k, "logImproved") if lam_f > np.e else float("nan")
    return BoundEstimate(float(h), R, bad, good, float(pref), float(bound), cl, li,
                         float(bound * lam_f ** ((c.k - 1) / 2) / cl), c.extrapolated)


def bound_sweep(counts, h_grid, ledger, schedule=None, counts_at: Optional[Callable] = None):
    """Evaluate over an h grid; ``counts_at(h)`` may supply h-dependent counts."""
    out = []
    for h in h_grid:
        cc = counts_at(h) if counts_at is not None else counts
        out.append(evaluate_bound(cc, float(h), ledger, schedule))
    return out


# ---------------------------------------------------------------------
# semiclassical Sobolev multiplier (Fourier models)


def sobolev_multiplier(h: float, lam, s: float):
    """<h lambda>^s = (1 + h^2 lambda^2)^{s/2} on an eigenmode of frequency lambda."""
    lam = np.asarray(lam, float)
    return (1.0 + (h * lam) ** 2) ** (s / 2)


def semiclassical_sobolev_norm(coeffs, lams, h: float, s: float) -> float:
    """||u||_{H^s_h} for u = sum c_j phi_j with orthonormal eigenmodes of frequency lams."""
    c = np.asarray(coeffs)
    return float(np.sqrt(np.sum(np.abs(c) ** 2 * sobolev_multiplier(h, lams, s) ** 2)))


# ---------------------------------------------------------------------
# escape rate from H


def estimate_escape_rate(H, spacing: float = 0.2, dt: float = 1e-3) -> float:
    """inf over SN*H of the one-sided derivative of d(pi phi_t rho, H) at t = 0+."""
    from .conormal import _nearest_on_curve, sample_snh
    from .flow import flow_states

    model = H.model
    rates = []
    grid = None
    if H.kind != "point":
        grid = np.linspace(*H.domain, 257)
        if H.periodic:
            grid = grid[:-1]
    for cp in sample_snh(H, spacing):
        x, v = cp.rho.x, cp.rho.velocity(model)
        x1, _ = flow_states(model, x, v, dt)
        if H.kind == "point":
            d = float(model.distance(H.base_point, x1))
        else:
            u = _nearest_on_curve(H, x1, grid)
            d = float(model.distance(H.param(u), x1))
        rates.append(d / dt)
    return float(min(rates))


# ---------------------------------------------------------------------
# quantitative implicit function theorem


@dataclass
class IFTResult:
    radii: tuple
    S: float
    margin: float            # r0 - (S r0 + ||L|| sum m_i Bt_i r_i)
    converged: int
    samples: int
    max_ratio: float
    feasible: bool


def _as_fn(b):
    return b if callable(b) else (lambda r0, r1, r2, _b=float(b): np.full(np.broadcast(r0, r1, r2).shape, _b))


def ift_conditions(L_norm, B, Bt, m, r0, r1, r2):
    """(S, lhs of the second inequality) for radii arrays; B, Bt are constants or callables of the radii."""
    B = [_as_fn(b) for b in B]
    Bt = [_as_fn(b) for b in Bt]
    rs = (r0, r1, r2)
    S = L_norm * sum(m[i] * B[i](r0, r1, r2) * rs[i] for i in range(3))
    lhs = S * r0 + L_norm * sum(m[i] * Bt[i - 1](r0, r1, r2) * rs[i] for i in (1, 2))
    return S, lhs


def quantitative_ift(f: Callable, L, B, Bt, m, r_range=(1e-4, 1.0), per_decade: int = 20, samples: int = 100,
                     rng=None, iters: int = 500) -> IFTResult:
    """Radii maximizing r1 r2 subject to S < 1 and S r0 + ||L|| sum m_i Bt_i r_i <= r0.

    ``f(x0, x1, x2)`` maps to R^{m0}; ``B = (B0, B1, B2)`` bound the mixed
    derivatives d_{x_i} d_{x0} f and ``Bt = (Bt1, Bt2)`` the first
    derivatives d_{x_i} f on the balls (constants or functions of the
    radii).  Certified radii are then exercised: the map
    G(x0) = x0 - L f(x0, x1, x2) is iterated from sampled starts.
    """
    L = np.atleast_2d(np.asarray(L, float))
    L_norm = float(np.linalg.norm(L, 2))
    lo, hi = np.log10(r_range[0]), np.log10(r_range[1])
    g = 10.0 ** np.linspace(lo, hi, int(round((hi - lo) * per_decade)) + 1)
    r0, r1, r2 = g[:, None, None], g[None, :, None], g[None, None, :]
    S, lhs = ift_conditions(L_norm, B, Bt, m, r0, r1, r2)
    S = np.broadcast_to(S, (g.size,) * 3)
    ok = (S < 1) & (np.broadcast_to(lhs, S.shape) <= np.broadcast_to(r0, S.shape))
    if not ok.any():
        raise InfeasibleError("no radii on the grid satisfy the implicit function conditions")
    obj = np.where(ok, r1 * r2 + 0 * r0, -np.inf)
    best = obj.max()
    cand = np.argwhere(obj >= best * (1 - 1e-12))
    # among the maximizers prefer the smallest S, then the largest r0
    cand = sorted(cand.tolist(), key=lambda ijk: (S[tuple(ijk)], -g[ijk[0]]))
    i, j, k = cand[0]
    radii = (float(g[i]), float(g[j]), float(g[k]))
    S_val = float(S[i, j, k])
    margin = float(radii[0] - np.broadcast_to(lhs, S.shape)[i, j, k])
    conv, ratio = _exercise(f, L, radii, m, samples, rng, iters)
    return IFTResult(radii, S_val, margin, conv, samples, ratio, True)


def _ball(rng, dim, radius, count):
    x = rng.standard_normal((count, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * radius * rng.uniform(0, 1, (count, 1)) ** (1.0 / dim)


def _exercise(f, L, radii, m, samples, rng, iters):
    rng = np.random.default_rng(0) if rng is None else rng
    m0, m1, m2 = m
    X0 = _ball(rng, m0, radii[0], samples)
    X1 = _ball(rng, m1, radii[1], samples) if m1 else np.zeros((samples, 0))
    X2 = _ball(rng, m2, radii[2], samples) if m2 else np.zeros((samples, 0))
    converged = 0
    max_ratio = 0.0
    for x0, x1, x2 in zip(X0, X1, X2):
        x = x0.copy()
        prev_step = None
        ok = False
        for _ in range(iters):
            x_new = x - L @ np.atleast_1d(f(x, x1, x2))
            step = float(np.linalg.norm(x_new - x))
            if prev_step is not None and prev_step > 1e-12 and step > 1e-14:
                max_ratio = max(max_ratio, step / prev_step)
            if np.linalg.norm(x_new) > radii[0] * (1 + 1e-9):
                break
            x, prev_step = x_new, step
            if step < 1e-14:
                ok = True
                break
        converged += ok
    return converged, max_ratio
