"""Contraction-regime partitions: dyadic ladders, ball-removal refinement,
and the recurrence-gap check on negatively curved surfaces.

The ladder algorithms only need a cover object exposing ``N``, ``r`` and
``looping(t0, T0, density, sources, targets) -> LoopingReport``; both the
flow-based :class:`~geobeam.cover.GoodCover` and the exact cat-map leaf
cover below qualify.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cover import CoverPartition, LoopingReport, Rung, merge_windows, partition_single_window
from .discrete import DiscreteHyperbolicSystem, rational_orbit
from .flow import PreconditionError, propagate_linearization


class CertificateError(PreconditionError):
    pass


# ---------------------------------------------------------------------
# exact cat-map testbed


@dataclass
class CatLeaf:
    """A stable-leaf segment of a cat map through a rational base point.

    Points of the segment are p0 + s e_s with |s| <= length/2.  Images are
    exact: the base point is advanced in integer arithmetic modulo q and the
    leaf offset is scaled by lambda_s^k.
    """

    system: DiscreteHyperbolicSystem
    num: tuple
    q: int
    length: float

    def __post_init__(self):
        lu, eu, ls, es = self.system.eigen()
        self.lambda_u, self.e_u, self.lambda_s, self.e_s = float(lu), eu, float(ls), es
        self.p0 = np.array(self.num, float) / self.q

    @classmethod
    def seeded(cls, system=None, length: float = 4.0, q: int = 1_000_003, seed: int = 0) -> "CatLeaf":
        system = DiscreteHyperbolicSystem() if system is None else system
        rng = np.random.default_rng(seed)
        num = tuple(int(v) for v in rng.integers(1, q, size=2))
        return cls(system, num, q, float(length))

    def base_orbit(self, steps: int) -> np.ndarray:
        return rational_orbit(self.system, self.num, self.q, steps).astype(float) / self.q

    def images(self, s, k_range) -> np.ndarray:
        """Positions of leaf points ``s`` after each step in ``k_range``; shape (K, S, 2)."""
        ks = np.asarray(k_range, int)
        base = self.base_orbit(int(ks.max()))[ks]
        scale = self.lambda_s ** ks.astype(float)
        s = np.asarray(s, float)
        return np.mod(base[:, None, :] + scale[:, None, None] * s[None, :, None] * self.e_s, 1.0)

    def leaf_coords(self, x, reach: Optional[float] = None):
        """All lattice lifts of ``x`` near the segment: (du, ds, point index).

        ``du`` is the transverse (unstable) coordinate, ``ds`` the position
        along the leaf; only lifts with |ds| <= length/2 + reach are kept.
        """
        x = np.atleast_2d(np.asarray(x, float))
        reach = self.length / 2 if reach is None else self.length / 2 + reach
        n = int(np.ceil(reach)) + 1
        grid = np.arange(-n, n + 1)
        shifts = np.stack(np.meshgrid(grid, grid, indexing="ij"), -1).reshape(-1, 2)
        d = (x - self.p0)[:, None, :] + shifts[None, :, :]
        du = d @ self.e_u
        ds = d @ self.e_s
        i, _ = np.nonzero(np.abs(ds) <= reach)
        keep = np.abs(ds) <= reach
        return du[keep], ds[keep], i


class CatMapLeafCover:
    """Cover of a cat-map stable-leaf segment by pieces of radius r.

    This is the exact analog of a good cover of SN*H: the leaf plays the
    role of SN*H, a piece around s_j the role of a tube, and a return is an
    image point within transverse distance r of the leaf whose leaf
    coordinate lies within r of a piece center.
    """

    def __init__(self, leaf: CatLeaf, r: float):
        if not 0 < r < leaf.length:
            raise PreconditionError("need 0 < r < leaf length")
        self.leaf = leaf
        self.r = float(r)
        n = int(round(leaf.length / r))
        self.centers = -leaf.length / 2 + (np.arange(n) + 0.5) * (leaf.length / n)
        self.tau = 0.0
        self.snh_dim = 1

    @property
    def N(self) -> int:
        return len(self.centers)

    @property
    def system(self):
        return self.leaf.system

    def probes(self, density: int = 1):
        offs = [0.0, 1.0, -1.0] + ([0.5, -0.5] if density >= 2 else [])
        s = np.concatenate([self.centers + o * self.r for o in offs])
        owner = np.tile(np.arange(self.N), len(offs))
        return s, owner

    def looping(self, t0, T0, density: int = 1, sources=None, targets=None, chunk: int = 64) -> LoopingReport:
        t0, T0 = int(np.ceil(t0)), int(np.floor(T0))
        if not T0 >= t0 >= 1:
            raise PreconditionError("need integer steps T0 >= t0 >= 1")
        s, owner = self.probes(density)
        src = np.arange(self.N) if sources is None else np.asarray(sources, int)
        tgt = np.arange(self.N) if targets is None else np.asarray(targets, int)
        keep = np.isin(owner, src)
        s, owner = s[keep], owner[keep]
        is_tgt = np.zeros(self.N, bool)
        is_tgt[tgt] = True
        ev = []
        r = self.r
        for k0 in range(t0, T0 + 1, chunk):
            ks = np.arange(k0, min(k0 + chunk, T0 + 1))
            X = self.leaf.images(s, ks).reshape(-1, 2)
            du, ds, i = self.leaf.leaf_coords(X, r)
            hit = np.abs(du) <= r
            du, ds, i = du[hit], ds[hit], i[hit]
            for a, b, p in zip(du, ds, i):
                js = np.flatnonzero(np.abs(self.centers - b) <= r)
                kk, pi = divmod(int(p), len(s))
                for j in js:
                    if is_tgt[j]:
                        ev.append((float(ks[kk]), owner[pi], j, float(np.hypot(a, b - self.centers[j]))))
        events = np.array(ev, float).reshape(-1, 4)
        windows = [[] for _ in range(self.N)]
        nearest = np.full(self.N, np.inf)
        for t, src_j, _, d in events:
            windows[int(src_j)].append((t, t))
            nearest[int(src_j)] = min(nearest[int(src_j)], d)
        windows = [merge_windows(w, 1.0) for w in windows]
        return LoopingReport(float(t0), float(T0), events, windows, nearest, 0.0, 1.0, density, self.N, src, tgt)


def cat_certificate(cover: CatMapLeafCover, steps: int) -> dict:
    """Per-piece contraction data: sup |det J_k| along the leaf, k = 0..steps.

    For a linear map this is exactly |lambda_s|^k for every piece.
    """
    lam = abs(cover.leaf.lambda_s)
    decay = lam ** np.arange(steps + 1, dtype=float)
    return {j: decay for j in range(cover.N)}


def flow_certificate(cover, T: float, step: float = 1e-2) -> dict:
    """Per-tube contraction data for a flow cover from Jacobi propagation.

    The value at time t is 1/|d phi_t v| for v spanning T SN*H (the
    quotient-Jacobian reading); it decays exponentially on negatively
    curved models, polynomially on flat ones and not at all on spheres.
    """
    model = cover.model
    out = {}
    for tube in cover.tubes:
        seg = propagate_linearization(model, tube.center.rho, T, step=step)
        Y, P = (seg.A, seg.dA) if cover.H.kind == "point" else (seg.B, seg.dB)
        M = np.concatenate([Y, P], axis=1)
        sv = np.linalg.svd(M, compute_uv=False)
        out[tube.id] = 1.0 / np.prod(sv, axis=1)
    return out


def _contracts(decay) -> bool:
    decay = np.asarray(decay, float)
    return decay.size > 1 and decay[-1] <= 0.5 * decay[0]


def fit_rung_ratio(counts, max_rung: int = 6) -> dict:
    """Log-linear least squares of |G_l| against l over nonzero rungs l <= max_rung."""
    c = np.asarray(counts, float)[: max_rung + 1]
    l = np.flatnonzero(c > 0)
    if l.size < 2:
        return {"ratio": 0.0 if l.size <= 1 else np.nan, "prefactor": float(c[l[0]]) if l.size else 0.0, "rungs": l.tolist()}
    slope, icpt = np.polyfit(l, np.log(c[l]), 1)
    return {"ratio": float(np.exp(slope)), "prefactor": float(np.exp(icpt)), "rungs": l.tolist()}


def dyadic_ladder(cover, report: LoopingReport, t0: float, T0: float, certificate: Optional[dict],
                  retest: bool = True) -> CoverPartition:
    """Rungs G_l whose unions are [t0, 2^-l T0] non-self looping, plus a bad set.

    Rung l keeps the pieces of the current candidate set that are not hit
    by a return (from a candidate source) within [t0, 2^-l T0]; the hit
    pieces carry over to rung l+1.  What is left after rung m goes to B,
    as do pieces whose certificate shows no contraction.  A tube is placed
    on the smallest rung available to it.
    """
    if not T0 >= t0 > 0:
        raise PreconditionError("need T0 >= t0 > 0")
    m = int(np.floor(np.log2(T0 / t0) + 1e-12))
    if m == 0:
        return partition_single_window(cover, report, t0, T0, retest=retest)
    if certificate is None:
        raise CertificateError("dyadic ladder needs a contraction certificate")
    missing = [j for j in range(cover.N) if j not in certificate]
    if missing:
        raise CertificateError(f"no contraction certificate for tubes {missing[:5]}{'...' if len(missing) > 5 else ''}")
    flat = np.array([j for j in range(cover.N) if not _contracts(certificate[j])], dtype=int)
    C = np.setdiff1d(np.arange(cover.N), flat)
    ev = report.events
    dil = report.dilation
    rungs, notes = [], []
    for l in range(m + 1):
        W = T0 / 2**l
        inC = np.zeros(cover.N, bool)
        inC[C] = True
        sel = (ev[:, 0] >= t0 - dil) & (ev[:, 0] <= W + dil)
        sel &= inC[ev[:, 1].astype(int)] & inC[ev[:, 2].astype(int)]
        hits = np.unique(ev[sel, 2].astype(int))
        G = np.setdiff1d(C, hits)
        if retest and len(G):
            for _ in range(20):
                rep2 = cover.looping(t0, W, density=2, sources=G, targets=G)
                tg = rep2.events[:, 2].astype(int) if len(rep2.events) else np.empty(0, int)
                off = np.intersect1d(np.unique(tg), G)
                if off.size == 0:
                    break
                notes.append(f"rung {l}: union re-test moved {off.size} tubes up")
                G = np.setdiff1d(G, off)
                hits = np.union1d(hits, off)
        rungs.append(Rung(G, float(t0), float(W)))
        C = np.intersect1d(C, hits)
    B = np.union1d(C, flat).astype(int)
    counts = [len(g.G) for g in rungs]
    fit = fit_rung_ratio(counts)
    r = getattr(cover, "r", 1.0)
    n1 = getattr(cover, "snh_dim", 1)
    total = cover.N
    counts_d = {
        "G": counts,
        "B": int(len(B)),
        "no_contraction": int(len(flat)),
        "m": m,
        "ratio": fit["ratio"],
        "c_ladder": float(max((c * r**n1 / fit["ratio"] ** l for l, c in enumerate(counts) if c), default=0.0))
        if fit["ratio"] and np.isfinite(fit["ratio"]) else float("nan"),
        "bad_fraction": len(B) / total,
    }
    return CoverPartition(cover, B, rungs, verified=retest, notes=notes, counts=counts_d)


# ---------------------------------------------------------------------
# ball-removal refinement


@dataclass
class RefinementResult:
    removed: list            # (leaf center, radius, step)
    budget: float
    used: float
    start: int               # first step of the controlled window
    feasible: bool
    survivors_ok: bool
    floor: float
    notes: list = field(default_factory=list)


def controlled_start(f_decay: Callable[[int], float], eps: float, tau_inj: float = 1.0, gamma: float = 1.0,
                     n: int = 2, horizon: int = 100_000) -> int:
    """First step s with sum_{k >= s} f(k) <= eps tau_inj / (4 alpha), alpha = 2^{3n-1} gamma^{n-1}."""
    alpha = 2.0 ** (3 * n - 1) * gamma ** (n - 1)
    target = eps * tau_inj / (4 * alpha)
    f = np.array([f_decay(k) for k in range(horizon + 1)], float)
    if np.any(np.diff(f) > 1e-15):
        raise PreconditionError("f_decay must be monotone decreasing")
    tail = np.cumsum(f[::-1])[::-1]
    ok = np.flatnonzero(tail <= target)
    if ok.size == 0:
        raise PreconditionError("tail of f_decay never drops below the control threshold")
    return int(ok[0])


def controlled_refinement(leaf: CatLeaf, balls, f_decay: Callable[[int], float], eps: float, t0: int, T0: int,
                          tau_inj: float = 1.0, gamma: float = 1.0, transverse: Optional[float] = None,
                          lam_max: Optional[float] = None, checks: int = 400) -> RefinementResult:
    """One refinement round on a family of leaf balls (center, radius).

    Each return of a ball into the family at a step k of the controlled
    window lands inside a piece of diameter 2 R f(k); that landing piece is
    removed (radius 1.5 R f(k), floored at e^{-Lambda T0} R).  Returns with
    f(k) = 0 land on a null set and remove nothing.  ``f_decay`` must
    dominate the true contraction lambda_s^k for the survivor check to
    pass.
    The removal budget is sum radii <= eps * sum original radii (leaf
    dimension one).
    """
    balls = [(float(c), float(R)) for c, R in balls]
    R_min = min(R for _, R in balls)
    tol = R_min if transverse is None else float(transverse)
    lam_max = np.log(abs(leaf.lambda_u)) if lam_max is None else lam_max
    start = max(int(t0), controlled_start(f_decay, eps, tau_inj, gamma))
    floor = float(np.exp(-lam_max * T0) * R_min)
    budget = eps * sum(R for _, R in balls)
    removed = []
    if start <= T0:
        centers = np.array([c for c, _ in balls])
        radii = np.array([R for _, R in balls])
        ks = np.arange(start, int(T0) + 1)
        X = leaf.images(centers, ks)  # (K, B, 2)
        for kk, k in enumerate(ks):
            du, ds, i = leaf.leaf_coords(X[kk], radii.max())
            for a, b, bi in zip(du, ds, i):
                if abs(a) > tol:
                    continue
                inside = np.abs(centers - b) <= radii
                size = f_decay(int(k))
                if inside.any() and size > 0:
                    rad = max(1.5 * radii[bi] * size, floor)
                    removed.append((float(b), float(rad), int(k)))
    used = sum(rad for _, rad, _ in removed)
    feasible = used <= budget + 1e-15
    # survivors: sampled leaf points outside the removed pieces must not return
    rng = np.random.default_rng(0)
    ok = True
    if start <= T0 and removed:
        rc = np.array([c for c, _, _ in removed])
        rr = np.array([rad for _, rad, _ in removed])
        samples = []
        for c, R in balls:
            s = rng.uniform(c - R, c + R, size=checks)
            samples.append(s[np.all(np.abs(s[:, None] - rc[None, :]) > rr[None, :], axis=1)])
        s = np.concatenate(samples)
        ks = np.arange(start, int(T0) + 1)
        X = leaf.images(s, ks).reshape(-1, 2)
        du, ds, _ = leaf.leaf_coords(X, max(R for _, R in balls))
        near = np.abs(du) <= tol
        in_ball = np.zeros(near.shape, bool)
        for c, R in balls:
            in_ball |= np.abs(ds - c) <= R
        not_removed = np.all(np.abs(ds[:, None] - rc[None, :]) > rr[None, :], axis=1)
        ok = not np.any(near & in_ball & not_removed)
    notes = [] if feasible else [f"removal sum {used:.3g} exceeds budget {budget:.3g}; lower T0"]
    return RefinementResult(removed, budget, used, start, feasible, ok, floor, notes)


# ---------------------------------------------------------------------
# recurrence gap on a negatively curved surface


@dataclass
class TranslateFamily:
    """Geodesic translates of H = {x = 0, 1 <= y <= e} in the half-plane.

    Each translate is a semicircle |z - c| = rho; the geodesic leaving
    (0, y) horizontally follows |z| = y and meets the translate at angle
    theta(y).  Returns are crossings with |theta - pi/2| <= r.
    """

    model: object
    c: np.ndarray
    rho: np.ndarray

    @classmethod
    def seeded(cls, model, count: int = 8, seed: int = 0, y_range=(1.0, np.e),
               min_gap: float = 0.08) -> "TranslateFamily":
        """Random translates whose orthogonal crossings y* are min_gap apart in arclength."""
        rng = np.random.default_rng(seed)
        lo, hi = np.log(y_range[0]) + 0.05, np.log(y_range[1]) - 0.05
        s = []
        while len(s) < count:
            if hi - lo < (count - 1) * min_gap:
                raise PreconditionError("too many translates for the requested gap")
            cand = rng.uniform(lo, hi)
            if all(abs(cand - t) >= min_gap for t in s):
                s.append(cand)
        ystar = np.exp(np.array(s))
        c = np.sign(rng.uniform(-1, 1, count)) * (ystar + rng.uniform(0.2, 3.0, count))
        rho = np.sqrt(c**2 - ystar**2)
        return cls(model, c, rho)

    def crossing(self, y):
        """(angle, return time) of |z| = y with each translate; nan where they miss."""
        y = np.asarray(y, float)[:, None]
        c, rho = self.c[None, :], self.rho[None, :]
        xi = (y**2 - rho**2 + c**2) / (2 * c)
        ok = np.abs(xi) < y
        cos_t = np.clip((y**2 + rho**2 - c**2) / (2 * y * rho), -1, 1)
        theta = np.where(ok, np.arccos(cos_t), np.nan)
        t = np.where(ok, np.arctanh(np.clip(np.abs(xi) / y, 0, 1 - 1e-16)), np.nan)
        return theta, t


class GeodesicTubeFamily:
    """Tubes along H = {x = 0, 1 <= y <= e} at arclength spacing r (one conormal side)."""

    def __init__(self, model, r: float, y_range=(1.0, np.e)):
        if getattr(model, "curvature_kind", "") in ("flat", "constant_positive"):
            raise PreconditionError("recurrence gap check needs a negatively curved surface")
        self.model = model
        self.r = float(r)
        s0, s1 = np.log(y_range[0]), np.log(y_range[1])
        n = int(round((s1 - s0) / r))
        self.s = s0 + (np.arange(n) + 0.5) * (s1 - s0) / n
        self.y = np.exp(self.s)

    @property
    def N(self) -> int:
        return len(self.y)

    def looping(self, translates: TranslateFamily, t0: float, T0: float) -> LoopingReport:
        theta, t = translates.crossing(self.y)
        dev = np.abs(theta - np.pi / 2)
        hit = (dev <= self.r) & (t >= t0) & (t <= T0)
        j, k = np.nonzero(hit)
        events = np.column_stack([t[j, k], j, k, dev[j, k]]) if j.size else np.empty((0, 4))
        windows = [[] for _ in range(self.N)]
        nearest = np.full(self.N, np.inf)
        for tt, a, _, d in events:
            windows[int(a)].append((tt, tt))
            nearest[int(a)] = min(nearest[int(a)], d)
        return LoopingReport(t0, T0, events, [merge_windows(w) for w in windows], nearest, 0.0, 0.0, 1, self.N)


@dataclass
class GapReport:
    r: float
    max_intra: float
    min_inter: float
    c_tilde: float
    c3: float
    gap: bool
    window_counts: dict
    looping_count: int
    normalized: float


def recurrence_gap_check(cover: GeodesicTubeFamily, report: LoopingReport, r: float, tau: float = 0.5,
                         margin: float = 0.25) -> GapReport:
    """Looping tubes sharing a tau/2 window are either close or far apart.

    Distances between looping tubes returning to the same translate within
    a common window give the intra scale; distances between tubes returning
    to different translates in that window give the inter scale.  The
    calibrated constants are c_tilde = max_intra ln(1/r)^2 (1 + margin) and
    c3 = min_inter (1 - margin); the check passes when the excluded band
    [c_tilde ln(1/r)^-2, c3] is nonempty.
    """
    if getattr(cover.model, "curvature_kind", "") in ("flat", "constant_positive"):
        raise PreconditionError("recurrence gap check needs a negatively curved surface")
    ev = report.events
    width = tau / 2
    bins = np.floor(ev[:, 0] / width).astype(int) if len(ev) else np.empty(0, int)
    max_intra, min_inter = 0.0, np.inf
    counts = {}
    for b in np.unique(bins):
        e = ev[bins == b]
        tubes = e[:, 1].astype(int)
        trans = e[:, 2].astype(int)
        counts[int(b)] = int(np.unique(tubes).size)
        s = cover.s[tubes]
        D = np.abs(s[:, None] - s[None, :])
        same = trans[:, None] == trans[None, :]
        if same.any():
            max_intra = max(max_intra, float(D[same].max()))
        if (~same).any():
            min_inter = min(min_inter, float(D[~same].min()))
    L = np.log(1 / r) ** 2
    c_tilde = max_intra * L * (1 + margin)
    c3 = min_inter * (1 - margin)
    looping = int(np.unique(ev[:, 1]).size) if len(ev) else 0
    return GapReport(r, max_intra, min_inter, c_tilde, c3, bool(c_tilde / L < c3), counts, looping, looping * r)
