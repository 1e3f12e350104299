"""Good covers of SN*H by tubes, looping classification and good/bad partitions."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx
import numpy as np

from .conormal import (
    ConormalPoint,
    ProxyIndex,
    Submanifold,
    Tube,
    sample_snh,
    sasaki_batch,
    tau_inj as _tau_inj,
)
from .flow import LAMBDA_FLOOR, HorizonError, PreconditionError, flow_states, phase_point, tangent_vector
from .manifold import ManifoldModel

DETECT_FACTOR = 1.5
SEPARATION = 0.85
COMPLETION = 0.5
D_MAX_DEFAULT = {1: 10, 2: 40}


class CoverError(RuntimeError):
    pass


# ---------------------------------------------------------------------
# good covers


@dataclass
class GoodCover:
    H: Submanifold
    tau: float
    r: float
    tubes: list
    colors: np.ndarray
    X: np.ndarray  # center states
    V: np.ndarray
    covering_radius: float
    threads: int = 1

    @property
    def model(self) -> ManifoldModel:
        return self.H.model

    @property
    def N(self) -> int:
        return len(self.tubes)

    @property
    def D(self) -> int:
        return int(self.colors.max()) + 1 if len(self.colors) else 0

    @property
    def snh_dim(self) -> int:
        return self.model.dim - 1

    def color_classes(self):
        return [np.flatnonzero(self.colors == c) for c in range(self.D)]

    def looping(self, t0, T0, density=1, sources=None, targets=None, lam_hat=None):
        return classify_looping(self, t0, T0, density=density, sources=sources, targets=targets, lam_hat=lam_hat,
                               threads=self.threads)


def _greedy_net(model, X, V, sep):
    """Indices of a greedy maximal ``sep``-separated subset (in the given order)."""
    chosen = []
    CX = np.empty((0, X.shape[1]))
    CV = np.empty((0, V.shape[1]))
    for i in range(len(X)):
        if len(chosen):
            d = sasaki_batch(model, X[i], V[i], CX, CV)
            if d.min() < sep:
                continue
        chosen.append(i)
        CX = np.vstack([CX, X[i]])
        CV = np.vstack([CV, V[i]])
    return chosen


def _valid_coloring(G, colors):
    return all(colors[a] != colors[b] for a, b in G.edges)


def _color(G: nx.Graph) -> np.ndarray:
    """Color each connected component separately; colors are shared across components."""
    n = G.number_of_nodes()
    out = np.zeros(n, dtype=int)
    for comp in nx.connected_components(G):
        nodes = sorted(comp)
        sub = nx.convert_node_labels_to_integers(G.subgraph(nodes), ordering="sorted")
        out[nodes] = _color_connected(sub)
    return out


def _color_connected(G: nx.Graph) -> np.ndarray:
    """Fewest colors among greedy strategies and cyclic colorings in net order."""
    n = G.number_of_nodes()
    best = None
    for strat in ("largest_first", "saturation_largest_first", "smallest_last"):
        col = nx.greedy_color(G, strategy=strat)
        c = np.array([col[j] for j in range(n)])
        if best is None or c.max() < best.max():
            best = c
    order = np.arange(n)
    lo = max((len(c) for c in nx.find_cliques(G)), default=1) if n < 5000 else 1
    for D in range(lo, int(best.max()) + 1):
        c = order % D
        if _valid_coloring(G, c):
            return c
        # blocks of length D or D+1, each colored 0, 1, ...
        P = n // D
        if P:
            starts = (np.arange(P + 1) * n) // P
            c = np.concatenate([np.arange(b - a) for a, b in zip(starts[:-1], starts[1:])])
            if c.max() < best.max() and _valid_coloring(G, c):
                return c
    return best


def build_good_cover(H: Submanifold, tau: float, r: float, R0: float = 1.0, D_max: Optional[int] = None,
                     tau_injectivity: Optional[float] = None) -> GoodCover:
    """A (D, tau, r)-good cover of SN*H.

    Centers form a greedy 0.85r-separated subset of a fine SN*H net,
    completed so that every net point lies within r/2 of a center;
    colors come from greedy coloring of the graph joining centers closer
    than 6r (tubes meeting at radius 3r).
    """
    if r <= 0 or r > R0:
        raise PreconditionError(f"need 0 < r <= R0={R0}")
    ti = _tau_inj(H) if tau_injectivity is None else tau_injectivity
    if not 0 < tau <= ti / 2 + 1e-12:
        raise PreconditionError(f"need 0 < tau <= tau_inj/2 = {ti / 2}")
    model = H.model
    net = sample_snh(H, r / 10)
    X = np.array([c.rho.x for c in net])
    V = np.array([c.rho.velocity(model) for c in net])
    chosen = _greedy_net(model, X, V, SEPARATION * r)
    idx = ProxyIndex(model, X[chosen], V[chosen])
    # completion pass
    for i in range(len(net)):
        hits = idx.query(X[i], V[i], COMPLETION * r)[0][0]
        if hits.size == 0:
            chosen.append(i)
            idx = ProxyIndex(model, X[chosen], V[chosen])
    chosen = sorted(set(chosen))
    CX, CV = X[chosen], V[chosen]
    nearest = np.array([d.min() for _, d in idx.query(X, V, r)]) if len(net) < 200000 else np.array([0.0])
    tubes = [Tube(center=ConormalPoint(net[i].u, net[i].w, net[i].rho, j), tau=tau, r=r, id=j) for j, i in enumerate(chosen)]
    G = nx.Graph()
    G.add_nodes_from(range(len(chosen)))
    cidx = ProxyIndex(model, CX, CV)
    for j, (nb, _) in enumerate(cidx.query(CX, CV, 6 * r)):
        G.add_edges_from((j, int(k)) for k in nb if k > j)
    colors = _color(G)
    cover = GoodCover(H, tau, r, tubes, colors, CX, CV, float(nearest.max()))
    dmax = D_max if D_max is not None else D_MAX_DEFAULT.get(cover.snh_dim, 200)
    if cover.D > dmax:
        raise CoverError(f"color count {cover.D} exceeds D_max={dmax}")
    return cover


def check_coloring(cover: GoodCover) -> bool:
    """Within each color class, centers are at least 6r apart."""
    for cls in cover.color_classes():
        if len(cls) < 2:
            continue
        D = sasaki_batch(cover.model, cover.X[cls][:, None], cover.V[cls][:, None], cover.X[cls][None], cover.V[cls][None])
        np.fill_diagonal(D, np.inf)
        if D.min() < 6 * cover.r:
            return False
    return True


def _random_snh(H: Submanifold, rng):
    model = H.model
    if H.kind == "point":
        th = rng.uniform(0, 2 * np.pi)
        return H.state(0.0, th)
    u = rng.uniform(*H.domain)
    return H.state(u, rng.choice([-1, 1]))


def check_cover_property(cover: GoodCover, samples: int = 10_000, rng=None) -> int:
    """Monte Carlo test of the cover property; returns the number of misses.

    Points of the flow-out of the r/2 slice neighbourhood of SN*H are drawn
    and tested for membership in some tube by orbit sampling at step r/4.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    model = cover.model
    H = cover.H
    r, tau = cover.r, cover.tau
    m = model.dim - 1
    Q = []
    for _ in range(samples):
        x, v = _random_snh(H, rng)
        c = np.zeros(1 + 2 * m)
        d = rng.standard_normal(2 * m)
        d *= rng.uniform(0, 0.5 * r) / np.linalg.norm(d)
        c[1:] = d
        dx, dv = tangent_vector(model, x, v, c)
        x1, v1 = model.normalize(x + dx, v + dv)
        t = rng.uniform(-tau - r / 2, tau + r / 2)
        Q.append(flow_states(model, x1, v1, t))
    QX = np.array([q[0] for q in Q])
    QV = np.array([q[1] for q in Q])
    T = tau + r
    ts = np.arange(-T, T + 1e-12, r / 4)
    idx = ProxyIndex(model, cover.X, cover.V)
    found = np.zeros(samples, bool)
    for t in ts:
        live = ~found
        if not live.any():
            break
        X, V = flow_states(model, QX[live], QV[live], np.full(live.sum(), t))
        pre = idx.candidates(X, V, r)
        sub = np.flatnonzero(live)[pre]
        if sub.size:
            res = idx.query(X[pre], V[pre], r)
            hit = np.array([len(h[0]) > 0 for h in res])
            found[sub[hit]] = True
    return int((~found).sum())


# ---------------------------------------------------------------------
# looping classification


@dataclass
class LoopingReport:
    """Returns of tubes to the r-neighbourhood of SN*H.

    ``events`` holds rows (time, source tube, target tube, distance) of
    probe-orbit samples within the detection radius of a target center;
    ``windows[j]`` lists the merged intervals of [t0, T0] over which tube j
    meets its return set.
    """

    t0: float
    T0: float
    events: np.ndarray
    windows: list
    nearest: np.ndarray
    dilation: float
    step: float
    density: int
    n_tubes: int
    sources: np.ndarray = None
    targets: np.ndarray = None

    def looping_tubes(self, t0=None, T0=None) -> np.ndarray:
        t0 = self.t0 if t0 is None else t0
        T0 = self.T0 if T0 is None else T0
        out = [j for j, w in enumerate(self.windows) if any(b >= t0 and a <= T0 for a, b in w)]
        return np.array(out, dtype=int)

    def to_rows(self):
        rows = []
        for j, w in enumerate(self.windows):
            if not w:
                rows.append([j, "", "", self.nearest[j]])
            for a, b in w:
                rows.append([j, a, b, self.nearest[j]])
        return rows


def merge_windows(intervals, gap: float = 0.0):
    out = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1] + gap:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(float(a), float(b)) for a, b in out]


def _windows_from_events(events, n, t0, T0, dilation, gap):
    per = [[] for _ in range(n)]
    for t, s, _, _ in events:
        a, b = max(t - dilation, t0), min(t + dilation, T0)
        if a <= b:
            per[int(s)].append((a, b))
    return [merge_windows(w, gap) for w in per]


def probe_states(cover: GoodCover, density: int = 1, scale: float = 1.0):
    """Probe states per tube: the center and +-r offsets along T SN*H.

    Density 2 adds the +-r/2 offsets.  Returns (X, V, owner).
    """
    H = cover.H
    model = cover.model
    offsets = [0.0, 1.0, -1.0] + ([0.5, -0.5] if density >= 2 else [])
    X, V, owner = [], [], []
    speed_cache = {}
    for tube in cover.tubes:
        c = tube.center
        for o in offsets:
            s = o * cover.r * scale
            if H.kind == "point":
                if model.dim != 2:
                    x, v = c.rho.x, c.rho.velocity(model)
                    if o != 0:
                        continue
                else:
                    x, v = H.state(0.0, c.w + s)
            else:
                if c.u not in speed_cache:
                    speed_cache[c.u] = model.norm(H.param(c.u), H.tangent(c.u))
                u = c.u + s / speed_cache[c.u]
                if not H.periodic:
                    u = min(max(u, H.domain[0]), H.domain[1])
                x, v = H.state(u, c.w)
            X.append(x)
            V.append(v)
            owner.append(tube.id)
    return np.array(X), np.array(V), np.array(owner)


def _lambda_for(model, lam_hat):
    if lam_hat is not None:
        return max(lam_hat, LAMBDA_FLOOR)
    if model.curvature_kind in ("flat", "constant_positive"):
        return LAMBDA_FLOOR
    if model.curvature_kind == "constant_negative":
        return float(np.sqrt(-model.K))
    from .flow import estimate_lambda_max

    return max(estimate_lambda_max(model, 32, 5.0)["lambda_max"], LAMBDA_FLOOR)


def classify_looping(cover: GoodCover, t0: float, T0: float, density: int = 1, sources=None, targets=None,
                     lam_hat: Optional[float] = None, chunk: int = 64, max_samples: float = 5e8,
                     threads: int = 1) -> LoopingReport:
    """Flow tube probes and record returns to the r-neighbourhood of SN*H.

    Probe orbits are sampled at step min(tau/4, r/(2 e^Lambda)) / density
    over [t0 - 2(tau+r), T0 + 2(tau+r)]; a return is a sample within
    1.5 r of a target center.  Optional ``sources`` / ``targets`` restrict
    the tubes that are flowed / detected (union-level tests).
    """
    tau, r = cover.tau, cover.r
    dil = 2 * (tau + r)
    if not T0 >= t0 > 0:
        raise PreconditionError("need T0 >= t0 > 0")
    if t0 <= dil:
        raise PreconditionError(f"t0={t0} must exceed 2(tau + r)={dil} (tubes always meet themselves before)")
    model = cover.model
    lam = _lambda_for(model, lam_hat)
    step = min(tau / 4, r / (2 * np.exp(lam))) / density
    ts = np.arange(t0 - dil, T0 + dil + 1e-12, step)
    X, V, owner = probe_states(cover, density)
    src = np.arange(cover.N) if sources is None else np.asarray(sources, int)
    tgt = np.arange(cover.N) if targets is None else np.asarray(targets, int)
    keep = np.isin(owner, src)
    X, V, owner = X[keep], V[keep], owner[keep]
    if len(ts) * len(X) > max_samples:
        raise HorizonError(f"{len(ts) * len(X):.2e} orbit samples exceed the budget; lower T0 or raise r")
    idx = ProxyIndex(model, cover.X[tgt], cover.V[tgt])
    R = DETECT_FACTOR * r
    def scan(k):
        out = []
        tt = ts[k : k + chunk]
        XX, VV = flow_states(model, X[:, None, :], V[:, None, :], tt[None, :])
        XX = model.wrap(XX).reshape(-1, X.shape[1])
        VV = VV.reshape(-1, V.shape[1])
        pre = np.flatnonzero(idx.candidates(XX, VV, R))
        if pre.size == 0:
            return out
        res = idx.query(XX[pre], VV[pre], R)
        for p, (js, ds) in zip(pre, res):
            i, kk = divmod(p, len(tt))
            for j, d in zip(js, ds):
                out.append((tt[kk], owner[i], tgt[j], d))
        return out

    starts = range(0, len(ts), chunk)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(scan, starts))
    else:
        parts = [scan(k) for k in starts]
    ev = [e for part in parts for e in part]
    events = np.array(ev, float).reshape(-1, 4)
    windows = _windows_from_events(events, cover.N, t0, T0, dil, tau / 4)
    nearest = np.full(cover.N, np.inf)
    for _, s, _, d in events:
        nearest[int(s)] = min(nearest[int(s)], d)
    return LoopingReport(t0, T0, events, windows, nearest, dil, step, density, cover.N, src, tgt)


# ---------------------------------------------------------------------
# partitions


@dataclass
class Rung:
    G: np.ndarray
    t: float
    T: float


@dataclass
class CoverPartition:
    cover: object
    B: np.ndarray
    rungs: list
    verified: bool = False
    notes: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.cover.N

    def covered(self) -> np.ndarray:
        parts = [self.B] + [g.G for g in self.rungs]
        return np.unique(np.concatenate(parts)) if parts else np.empty(0, int)

    def check_windows(self, T_max: float):
        for l, g in enumerate(self.rungs):
            if g.T > T_max + 1e-12:
                raise PreconditionError(f"rung {l}: T_l={g.T:.4g} exceeds 2 alpha T_e(h)={T_max:.4g}")

    def summary(self) -> dict:
        return {
            "N": self.N,
            "B": int(len(self.B)),
            "rungs": [(int(len(g.G)), g.t, g.T) for g in self.rungs],
            "verified": self.verified,
        }


def partition_single_window(cover, report: LoopingReport, t0: float, T0: float, retest: bool = True,
                            max_rounds: int = 20) -> CoverPartition:
    """B = tubes with a return window in [t0, T0]; one good rung (G, t0, T0).

    The union of G is then re-tested from scratch at double probe density
    with G as both sources and targets; offending sources move to B until
    the union test passes.
    """
    bad = set(report.looping_tubes(t0, T0).tolist())
    G = np.array(sorted(set(range(cover.N)) - bad), dtype=int)
    notes = []
    verified = not retest
    if retest and len(G):
        for _ in range(max_rounds):
            rep2 = cover.looping(t0, T0, density=2, sources=G, targets=G)
            off = set(rep2.looping_tubes(t0, T0).tolist()) & set(G.tolist())
            if not off:
                verified = True
                break
            notes.append(f"union re-test moved {len(off)} tubes to B")
            bad |= off
            G = np.array(sorted(set(G.tolist()) - off), dtype=int)
        else:
            notes.append("union re-test did not settle")
    elif retest:
        verified = True
    B = np.array(sorted(bad), dtype=int)
    return CoverPartition(cover, B, [Rung(G, t0, T0)], verified, notes)


def union_nonlooping(cover, partition: CoverPartition, density: int = 2) -> bool:
    """Re-test every rung's union from scratch at the given probe density."""
    for g in partition.rungs:
        if len(g.G) == 0:
            continue
        rep = cover.looping(g.t, g.T, density=density, sources=g.G, targets=g.G)
        if len(rep.looping_tubes(g.t, g.T)):
            return False
    return True
