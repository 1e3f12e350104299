"""End-to-end acceptance checks, one test per criterion (each asserts its own runtime)."""

import time

import numpy as np
import pytest

from geobeam import harness
from geobeam.bound import ConstantsLedger, evaluate_bound, ladder_counts, make_schedule, quantitative_ift
from geobeam.conormal import Submanifold
from geobeam.cover import build_good_cover, classify_looping, partition_single_window, union_nonlooping
from geobeam.eigenlab import (
    AverageRecord,
    average_over,
    compare_growth,
    equator,
    growth_fit,
    pole_records,
    sphere_zonal,
    torus_eigenfunction,
)
from geobeam.flow import (
    conjugate_points,
    panda_subspace,
    phase_point,
    propagate_linearization,
    random_piecewise_curvature,
    riccati_bound_check,
)
from geobeam.ladder import CatLeaf, CatMapLeafCover, cat_certificate, dyadic_ladder
from geobeam.manifold import FlatTorus, HyperbolicHalfPlane, RoundSphere, gauss_bonnet_defect


class Clock:
    def __enter__(self):
        self.t = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t


@pytest.mark.criterion(1, "conjugate points on S^2, S^3 and the flat torus")
def test_conjugate_point_exactness():
    with Clock() as c:
        S2 = RoundSphere(2)
        seg = propagate_linearization(S2, phase_point(S2, [1.0, 0, 0], [0, 1.0, 0]), 7.0, step=1e-3)
        pts = conjugate_points(seg).points
        S3 = RoundSphere(3)
        seg3 = propagate_linearization(S3, phase_point(S3, [1.0, 0, 0, 0], [0, 0, 1.0, 0]), 4.0, step=1e-3)
        p3 = conjugate_points(seg3).points
        T = FlatTorus(2)
        segT = propagate_linearization(T, phase_point(T, [0.3, 0.1], [1.0, np.sqrt(2)]), 50.0, step=1e-2)
        pT = conjugate_points(segT).points
    assert [m for _, m in pts] == [1, 1]
    assert np.all(np.abs(np.array([t for t, _ in pts]) - [np.pi, 2 * np.pi]) <= 2e-3)
    assert len(p3) == 1 and abs(p3[0][0] - np.pi) <= 2e-3 and p3[0][1] == 2
    assert pT == []
    assert c.elapsed < 10


@pytest.mark.criterion(2, "Riccati comparison over 200 random curvature profiles")
def test_riccati_comparison():
    rng = np.random.default_rng(2024)
    worst = -np.inf
    with Clock() as c:
        for i in range(200):
            k = [0.5, 1.0, 2.0][i % 3]
            m = [1, 2, 3][(i // 3) % 3]
            R = random_piecewise_curvature(k, m, 0.0, 3.0, rng)
            res = riccati_bound_check(R, k, np.linspace(0.0, 3.0, 301), rng=rng)
            worst = max(worst, res["max_violation"])
        sat = riccati_bound_check(lambda t: -np.eye(2), 1.0, np.linspace(0.0, 3.0, 301))
    assert worst <= 1e-6
    assert abs(sat["saturation_gap"]) <= 1e-6
    assert c.elapsed < 60


@pytest.mark.criterion(3, "panda factor on S^2 scales like a/eps + b")
def test_panda_factor():
    S2 = RoundSphere(2)
    eps_grid = np.array([0.2, 0.25, 0.3, 0.35, 0.4])
    with Clock() as c:
        seg = propagate_linearization(S2, phase_point(S2, [1.0, 0, 0], [0, 1.0, 0]), 3.2, step=1e-3)
        factors = []
        for eps in eps_grid:
            t0 = np.pi - 2 * eps - 1e-3
            factors.append(panda_subspace(seg, t0, eps, 0).factor)
    factors = np.array(factors)
    assert np.all(np.isfinite(factors))
    X = np.column_stack([1 / eps_grid, np.ones_like(eps_grid)])
    coef, *_ = np.linalg.lstsq(X, factors, rcond=None)
    rel = np.abs(X @ coef - factors) / factors
    assert coef[0] > 0 and rel.max() < 0.2
    assert c.elapsed < 30


@pytest.mark.criterion(4, "sphere: all tubes bad and an h-independent bound")
@pytest.mark.parametrize("kind", ["point", "equator"])
def test_sphere_full_recurrence(kind):
    S2 = RoundSphere(2)
    H = Submanifold.point(S2, [0, 0, 1.0]) if kind == "point" else equator(S2)
    led = ConstantsLedger.standard(0.0)
    with Clock() as c:
        cover = build_good_cover(H, 0.5, 0.05)
        rep = classify_looping(cover, 1.2, 7.0)
        part = partition_single_window(cover, rep, 1.2, 7.0)
        b = np.array([evaluate_bound(part, h, led).bound for h in (1e-2, 1e-3, 1e-4, 1e-5)])
    assert len(part.B) == cover.N
    assert b.max() / b.min() <= 1.1
    assert c.elapsed < 120


@pytest.fixture(scope="module")
def torus_sweep():
    T = FlatTorus(2)
    H = Submanifold.point(T, [1.0, 2.0])
    led = ConstantsLedger.standard(0.0)
    t = time.perf_counter()
    cover = build_good_cover(H, 0.5, 1e-2)
    rep = classify_looping(cover, 1.2, 20.0)
    parts = {T0: partition_single_window(cover, rep, 1.2, T0) for T0 in (5.0, 10.0, 20.0)}
    bounds = [evaluate_bound(parts[T0], 1e-3, led).bound for T0 in (5.0, 10.0, 20.0)]
    union_ok = union_nonlooping(cover, parts[20.0], 2)
    return cover, parts, bounds, union_ok, time.perf_counter() - t


def _ideal_bad_count(cover, T0):
    """Tubes whose direction range contains a closed-geodesic direction of length <= T0 + tau."""
    ang = np.arctan2(cover.V[:, 1], cover.V[:, 0])
    dirs = [np.arctan2(b, a) for a in range(-5, 6) for b in range(-5, 6)
            if (a or b) and np.gcd(a, b) == 1 and 2 * np.pi * np.hypot(a, b) <= T0 + cover.tau]
    if not dirs:
        return 0
    gap = np.abs((ang[:, None] - np.array(dirs)[None, :] + np.pi) % (2 * np.pi) - np.pi)
    return int(np.sum(gap.min(axis=1) < cover.r))


@pytest.mark.criterion(5, "torus point: few bad tubes and verified union at T0=20")
def test_torus_improvement(torus_sweep):
    cover, parts, _, union_ok, elapsed = torus_sweep
    assert len(parts[20.0].B) / cover.N <= 0.2
    assert parts[20.0].verified and union_ok
    assert elapsed < 120
    # oracle: up to the second family of closed directions the probe test
    # finds every tube that provably loops, and only a few boundary extras
    for T0 in (5.0, 10.0):
        ideal = _ideal_bad_count(cover, T0)
        assert ideal <= len(parts[T0].B) <= ideal + 4


@pytest.mark.criterion("5b", "torus point: bound decreasing in T0 over {5, 10, 20}")
@pytest.mark.xfail(strict=True, reason="at r=1e-2 the sqrt|B| term outgrows the good-term gain between "
                                       "T0=5 and T0=10, even for the exact minimal bad set; see decisions ledger")
def test_torus_bound_monotone_in_T0(torus_sweep):
    _, _, bounds, _, _ = torus_sweep
    assert bounds[0] > bounds[1] > bounds[2]


@pytest.mark.criterion(6, "cat-map dyadic ladder counting law")
def test_ladder_counting_law():
    with Clock() as c:
        leaf = CatLeaf.seeded(length=4.0, seed=0)
        cov = CatMapLeafCover(leaf, 2.0**-7)
        rep = cov.looping(2, 2**10)
        part = dyadic_ladder(cov, rep, 2, 2**10, cat_certificate(cov, 2**10))
    r = cov.r
    assert part.counts["ratio"] <= 0.55
    assert len(part.B) * r <= 0.05 * cov.N * r
    assert np.array_equal(part.covered(), np.arange(cov.N))
    assert c.elapsed < 120


@pytest.mark.criterion(7, "sqrt(log) shape of the bound under the tangent-space schedule")
def test_sqrt_log_shape():
    with Clock() as c:
        led = ConstantsLedger.standard(0.1, c_tilde=0.02)
        hs = np.geomspace(1e-6, 1e-2, 13)
        sched = make_schedule("tangentSpace", 0.04, hs, led)
        assert sched.dropped == []
        vals = []
        for h in hs:
            counts = ladder_counts(1.0, float(sched.R(h)), 1, 1.0, float(sched.T0(h)), ratio=0.2)
            vals.append(evaluate_bound(counts, h, led, sched).bound * np.sqrt(np.log(1 / h)))
    vals = np.array(vals)
    assert vals.max() / vals.min() <= 3
    assert c.elapsed < 5


@pytest.mark.criterion(8, "eigenfunction ground truth and growth fits")
def test_eigenfunction_ground_truth():
    with Clock() as c:
        T = FlatTorus(2)
        circ = Submanifold.curve(T, lambda u: np.array([u, 0.0]), (0.0, 2 * np.pi), periodic=True)
        for m in [(0, 0), (0, 1), (0, 9), (1, 0), (4, 0), (2, 3), (7, 1), (0, 25)]:
            rec = average_over(circ, torus_eigenfunction(m))
            assert abs(rec.integral - (1.0 if m[0] == 0 else 0.0)) < 1e-8
        north = np.array([0.0, 0.0, 1.0])
        for l in range(401):
            assert abs(sphere_zonal(l)(north) - np.sqrt((2 * l + 1) / (4 * np.pi))) < 1e-8
        fit = growth_fit(pole_records(), "power")
        lam = np.geomspace(10, 1e4, 12)
        syn = [AverageRecord("synthetic", "1", x, 0, 3 * x**0.5 / np.sqrt(np.log(x)), 0.0) for x in lam]
        pref = compare_growth(syn)["preferred"]
    assert abs(fit["exponent"] - 0.5) <= 0.03
    assert pref == "power_over_sqrtlog"
    assert c.elapsed < 60


def _S_direct(L, B, m, radii):
    r0, r1, r2 = radii
    vals = [b(r0, r1, r2) if callable(b) else b for b in B]
    return abs(L) * sum(mi * float(v) * ri for mi, v, ri in zip(m, vals, radii))


def _iterate(f, L, radii, rng, n=100, iters=500):
    conv, worst = 0, 0.0
    for _ in range(n):
        x0 = rng.uniform(-radii[0], radii[0], 1)
        x1 = rng.uniform(-radii[1], radii[1], 1)
        x2 = rng.uniform(-radii[2], radii[2], 1)
        x, prev = x0, None
        for _ in range(iters):
            nxt = x - L * f(x, x1, x2)
            step = float(np.abs(nxt - x)[0])
            if prev and step > 1e-14:
                worst = max(worst, step / prev)
            x, prev = nxt, step
            if step < 1e-14:
                conv += 1
                break
    return conv, worst


@pytest.mark.criterion(9, "quantitative implicit function theorem on three test maps")
def test_quantitative_ift():
    rng = np.random.default_rng(9)
    with Clock() as c:
        for name, f, B, Bt in harness.IFT_FIXTURES:
            res = quantitative_ift(f, 1.0, B, Bt, (1, 1, 1), rng=rng)
            S = _S_direct(1.0, B, (1, 1, 1), res.radii)
            assert S < 1 and S == pytest.approx(res.S, abs=1e-12), name
            assert res.converged == res.samples == 100, name
            assert res.max_ratio <= S + 0.02, name
            conv, worst = _iterate(f, 1.0, res.radii, rng)
            assert conv == 100 and worst <= S + 0.02, name
    assert c.elapsed < 10


@pytest.mark.criterion(10, "Gauss-Bonnet fixtures on the sphere and the hyperbolic plane")
def test_gauss_bonnet():
    with Clock() as c:
        tri = gauss_bonnet_defect(RoundSphere(2), [np.array([1.0, 0, 0]), np.array([0, 1.0, 0]),
                                                   np.array([0, 0, 1.0])])
        quad = gauss_bonnet_defect(HyperbolicHalfPlane(), [np.array([-0.5, 1.0]), np.array([0.6, 1.1]),
                                                           np.array([0.5, 2.2]), np.array([-0.4, 1.9])])
    assert abs(tri["excess"] - tri["curvature_integral"]) < 1e-4
    assert abs(quad["excess"] - quad["curvature_integral"]) < 1e-3
    assert c.elapsed < 10


@pytest.mark.criterion(11, "byte-identical CSVs on rerun with the same seed")
@pytest.mark.parametrize("name", ["sphere_point", "catmap_ladder"])
def test_determinism(name, tmp_path):
    sc = harness.Scenario.load(name)
    harness.run(sc.with_overrides(out=tmp_path / "a"))
    harness.run(sc.with_overrides(out=tmp_path / "b"))
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert len(csvs) >= 5
    for n in csvs + ["cover.json"] if (tmp_path / "a" / "cover.json").exists() else csvs:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n
