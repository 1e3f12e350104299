import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geobeam.conormal import Submanifold
from geobeam.cover import build_good_cover
from geobeam.flow import PreconditionError
from geobeam.ladder import (
    CatLeaf,
    CatMapLeafCover,
    CertificateError,
    GeodesicTubeFamily,
    TranslateFamily,
    cat_certificate,
    controlled_refinement,
    controlled_start,
    dyadic_ladder,
    fit_rung_ratio,
    flow_certificate,
    recurrence_gap_check,
)
from geobeam.manifold import FlatTorus, HyperbolicHalfPlane, RoundSphere


@pytest.fixture(scope="module")
def leaf():
    return CatLeaf.seeded(length=4.0, seed=3)


def test_leaf_images_and_coordinates(leaf):
    s = np.array([-1.5, 0.0, 0.7])
    X0 = leaf.images(s, [0])[0]
    np.testing.assert_allclose(X0, np.mod(leaf.p0 + s[:, None] * leaf.e_s, 1.0), atol=1e-12)
    du, ds, i = leaf.leaf_coords(X0, 0.0)
    on = np.abs(du) < 1e-9
    # each leaf point is recovered at its own leaf coordinate
    for j, sj in enumerate(s):
        assert np.any(on & (i == j) & (np.abs(ds - sj) < 1e-9))


def test_leaf_images_follow_the_map(leaf):
    s = np.array([0.3])
    X = leaf.images(s, [0, 1, 2])
    M = leaf.system.M.astype(float)
    np.testing.assert_allclose(X[1, 0], np.mod(M @ X[0, 0], 1.0), atol=1e-9)
    np.testing.assert_allclose(X[2, 0], np.mod(M @ X[1, 0], 1.0), atol=1e-9)


def test_cat_certificate_is_exact(leaf):
    cov = CatMapLeafCover(leaf, 0.25)
    cert = cat_certificate(cov, 10)
    np.testing.assert_allclose(cert[0], abs(leaf.lambda_s) ** np.arange(11))
    assert len(cert) == cov.N == 16


@given(st.floats(0.1, 0.9), st.floats(10, 1e4), st.integers(3, 7))
def test_fit_rung_ratio_recovers_geometric(ratio, c0, n):
    counts = c0 * ratio ** np.arange(n)
    fit = fit_rung_ratio(counts)
    assert fit["ratio"] == pytest.approx(ratio, rel=1e-9)
    assert fit["prefactor"] == pytest.approx(c0, rel=1e-9)


def test_fit_rung_ratio_degenerate():
    assert fit_rung_ratio([5, 0, 0])["ratio"] == 0.0


def test_dyadic_ladder_catmap(leaf):
    cov = CatMapLeafCover(leaf, 2.0**-5)
    rep = cov.looping(2, 128)
    part = dyadic_ladder(cov, rep, 2, 128, cat_certificate(cov, 128))
    assert part.counts["m"] == 6
    assert np.array_equal(part.covered(), np.arange(cov.N))
    # rung windows halve
    assert [g.T for g in part.rungs] == [128 / 2**l for l in range(7)]
    # the union of each rung is re-verified non-looping at double probe density
    for g in part.rungs:
        if len(g.G):
            r2 = cov.looping(g.t, g.T, density=2, sources=g.G, targets=g.G)
            assert not np.isin(r2.events[:, 2].astype(int), g.G).any() if len(r2.events) else True


def test_dyadic_ladder_needs_certificate(leaf):
    cov = CatMapLeafCover(leaf, 0.25)
    rep = cov.looping(2, 16)
    with pytest.raises(CertificateError):
        dyadic_ladder(cov, rep, 2, 16, None)
    with pytest.raises(CertificateError):
        dyadic_ladder(cov, rep, 2, 16, {0: np.ones(3)})


def test_flow_certificate_sphere_never_contracts():
    c = build_good_cover(Submanifold.point(RoundSphere(2), [0, 0, 1.0]), 0.5, 0.2, tau_injectivity=2.0)
    cert = flow_certificate(c, 3.0)
    # 1 / |(A, A')| = 1 / sqrt(sin^2 + cos^2) = 1 for all t
    for d in cert.values():
        np.testing.assert_allclose(d, 1.0, atol=1e-6)


def test_flow_certificate_hyperbolic_decays():
    c = build_good_cover(Submanifold.point(HyperbolicHalfPlane(), [0, 1.0]), 0.5, 0.2, tau_injectivity=2.0)
    d = flow_certificate(c, 3.0)[0]
    assert d[-1] == pytest.approx(1 / np.sqrt(np.sinh(3.0) ** 2 + np.cosh(3.0) ** 2), rel=1e-5)


def test_controlled_start_geometric():
    lam, eps = 0.5, 0.2
    s = controlled_start(lambda k: lam**k, eps)
    target = eps / (4 * 2.0**5)
    # tail sum lam^s / (1 - lam) first drops below the target
    assert lam**s / (1 - lam) <= target * (1 + 1e-9) < lam ** (s - 1) / (1 - lam)
    with pytest.raises(PreconditionError):
        controlled_start(lambda k: 1.0 / (k + 1), 0.1, horizon=1000)


def test_refinement_zero_decay_removes_nothing(leaf):
    res = controlled_refinement(leaf, [(0.0, 0.1)], lambda k: 0.0, 0.2, 2, 64)
    assert res.removed == [] and res.feasible and res.survivors_ok


def test_refinement_budget_and_survivors(leaf):
    lam = abs(leaf.lambda_s)
    res = controlled_refinement(leaf, [(0.0, 2.0**-4), (1.0, 2.0**-4)], lambda k: lam**k, 0.2, 2, 200)
    assert res.feasible and res.survivors_ok
    assert res.used <= res.budget


def test_translate_crossing_angle():
    fam = TranslateFamily.seeded(HyperbolicHalfPlane(), count=3, seed=1)
    ystar = np.sqrt(fam.c**2 - fam.rho**2)
    th, t = fam.crossing(ystar)
    # |z| = y* and |z - c| = rho meet orthogonally since y*^2 + rho^2 = c^2
    np.testing.assert_allclose(np.diag(th), np.pi / 2, atol=1e-7)
    # the crossing point has x = y*^2 / c, reached at hyperbolic time artanh(|x| / y*)
    np.testing.assert_allclose(np.diag(t), np.arctanh(ystar / np.abs(fam.c)), rtol=1e-12)
    assert np.all(np.abs(np.log(ystar[:, None]) - np.log(ystar[None, :])) + np.eye(3) >= 0.08)


def test_recurrence_gap_refuses_flat_and_positive():
    for M in (FlatTorus(2), RoundSphere(2)):
        with pytest.raises(PreconditionError):
            GeodesicTubeFamily(M, 1e-2)


def test_recurrence_gap_hyperbolic():
    M = HyperbolicHalfPlane()
    fam = GeodesicTubeFamily(M, 1e-3)
    rep = fam.looping(TranslateFamily.seeded(M), 0.0, 20.0)
    g = recurrence_gap_check(fam, rep, 1e-3)
    assert g.gap and g.max_intra < g.min_inter
    assert g.c3 > g.c_tilde / np.log(1e3) ** 2


def test_recurrence_gap_count_shrinks_with_radius():
    # looping measure (count * r) per decade of r must fall at least like the
    # (ln ratio)^2 trendline, with 30% slack
    M = HyperbolicHalfPlane()
    norm = {}
    for r in (1e-2, 1e-3, 1e-4):
        fam = GeodesicTubeFamily(M, r)
        rep = fam.looping(TranslateFamily.seeded(M), 0.0, 20.0)
        norm[r] = recurrence_gap_check(fam, rep, r).normalized
    for big, small in ((1e-2, 1e-3), (1e-3, 1e-4)):
        trend = (np.log(1 / small) / np.log(1 / big)) ** 2
        assert norm[big] / norm[small] >= 0.7 * trend
