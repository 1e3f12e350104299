import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geobeam.bound import (
    BoundCounts,
    ConstantsLedger,
    InfeasibleError,
    baseline,
    estimate_escape_rate,
    evaluate_bound,
    ift_conditions,
    ladder_counts,
    make_schedule,
    quantitative_ift,
    semiclassical_sobolev_norm,
    sobolev_multiplier,
)
from geobeam.conormal import Submanifold
from geobeam.flow import PreconditionError
from geobeam.manifold import FlatTorus


@pytest.fixture
def ledger():
    return ConstantsLedger.standard(0.5, c_tilde=0.02)


def test_ledger_has_no_silent_defaults(ledger):
    with pytest.raises(KeyError):
        ledger.get("nonexistent")
    with pytest.raises(ValueError):
        ledger.set("x", 1.0, "guess")
    assert ledger.provenance("C_nk") == "existence-only"
    names = [row[0] for row in ledger.to_rows()]
    assert names == sorted(names)


def test_bound_hand_computed(ledger):
    counts = BoundCounts(4.0, [(9.0, 1.0, 4.0)], 0.1, 1, 2, 8.0, 0.5)
    est = evaluate_bound(counts, 1e-3, ledger, check_windows=False)
    # prefactor 8 * 0.1^(1/2) / 0.5^(1/2), bad sqrt(4), good sqrt(9 * 1/4)
    assert est.prefactor == pytest.approx(8 * np.sqrt(0.2))
    assert est.bad_term == 2.0 and est.good_term == 1.5
    assert est.bound == pytest.approx(12.521980673998822, rel=1e-12)
    assert est.classical == pytest.approx(np.sqrt(1e3))


@given(st.floats(1e-3, 0.5), st.floats(1e-3, 0.5), st.floats(1, 1e4))
def test_power_law_counts_give_radius_free_bound(r, R, c):
    # counts ~ c r^{-1} in dimension n - 1 = 1: the bound is independent of the radius
    led = ConstantsLedger.standard(0.5)
    a = evaluate_bound(BoundCounts(c / r, [(c / r, 1.0, 8.0)], r, 1, 1, 1.0, 0.5), 1e-3, led, check_windows=False)
    b = BoundCounts(c / r, [(c / r, 1.0, 8.0)], r, 1, 1, 1.0, 0.5).at_radius(R)
    assert b.extrapolated or np.isclose(R, r)
    assert evaluate_bound(b, 1e-3, led, check_windows=False).bound == pytest.approx(a.bound, rel=1e-9)


def test_window_check(ledger):
    counts = BoundCounts(1.0, [(1.0, 1.0, 50.0)], 0.1, 1, 1, 1.0, 0.5)
    # 2 alpha T_e(h) = 0.99 * log(1e2) / 0.5 = 9.1 < 50
    with pytest.raises(PreconditionError):
        evaluate_bound(counts, 1e-2, ledger)
    with pytest.raises(PreconditionError):
        evaluate_bound(counts, 1.5, ledger, check_windows=False)


def test_baselines():
    assert baseline(100.0, 2, "classical") == pytest.approx(10.0)
    assert baseline(100.0, 2, "logImproved") == pytest.approx(10.0 / np.sqrt(np.log(100.0)))
    assert baseline(100.0, 1, "classical") == 1.0
    with pytest.raises(PreconditionError):
        baseline(2.0, 1, "classical")
    with pytest.raises(ValueError):
        baseline(100.0, 1, "other")


def test_noconj_schedule(ledger):
    grid = [1e-6, 1e-9, 1e-10, 1e-12]
    s = make_schedule("noConj", 0.1, grid, ledger)
    # 8 h^{2 eps} <= h^eps holds only for h <= 8^{-1/eps} ~ 9.3e-10
    assert s.dropped == [1e-6, 1e-9]
    np.testing.assert_allclose(s.h_grid, [1e-10, 1e-12])
    assert s.R(1e-10) == pytest.approx(1e-1)
    assert s.T0_coef == pytest.approx(0.999 * 0.1 / (12 * (2 * 0.5 + 1.0)))
    with pytest.raises(InfeasibleError):
        make_schedule("noConj", 0.1, [1e-3], ledger)


def test_tangent_space_schedule(ledger):
    # eps (1 + Lambda / c~) < 1/2 needs c~ > Lambda / 4 here
    with pytest.raises(InfeasibleError):
        make_schedule("tangentSpace", 0.1, [1e-3], ledger)
    ledger.set("c_tilde", 0.5, "empirical-fit")
    s = make_schedule("tangentSpace", 0.1, [1e-2, 1e-3, 1e-6], ledger)
    assert s.delta == pytest.approx(0.499)
    # 8 h^0.499 <= h^0.1 needs h <= 8^(-1/0.399) ~ 5.4e-3
    assert s.dropped == [1e-2]
    a = 0.999 * 0.8 / 0.1
    assert s.alpha == pytest.approx(a * 0.1)
    assert s.T0_coef == pytest.approx(0.1 / max(0.5, 0.5 / a))
    with pytest.raises(InfeasibleError):
        make_schedule("tangentSpace", 0.1, [1e-3], ledger, delta=0.11)
    with pytest.raises(ValueError):
        make_schedule("other", 0.1, [1e-3], ledger)


def test_ladder_counts_law():
    c = ladder_counts(2.0, 0.1, 1, 1.0, 16.0, ratio=0.2)
    assert [g for g, _, _ in c.rungs] == pytest.approx([20.0 * 0.2**l for l in range(5)])
    assert [T for _, _, T in c.rungs] == [16.0, 8.0, 4.0, 2.0, 1.0]


def test_sobolev_multiplier():
    assert sobolev_multiplier(0.1, 0.0, 3.0) == 1.0
    assert sobolev_multiplier(0.1, 10.0, 2.0) == pytest.approx(2.0)
    assert semiclassical_sobolev_norm([3, 4], [0, 0], 0.1, 5.0) == pytest.approx(5.0)


def test_escape_rate_point_on_torus():
    H = Submanifold.point(FlatTorus(2), [1.0, 1.0])
    assert estimate_escape_rate(H, spacing=0.5) == pytest.approx(1.0, rel=1e-6)


def test_ift_conditions_closed_form():
    S, lhs = ift_conditions(2.0, (0.1, 0.2, 0.3), (1.0, 2.0), (1, 1, 1), 0.5, 0.25, 0.125)
    assert S == pytest.approx(2.0 * (0.05 + 0.05 + 0.0375))
    assert lhs == pytest.approx(S * 0.5 + 2.0 * (0.25 + 0.25))


def test_quantitative_ift_bilinear():
    res = quantitative_ift(lambda x0, x1, x2: x0 - x1 * x2, 1.0, (0.0, 0.0, 0.0),
                           (lambda r0, r1, r2: r2, lambda r0, r1, r2: r1), (1, 1, 1))
    # S = 0 and 2 r1 r2 <= r0 <= 1: the grid optimum has r1 r2 just below 1/2
    assert res.S == 0.0
    assert 0.44 < res.radii[1] * res.radii[2] <= 0.5
    assert res.converged == res.samples


def test_quantitative_ift_infeasible():
    with pytest.raises(InfeasibleError):
        quantitative_ift(lambda x0, x1, x2: x0, 1.0, (lambda r0, r1, r2: 2.0 / r0, 0.0, 0.0), (0.0, 0.0), (1, 1, 1))
