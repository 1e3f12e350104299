from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geobeam.discrete import (
    DiscreteHyperbolicSystem,
    DiscreteSystemError,
    contraction_along,
    discrete_step,
    quotient_jacobian,
    rational_orbit,
)

GOLDEN_SQ = (3 + np.sqrt(5)) / 2


def test_cat_map_eigenvalues():
    lu, eu, ls, es = DiscreteHyperbolicSystem().eigen()
    assert lu == pytest.approx(GOLDEN_SQ)
    assert ls == pytest.approx(1 / GOLDEN_SQ)
    assert abs(eu @ es) < 1e-12  # symmetric matrix: orthogonal eigenvectors


@pytest.mark.parametrize("M", [((1, 1), (0, 1)), ((2, 0), (0, 1)), ((0, 1), (-1, 0))])
def test_rejects_non_hyperbolic(M):
    with pytest.raises(DiscreteSystemError):
        DiscreteHyperbolicSystem(M)


@given(st.integers(0, 96), st.integers(0, 96), st.integers(-6, 6))
def test_exact_steps_invert(a, b, k):
    sysm = DiscreteHyperbolicSystem()
    p = (Fraction(a, 97), Fraction(b, 97))
    assert discrete_step(sysm, discrete_step(sysm, p, k), -k) == p


def test_rational_orbit_matches_fractions():
    sysm = DiscreteHyperbolicSystem(((2, 1), (1, 1)))
    orb = rational_orbit(sysm, (3, 5), 101, 30)
    p = (Fraction(3, 101), Fraction(5, 101))
    for k in range(31):
        assert (Fraction(int(orb[k, 0]), 101), Fraction(int(orb[k, 1]), 101)) == p
        p = discrete_step(sysm, p, 1)


def test_rational_orbit_is_periodic():
    # every point with denominator q is periodic; the orbit must return to its start
    orb = rational_orbit(DiscreteHyperbolicSystem(), (1, 0), 11, 200)
    assert any(np.array_equal(orb[k], orb[0]) for k in range(1, 201))


@given(st.integers(0, 12))
def test_stable_direction_contracts_exactly(k):
    sysm = DiscreteHyperbolicSystem()
    _, eu, ls, es = sysm.eigen()
    # float round-off in e_s is amplified by lambda_u^k relative to lambda_s^k
    assert contraction_along(sysm, es, k) == pytest.approx(abs(ls) ** k, rel=1e-14 * GOLDEN_SQ ** (2 * k) + 1e-12)
    assert quotient_jacobian(sysm, eu, k) == pytest.approx(GOLDEN_SQ ** (-k), rel=1e-9)
