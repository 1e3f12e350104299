import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geobeam.conormal import (
    ConormalPoint,
    ProxyIndex,
    Submanifold,
    Tube,
    classify_splitting,
    defining_function,
    distance_to_snh,
    sample_snh,
    sasaki_batch,
    snh_tangent,
    tau_inj,
    tube_membership,
)
from geobeam.flow import PreconditionError, flow, phase_point, stable_unstable
from geobeam.manifold import FlatTorus, HyperbolicHalfPlane, RoundSphere

angle = st.floats(0, 2 * np.pi, allow_nan=False)


def _sphere_state(a, b, c):
    S = RoundSphere(2)
    x = np.array([np.cos(a) * np.sin(b), np.sin(a) * np.sin(b), np.cos(b)])
    e1 = np.array([-np.sin(a), np.cos(a), 0.0])
    e2 = np.cross(x, e1)
    return x, np.cos(c) * e1 + np.sin(c) * e2


@given(angle, st.floats(0.2, 2.9), angle, angle, st.floats(0.2, 2.9), angle)
def test_sasaki_sphere_symmetric_nonnegative(a1, b1, c1, a2, b2, c2):
    S = RoundSphere(2)
    x1, v1 = _sphere_state(a1, b1, c1)
    x2, v2 = _sphere_state(a2, b2, c2)
    d12 = sasaki_batch(S, x1, v1, x2, v2)
    d21 = sasaki_batch(S, x2, v2, x1, v1)
    assert d12 >= 0
    assert d12 == pytest.approx(d21, abs=1e-9)
    assert sasaki_batch(S, x1, v1, x1, v1) == pytest.approx(0.0, abs=1e-7)


@given(st.floats(0, 6.28), st.floats(0, 6.28), angle, st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_sasaki_torus_is_flat_product(x, y, th, dx, dy, dth):
    T = FlatTorus(2)
    X1, V1 = np.array([x, y]), np.array([np.cos(th), np.sin(th)])
    X2, V2 = X1 + [dx, dy], np.array([np.cos(th + dth), np.sin(th + dth)])
    assert sasaki_batch(T, X1, V1, X2, V2) == pytest.approx(np.sqrt(dx**2 + dy**2 + dth**2), abs=1e-9)


def test_sasaki_on_a_geodesic_equals_time():
    # two states on one unit-speed geodesic differ only in base distance
    S = RoundSphere(2)
    rho = phase_point(S, [1.0, 0, 0], [0, 1.0, 0])
    q = flow(S, rho, 0.4)
    assert sasaki_batch(S, rho.x, rho.velocity(S), q.x, q.velocity(S)) == pytest.approx(0.4, abs=1e-9)


@pytest.mark.parametrize("model", [FlatTorus(2), RoundSphere(2)])
def test_proxy_index_matches_brute_force(model, rng):
    if isinstance(model, FlatTorus):
        X = rng.uniform(0, 2 * np.pi, (300, 2))
        th = rng.uniform(0, 2 * np.pi, 300)
        V = np.stack([np.cos(th), np.sin(th)], 1)
    else:
        S = [_sphere_state(*rng.uniform(0.1, 3.0, 3)) for _ in range(300)]
        X, V = np.array([s[0] for s in S]), np.array([s[1] for s in S])
    idx = ProxyIndex(model, X[:200], V[:200])
    res = idx.query(X[200:], V[200:], 0.6)
    D = sasaki_batch(model, X[200:, None], V[200:, None], X[None, :200], V[None, :200])
    for row, (js, ds) in zip(D, res):
        assert sorted(js.tolist()) == np.flatnonzero(row <= 0.6).tolist()
    cand = idx.candidates(X[200:], V[200:], 0.6)
    assert np.all(cand[np.any(D <= 0.6, axis=1)])


def test_point_snh_spacing_and_membership():
    S = RoundSphere(2)
    H = Submanifold.point(S, [0, 0, 2.0])
    np.testing.assert_allclose(H.base_point, [0, 0, 1.0])
    snh = sample_snh(H, 0.1)
    X = np.array([c.rho.x for c in snh])
    V = np.array([c.rho.velocity(S) for c in snh])
    gaps = sasaki_batch(S, X, V, np.roll(X, -1, 0), np.roll(V, -1, 0))
    assert gaps.max() <= 0.1 + 1e-12
    for c in snh[:5]:
        assert distance_to_snh(H, c.rho.x, c.rho.velocity(S)) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(PreconditionError):
        sample_snh(H, 0.0)


def test_latitude_geodesic_curvature():
    S = RoundSphere(2)
    th = 0.7
    H = Submanifold.curve(S, lambda u: np.array([np.sin(th) * np.cos(u), np.sin(th) * np.sin(u), np.cos(th)]),
                          (0.0, 2 * np.pi), periodic=True)
    # a circle of colatitude th has geodesic curvature cot(th)
    assert abs(H.geodesic_curvature(1.0)) == pytest.approx(1 / np.tan(th), rel=1e-4)
    assert H.length() == pytest.approx(2 * np.pi * np.sin(th), rel=1e-6)
    assert H.K_H == pytest.approx(1 + 1 / np.tan(th) ** 2, rel=1e-3)


def test_geodesic_submanifold_is_straight():
    H = Submanifold.geodesic(HyperbolicHalfPlane(), [0.0, 1.0], [1.0, 0.5], 2.0)
    assert H.length() == pytest.approx(2.0, rel=1e-6)
    assert abs(H.geodesic_curvature(0.3)) < 1e-4
    assert H.codim == 1 and H.dim == 1


def test_defining_function_vanishes_on_snh(rng):
    T = FlatTorus(2)
    H = Submanifold.curve(T, lambda u: np.array([u, 1.0 + 0.3 * np.sin(u)]), (0.0, 2 * np.pi), periodic=True)
    F = defining_function(H, rng=rng)
    for c in sample_snh(H, 0.5)[:6]:
        np.testing.assert_allclose(F(c.rho.x, c.rho.velocity(T)), 0.0, atol=1e-6)
    lo, hi = F.ratio_range
    assert 0 < lo <= hi


def test_tube_membership():
    S = RoundSphere(2)
    rho = phase_point(S, [1.0, 0, 0], [0, 1.0, 0])
    tube = Tube(ConormalPoint(0.0, 0.0, rho, 0), 0.5, 0.05, 0)
    assert tube_membership(S, tube, flow(S, rho, 0.3))
    assert not tube_membership(S, tube, flow(S, rho, 1.0))
    assert not tube_membership(S, tube, phase_point(S, [0, 0, 1.0], [1.0, 0, 0]))


def test_tau_inj_latitude_circle():
    # normals of a colatitude-0.5 circle focus at the pole after time 0.5
    S = RoundSphere(2)
    H = Submanifold.curve(S, lambda u: np.array([np.sin(0.5) * np.cos(u), np.sin(0.5) * np.sin(u), np.cos(0.5)]),
                          (0.0, 2 * np.pi), periodic=True)
    t = tau_inj(H, spacing=0.05, tol=0.1, rounds=5)
    assert 0.3 <= t <= 0.55


def test_splitting_classes_on_hyperbolic_plane():
    M = HyperbolicHalfPlane()
    horo = Submanifold.curve(M, lambda u: np.array([u, 1.0]), (-1.0, 1.0))
    arc = Submanifold.curve(M, lambda u: 2 * np.array([np.cos(u), np.sin(u)]), (0.5, 1.0))
    for H, expect in ((horo, (1, 0)), (arc, (0, 0))):
        cp = sample_snh(H, 0.2)[2]
        c = classify_splitting(cp.rho, stable_unstable(M, cp.rho, T=6.0), snh_tangent(H, cp))
        assert (c.m_plus, c.m_minus) == expect
    assert not c.in_S_H and not c.in_A_H


def test_classification_refused_on_flat_torus():
    T = FlatTorus(2)
    H = Submanifold.point(T, [0.0, 0.0])
    cp = sample_snh(H, 0.5)[0]
    with pytest.warns(UserWarning):
        sp = stable_unstable(T, cp.rho, T=6.0)
    with pytest.raises(PreconditionError):
        classify_splitting(cp.rho, sp, snh_tangent(H, cp))
