import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geobeam.flow import flow_states, rk4_geodesic
from geobeam.manifold import (
    FlatTorus,
    GeometryError,
    HyperbolicHalfPlane,
    RoundSphere,
    curvature_matrix_fd,
    gauss_bonnet_defect,
    get_model,
    metric_at,
    registered_models,
    riemann_sectional_fd,
)

angles = st.floats(0.0, 2 * np.pi, allow_nan=False)


def test_registry_names():
    assert set(registered_models()) >= {"flat_torus", "round_sphere", "hyperbolic_half_plane",
                                        "catenoid_like", "hyperbolic_cusp_like"}
    with pytest.raises(KeyError):
        get_model("klein_bottle")


def test_metric_positive_and_domain():
    H2 = HyperbolicHalfPlane()
    g = metric_at(H2, [0.3, 2.0])
    np.testing.assert_allclose(g, np.eye(2) / 4.0)
    with pytest.raises(GeometryError):
        metric_at(H2, [0.0, -1.0])


@pytest.mark.parametrize("name,x,K", [
    ("flat_torus", [0.3, 1.1], 0.0),
    ("round_sphere", [0.0, 0.6, 0.8], 1.0),
    ("hyperbolic_half_plane", [0.2, 1.7], -1.0),
])
def test_constant_curvature_models(name, x, K):
    # Gauss curvature by finite-difference Riemann tensor agrees with the closed form
    m = get_model(name)
    x = np.asarray(x, float)
    assert m.gauss_curvature(x) == pytest.approx(K, abs=1e-12)
    if not isinstance(m, RoundSphere):
        assert riemann_sectional_fd(m, x, 0, 1) == pytest.approx(K, abs=1e-4)


def test_catenoid_curvature_negative():
    m = get_model("catenoid_like")
    # warped product dr^2 + cosh(r)^2 dth^2 has K = -f''/f = -1
    assert m.gauss_curvature(np.array([0.4, 1.0])) == pytest.approx(-1.0, abs=1e-9)
    x, v = np.array([0.3, 0.0]), np.array([0.2, 1.0])
    x, v = m.normalize(x, v)
    E = m.perp_frame(x, v)
    np.testing.assert_allclose(m.curvature_matrix(x, v, E), curvature_matrix_fd(m, x, v, E), atol=1e-4)


@given(angles, angles)
def test_sphere_exact_geodesic_matches_rk4(a, b):
    S = RoundSphere(2)
    x = np.array([np.cos(a) * np.sin(1.0), np.sin(a) * np.sin(1.0), np.cos(1.0)])
    x, v = S.project(x, np.array([np.cos(b), np.sin(b), 0.3]))
    x, v = S.normalize(x, v)
    xe, ve = S.exact_geodesic(x, v, 2.0)
    xr, vr = rk4_geodesic(S, x, v, 2.0, step=1e-3)
    np.testing.assert_allclose(xr, xe, atol=1e-8)
    np.testing.assert_allclose(vr, ve, atol=1e-8)


@given(st.floats(-3, 3), st.floats(0.3, 3), angles)
def test_hyperbolic_speed_and_distance(x0, y0, th):
    H = HyperbolicHalfPlane()
    x = np.array([x0, y0])
    x, v = H.normalize(x, np.array([np.cos(th), np.sin(th)]))
    xt, vt = flow_states(H, x, v, 1.5)
    assert H.norm(xt, vt) == pytest.approx(1.0, abs=1e-9)
    assert H.distance(x, xt) == pytest.approx(1.5, abs=1e-7)


@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_torus_distance_symmetric_and_bounded(a, b, c, d):
    T = FlatTorus(2)
    p, q = np.array([a, b]), np.array([c, d])
    assert T.distance(p, q) == pytest.approx(T.distance(q, p))
    assert T.distance(p, q) <= np.pi * np.sqrt(2) + 1e-12


def test_gauss_bonnet_sphere_octant():
    S = RoundSphere(2)
    tri = [np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0])]
    r = gauss_bonnet_defect(S, tri)
    np.testing.assert_allclose(r["angles"], np.pi / 2, atol=1e-10)
    # the octant has area pi/2 and K = 1
    assert r["excess"] == pytest.approx(np.pi / 2, abs=1e-10)
    assert abs(r["mismatch"]) < 1e-4


def test_gauss_bonnet_hyperbolic_quadrilateral():
    H = HyperbolicHalfPlane()
    quad = [np.array([-0.5, 1.0]), np.array([0.6, 1.1]), np.array([0.5, 2.2]), np.array([-0.4, 1.9])]
    r = gauss_bonnet_defect(H, quad)
    # angle sum below 2 pi; the defect is the (negative) curvature integral
    assert r["excess"] < 0
    assert abs(r["mismatch"]) < 1e-3
