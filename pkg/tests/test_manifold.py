import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curvewave.manifold import (
    ConstraintError,
    DomainError,
    Space,
    antipode,
    distance,
    exp_map,
    geodesic_velocity,
    inner,
    law_of_cosines,
    make_point,
    origin,
    point_at,
    s2_rule,
    sphere_quadrature,
    tangent_frame,
    tangent_vector,
)

SPACES = [Space.sphere(), Space.hyperbolic(), Space.flat(), Space.sphere(4.0), Space.hyperbolic(2.0)]
unit3 = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1)


def test_space_validation():
    with pytest.raises(DomainError):
        Space("sphere", -1.0)
    with pytest.raises(DomainError):
        Space("torus", 1.0)
    assert Space.from_name("h3").kappa0 == -1.0
    assert Space.hyperbolic(2.0).alpha0 == 2.0


def test_j_values():
    assert Space.hyperbolic().j(1.0) == pytest.approx(np.sinh(1.0), rel=1e-15)
    assert Space.sphere().j(1.0) == pytest.approx(np.sin(1.0), rel=1e-15)
    assert Space.flat().j(1.5) == 1.5


@pytest.mark.parametrize("space", SPACES, ids=lambda s: f"{s.kind}{s.kappa0}")
def test_point_at_distance(space):
    for r in [1e-9, 1e-3, 0.4, 1.3]:
        p = point_at(space, r, (0.3, -0.2, 0.9))
        assert distance(space, origin(space), p) == pytest.approx(r, rel=1e-12)


def test_small_distance_accuracy():
    H = Space.hyperbolic()
    p = point_at(H, 1e-12)
    assert distance(H, origin(H), p) == pytest.approx(1e-12, rel=1e-6)


def test_antipode_on_sphere():
    S = Space.sphere()
    p = point_at(S, 0.7, (1, 2, 3))
    assert distance(S, p, antipode(p)) == pytest.approx(np.pi, abs=1e-12)


def test_make_point_rejects():
    H = Space.hyperbolic()
    with pytest.raises(ConstraintError):
        make_point(H, [2.0, 0.0, 0.0, 0.0])
    with pytest.raises(ConstraintError):
        make_point(H, [-1.0, 0.0, 0.0, 0.0])
    with pytest.raises(ConstraintError):
        make_point(H, [1.0, 0.0, 0.0])
    q = make_point(H, [np.sqrt(2.0) + 1e-9, 1.0, 0.0, 0.0])
    assert inner(H, q, q) == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize("space", SPACES[:3], ids=lambda s: s.kind)
def test_tangent_frame_orthonormal(space):
    p = point_at(space, 0.8, (0, 1, 1))
    F = tangent_frame(space, p)
    G = np.array([[inner(space, a, b) for b in F] for a in F])
    assert np.allclose(G, np.eye(3), atol=1e-12)
    if space.kind != "flat":
        assert np.allclose([inner(space, f, p) for f in F], 0.0, atol=1e-12)


def test_exp_map_rejects_non_unit():
    H = Space.hyperbolic()
    v = tangent_vector(H, origin(H), (1, 0, 0))
    bad = type(v)(v.base, 2 * v.vec)
    with pytest.raises(DomainError):
        exp_map(H, bad, 1.0)


@pytest.mark.parametrize("space", SPACES[:3], ids=lambda s: s.kind)
def test_geodesic_velocity_is_derivative(space):
    v = tangent_vector(space, point_at(space, 0.5, (1, 0, 0)), (0.2, 1, -0.4))
    h = 1e-5
    fd = (exp_map(space, v, 0.9 + h) - exp_map(space, v, 0.9 - h)) / (2 * h)
    assert np.allclose(fd, geodesic_velocity(space, v, 0.9), atol=1e-8)


@given(a=unit3, b=unit3, c=unit3, r1=st.floats(0, 2), r2=st.floats(0, 2), r3=st.floats(0, 2))
def test_distance_metric_axioms(a, b, c, r1, r2, r3):
    for space in (Space.hyperbolic(), Space.sphere(), Space.flat()):
        p, q, s = point_at(space, r1, a), point_at(space, r2, b), point_at(space, r3, c)
        dpq, dqp = distance(space, p, q), distance(space, q, p)
        assert dpq == pytest.approx(dqp, abs=1e-12)
        assert dpq <= distance(space, p, s) + distance(space, s, q) + 1e-10
        assert distance(space, p, p) == 0.0


@given(s=st.floats(0.01, 3), rho=st.floats(0.01, 3), theta=st.floats(0, np.pi))
def test_law_of_cosines_matches_embedding(s, rho, theta):
    for space in (Space.hyperbolic(), Space.flat(), Space.hyperbolic(3.0)):
        p = point_at(space, s, (1, 0, 0))
        q = point_at(space, rho, (np.cos(theta), np.sin(theta), 0))
        assert law_of_cosines(space, s, rho, theta) == pytest.approx(
            distance(space, p, q), rel=1e-9, abs=1e-12)


def test_s2_rule_exactness():
    dirs, w = s2_rule(6)
    assert w.sum() == pytest.approx(4 * np.pi, rel=1e-14)
    # int x^4 = 4 pi / 5, int x^2 y^2 = 4 pi / 15
    assert np.dot(w, dirs[:, 0] ** 4) == pytest.approx(4 * np.pi / 5, rel=1e-13)
    assert np.dot(w, dirs[:, 0] ** 2 * dirs[:, 1] ** 2) == pytest.approx(4 * np.pi / 15, rel=1e-13)
    with pytest.raises(DomainError):
        s2_rule(0)


def test_sphere_quadrature_area():
    H = Space.hyperbolic()
    _, w = sphere_quadrature(H, origin(H), 1.5)
    assert w.sum() == pytest.approx(4 * np.pi * np.sinh(1.5) ** 2, rel=1e-13)
    with pytest.raises(DomainError):
        sphere_quadrature(Space.sphere(), origin(H), 3.5)
