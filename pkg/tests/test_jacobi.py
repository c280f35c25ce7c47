import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curvewave import jacobi
from curvewave.jacobi import (
    ConjugatePointError,
    ConvergenceError,
    Perturbation,
    area_element,
    builtin_perturbation,
    integrate_transport,
    scalar_j,
    scalar_j_delta,
    scalar_j_delta_prime,
)


def constant(c, matrix=np.eye(2)):
    return Perturbation(lambda r: c * np.ones(np.shape(r))[..., None, None] * matrix, abs(c), "const")


def test_scalar_j_and_derivative():
    r = np.linspace(0, 3, 7)
    j, jp = scalar_j(-4.0, r, with_derivative=True)
    assert np.allclose(j, np.sinh(2 * r) / 2, rtol=1e-15)
    assert np.allclose(jp, np.cosh(2 * r), rtol=1e-15)
    assert np.allclose(scalar_j(0.0, r), r)
    assert np.allclose(scalar_j_delta(1.0, 0.1, r), np.sinh(0.9 * r) / 0.9)
    assert np.allclose(scalar_j_delta_prime(1.0, 0.1, r), np.cosh(0.9 * r))
    with pytest.raises(ValueError):
        scalar_j_delta(1.0, 1.5, r)


def test_builtin_family_amplitude_bounds_l1():
    for prof in jacobi.PROFILES:
        pe = builtin_perturbation(prof, 0.3)
        assert pe.geodesic_l1() <= 0.3 + 1e-12
        assert float(pe.norm(0.0)) > 0
    with pytest.raises(KeyError):
        builtin_perturbation("square", 0.1)


def test_zero_perturbation_is_exact():
    path = integrate_transport(-1.0, jacobi.zero_perturbation(), 5.0)
    r = np.linspace(0.1, 5, 9)
    assert np.allclose(path.T(r), np.sinh(r)[:, None, None] * np.eye(2), rtol=1e-15)


def test_constant_perturbation_closed_form():
    # A = kappa0 + eps gives T = sinh(r sqrt(1 - eps))/sqrt(1 - eps) I
    eps = 0.05
    path = integrate_transport(-1.0, constant(eps), 6.0, tol=1e-12)
    r = np.array([0.01, 0.5, 2.0, 6.0])
    b = np.sqrt(1 - eps)
    exact = np.sinh(b * r) / b
    assert np.allclose(path.T(r)[:, 0, 0], exact, rtol=1e-10)
    assert np.allclose(path.dT(r)[:, 1, 1], np.cosh(b * r), rtol=1e-10)
    assert np.allclose(path.T(r)[:, 0, 1], 0.0, atol=1e-14)


def test_wronskian_and_area_derivatives():
    pe = builtin_perturbation("gaussian", 0.1, "tracefree")
    path = integrate_transport(-1.0, pe, 5.0)
    r = np.linspace(0.2, 4.8, 12)
    assert np.max(np.abs(path.wronskian(r))) < 1e-12 * np.sinh(5.0) ** 2
    a, da, d2a = path.area(r)
    h = 1e-4
    fd = (path.area(r + h)[0] - path.area(r - h)[0]) / (2 * h)
    assert np.allclose(da, fd, rtol=1e-7)
    fd2 = (path.area(r + h)[1] - path.area(r - h)[1]) / (2 * h)
    assert np.allclose(d2a, fd2, rtol=1e-6)
    a0, da0 = area_element(path.state(2.0))
    assert a0 == pytest.approx(float(path.area(2.0)[0]), rel=1e-14)
    assert da0 == pytest.approx(float(path.area(2.0)[1]), rel=1e-10)


def test_conjugate_point_detected():
    path = integrate_transport(-1.0, constant(3.0, np.diag([1.0, 0.0])), 4.0)
    # A11 = 2 > 0 makes T11 = sin(sqrt2 r)/sqrt2 change sign at r = pi/sqrt2
    with pytest.raises(ConjugatePointError):
        area_element(path.state(2.5))


@given(eps=st.floats(1e-4, 0.1), prof=st.sampled_from(sorted(jacobi.PROFILES)),
       mat=st.sampled_from(sorted(jacobi.MATRICES)))
def test_contraction_bounds(eps, prof, mat):
    path = integrate_transport(-1.0, builtin_perturbation(prof, eps, mat), 12.0)
    grid = np.concatenate([np.geomspace(1e-3, 1, 30), np.linspace(1, 12, 60)])
    a, b = jacobi.contraction_ratios(path, grid)
    assert a <= 2 * eps and b <= 2 * eps


def test_small_r_slopes():
    path = integrate_transport(-1.0, builtin_perturbation("compact", 0.01), 2.0)
    s1, s2 = jacobi.small_r_slopes(path)
    assert s1 == pytest.approx(3.0, abs=0.05)
    assert s2 == pytest.approx(2.0, abs=0.05)
    z = integrate_transport(-1.0, jacobi.zero_perturbation(), 1.0)
    assert all(np.isnan(jacobi.small_r_slopes(z)))


def test_scattering_identity_matches_direct_difference():
    pe = builtin_perturbation("gaussian", 0.05, "tracefree")
    path = integrate_transport(-1.0, pe, pe.support)
    scat = jacobi.scattering_data(-1.0, pe, path=path)
    r = np.array([1.0, 3.0, 6.0, 8.0])
    U, _ = path.normalized(r)
    direct = U - scat.Tinf
    assert np.allclose(jacobi.scattering_deviation(path, scat, r), direct, atol=1e-12)
    assert np.allclose(scat.Tinf, np.eye(2) - scat.I)


def test_scattering_rejects_large_perturbation():
    with pytest.raises(ConvergenceError):
        jacobi.scattering_data(-1.0, builtin_perturbation("exponential", 3.0))


def test_scattering_rate_for_exponential_profile():
    pe = builtin_perturbation("exponential", 0.01)
    path = integrate_transport(-1.0, pe, pe.support)
    scat = jacobi.scattering_data(-1.0, pe, path=path)
    r = np.linspace(10, 30, 21)
    vals = np.linalg.norm(jacobi.scattering_deviation(path, scat, r), ord=2, axis=(-2, -1))
    # deviation ~ eps e^{-2r}(r/2 - 1/8): local log slope 2 - 1/(r - 1/4)
    assert jacobi.fit_decay_rate(r, vals) == pytest.approx(1.946, abs=2e-3)


def test_load_perturbation_table(tmp_path):
    r = np.linspace(0, 8, 801)
    phi = 0.02 * np.exp(-4 * (r - 1) ** 2)
    f = tmp_path / "pert.csv"
    f.write_text("# r A11 A12 A22\n" + "\n".join(f"{a},{b},0,{b}" for a, b in zip(r, phi)))
    tab = jacobi.load_perturbation(f)
    ref = builtin_perturbation("gaussian", 0.02)
    p1, p2 = integrate_transport(-1.0, tab, 6.0), integrate_transport(-1.0, ref, 6.0)
    x = np.array([0.5, 2.0, 6.0])
    assert np.allclose(p1.T(x), p2.T(x), rtol=1e-7)
    assert tab.geodesic_l1() == pytest.approx(ref.geodesic_l1(), rel=1e-6)
    bad = tmp_path / "bad.csv"
    bad.write_text("0 1 2\n")
    with pytest.raises(ValueError):
        jacobi.load_perturbation(bad)


def test_integrate_transport_argument_checks():
    with pytest.raises(ValueError):
        integrate_transport(-1.0, jacobi.zero_perturbation(), 0.0)
    with pytest.raises(ValueError):
        integrate_transport(-1.0, jacobi.zero_perturbation(), 1.0, tol=0)
