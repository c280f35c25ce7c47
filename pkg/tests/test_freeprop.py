import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvewave import freeprop as fp
from curvewave.manifold import Space, origin, point_at

H3, S3, R3 = Space.hyperbolic(), Space.sphere(), Space.flat()


def spherical_function(lam):
    # -Delta phi = (1 + lam^2) phi on H3, so H0 phi = lam^2 phi
    def g(d):
        d = np.asarray(d, dtype=float)
        ds = np.where(d == 0, 1.0, d)
        return np.where(d == 0, 1.0, np.sin(lam * ds) / (lam * np.sinh(ds)))

    def dg(d):
        d = np.asarray(d, dtype=float)
        ds = np.where(d == 0, 1.0, d)
        val = (lam * np.cos(lam * ds) * np.sinh(ds) - np.sin(lam * ds) * np.cosh(ds)) / (
            lam * np.sinh(ds) ** 2)
        return np.where(d == 0, 0.0, val)

    return g, dg


def test_sine_kernel_mass_and_conjugate_time():
    for sp in (H3, S3, R3):
        k = fp.sine_kernel(sp, 0.7)
        assert k.shell_mass(sp) == pytest.approx(float(sp.j(0.7)), rel=1e-14)
    assert fp.sine_kernel(S3, np.pi).shell_coeff == 0.0
    with pytest.raises(ValueError):
        fp.sine_kernel(H3, 0.0)


def test_sine_of_constant():
    x = point_at(H3, 0.4, (0.0, 1.0, 0.0))
    one = lambda p: np.ones(np.shape(p)[:-1])
    assert fp.apply_sine(H3, 1.3, one, x) == pytest.approx(np.sinh(1.3), rel=1e-13)
    assert fp.apply_sine(R3, 1.3, one, origin(R3)) == pytest.approx(1.3, rel=1e-13)
    assert fp.apply_sine(S3, np.pi, one, origin(S3)) == 0.0


@pytest.mark.parametrize("lam,t,rho", [(0.5, 1.0, 0.3), (2.0, 2.5, 1.2), (1.0, 0.3, 2.0)])
def test_h3_eigenfunction_propagation(lam, t, rho):
    g, dg = spherical_function(lam)
    c = origin(H3)
    f = fp.RadialFunction(H3, c, g, dg)
    x = point_at(H3, rho, (0.0, 0.0, 1.0))
    phi = float(g(rho))
    assert fp.apply_sine(H3, t, f, x, level=40) == pytest.approx(np.sin(lam * t) / lam * phi, abs=1e-10)
    assert fp.radial_sine_apply(H3, t, g, rho) == pytest.approx(np.sin(lam * t) / lam * phi, abs=1e-12)
    assert fp.apply_cosine(H3, t, f, x, level=40) == pytest.approx(np.cos(lam * t) * phi, abs=1e-9)
    num = fp.apply_cosine(H3, t, f, x, level=40, derivative="numeric")
    assert num == pytest.approx(np.cos(lam * t) * phi, abs=1e-9)


def test_radial_reduction_matches_geometric_mean():
    g = lambda d: np.exp(-np.asarray(d) ** 2)
    f = fp.RadialFunction(R3, origin(R3), g)
    x = point_at(R3, 0.8)
    assert fp.apply_sine(R3, 1.1, f, x, level=48) == pytest.approx(
        fp.radial_sine_apply(R3, 1.1, g, 0.8), rel=1e-10)
    with pytest.raises(ValueError):
        fp.radial_sine_apply(S3, 1.0, g, 0.5)


def test_missing_derivative():
    f = fp.RadialFunction(H3, origin(H3), lambda d: np.exp(-d))
    with pytest.raises(fp.MissingDerivativeError):
        fp.apply_cosine(H3, 1.0, f, point_at(H3, 0.5), derivative="analytic")
    # auto falls back to the geodesic stencil
    fp.apply_cosine(H3, 1.0, f, point_at(H3, 0.5), derivative="auto")


@settings(max_examples=10)
@given(seed=st.integers(0, 2 ** 16), t=st.floats(0.05, 3.1))
def test_sphere_geometric_equals_spectral(seed, t):
    rng = np.random.default_rng(seed)
    f = fp.PolynomialFunction.random(rng, 5)
    x = point_at(S3, 1.0, (0.6, 0.0, 0.8))
    geo = fp.apply_sine(S3, t, f, x, level=24)
    spec, err = fp.spectral_sine_apply(t, f, x, ell_max=8, return_error=True)
    assert err < 1e-12
    assert geo == pytest.approx(spec, abs=1e-11 * (1 + abs(spec)))
    cos_geo = fp.apply_cosine(S3, t, f, x, level=24)
    assert cos_geo == pytest.approx(fp.spectral_cosine_apply(t, f, x, ell_max=8), abs=1e-10)


def test_projections_resolve_identity(rng):
    f = fp.PolynomialFunction.random(rng, 4)
    x = point_at(S3, 2.0, (1.0, 0.0, 0.0))
    c = fp.spectral_coefficients(f, x, ell_max=8)
    assert np.sum(c) == pytest.approx(float(f(x)), abs=1e-12)
    assert np.max(np.abs(c[5:])) < 1e-12
    for ell in range(4):
        closed = fp.projection_apply(ell, f, x, route="closed")
        assert closed == pytest.approx(c[ell], abs=1e-12)
        assert fp.projection_apply(ell, f, x, route="sine") == pytest.approx(closed, abs=1e-11)
    with pytest.raises(ValueError):
        fp.projection_apply(0, f, x, route="other")


def test_projection_traces():
    for ell in range(8):
        assert fp.projection_trace(ell) == pytest.approx((ell + 1) ** 2, rel=1e-14)
    for k in range(5):
        assert fp.dyadic_trace(k) == sum(fp.projection_trace(l) for l in range(2 ** k - 1, 2 ** (k + 1) - 1))
    th = np.linspace(0.1, 3.0, 5)
    assert np.allclose(fp.zonal_projection(3, th), 4 * np.sin(4 * th) / (2 * np.pi ** 2 * np.sin(th)))
    with pytest.raises(ValueError):
        fp.zonal_projection(-1, 0.0)


def test_dyadic_bound_stays_bounded():
    vals = fp.dyadic_bound_scan(7)
    assert np.all(np.isfinite(vals))
    assert vals.max() < 1.0
    assert vals[-1] < 2 * vals[3]


@pytest.mark.parametrize("r", [0.1, 0.5, 1.0, 3.0, 8.0])
def test_fundamental_integral_h3(r):
    closed = fp.fundamental_integral_closed(H3, r)
    assert closed == pytest.approx(1 / (4 * np.pi * np.sinh(r)), rel=1e-15)
    assert fp.fundamental_integral_check(H3, r, eta=min(0.02, r / 20)) == pytest.approx(closed, rel=1e-9)


def test_fundamental_integral_sphere_and_weight():
    assert fp.fundamental_integral_check(S3, 1.5) == pytest.approx(
        fp.fundamental_integral_closed(S3, 1.5), rel=1e-9)
    w = np.cosh
    assert fp.fundamental_integral_check(H3, 2.0, weight=w) == pytest.approx(
        np.cosh(2.0) / (4 * np.pi * np.sinh(2.0)), rel=1e-9)
    with pytest.raises(ValueError):
        fp.fundamental_integral_check(S3, 3.5)
    with pytest.raises(ValueError):
        fp.fundamental_integral_check(H3, 0.0)
