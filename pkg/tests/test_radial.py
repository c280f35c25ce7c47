import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import j1

from curvewave import radial
from curvewave.kato import RadialPotential, zero_potential
from curvewave.manifold import Space

H3, R3 = Space.hyperbolic(), Space.flat()
M = 1.5
MASS = RadialPotential(lambda r: M * M * np.ones_like(np.asarray(r, dtype=float)), "mass")


def klein_gordon_w(t, r):
    # r times the absolutely continuous kernel of sin(t sqrt(-Delta + m^2))/sqrt(...)
    s = np.sqrt(t * t - r * r)
    return -M * r / (4 * np.pi) * j1(M * s) / s


def test_front_value():
    assert radial.front_value(MASS, 2.0) == pytest.approx(-M * M * 2.0 / (8 * np.pi), rel=1e-14)
    V = RadialPotential(lambda r: np.where(r < 1.0, 1.0, 0.0), "step", 1.0, (1.0,))
    assert radial.front_value(V, 3.0) == pytest.approx(-1 / (8 * np.pi), rel=1e-14)


def test_point_source_matches_klein_gordon():
    pts = [(2.0, 1.0), (2.0, 0.4), (1.6, 1.2)]
    vals = []
    for h in (0.02, 0.01, 0.005):
        f = radial.point_source_w(R3, MASS, 2.0, h)
        vals.append([f.value(t, r) for t, r in pts])
    exact = np.array([klein_gordon_w(t, r) for t, r in pts])
    err = np.abs(np.array(vals) - exact)
    # second order: each halving gains about a factor 4
    assert np.all(err[1] < 0.35 * err[0])
    best, est = radial.richardson(vals)
    assert np.max(np.abs(best - exact)) < 1e-7
    assert np.max(np.abs(best - exact)) < 10 * np.max(est) + 1e-12


def test_free_cauchy_matches_dalembert():
    g = lambda r: np.exp(-4 * np.asarray(r) ** 2)
    G = lambda s: np.sign(s) * np.sinh(abs(s)) * g(abs(s))
    h = 0.01
    f = radial.cauchy_w(H3, zero_potential(), g, 2.0, 6.0, h)
    for t, r in [(1.0, 1.0), (2.0, 0.5), (1.5, 2.5)]:
        exact = 0.5 * quad(G, r - t, r + t, points=[0.0], epsabs=1e-14)[0]
        assert f.value(t, r) == pytest.approx(exact, abs=1e-7)
    assert f.u(2.0, 0.5) == pytest.approx(f.value(2.0, 0.5) / np.sinh(0.5), rel=1e-15)


def test_lattice_and_space_checks():
    f = radial.point_source_w(H3, zero_potential(), 1.0, 0.1)
    assert f.value(1.0, 0.4) == 0.0
    with pytest.raises(ValueError):
        f.value(1.0, 0.3)
    with pytest.raises(ValueError):
        f.value(0.95, 0.3)
    with pytest.raises(ValueError):
        radial.point_source_w(Space.sphere(), zero_potential(), 1.0, 0.1)


def test_richardson_removes_even_powers():
    hs = 0.1 / 2.0 ** np.arange(4)
    vals = 1.0 + hs ** 2 - 3 * hs ** 4 + hs ** 6
    best, est = radial.richardson(vals)
    assert best == pytest.approx(1.0, abs=1e-15)
    assert est < 1e-8
