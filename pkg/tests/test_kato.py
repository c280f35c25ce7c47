import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from curvewave import kato
from curvewave.manifold import Space

H3, R3 = Space.hyperbolic(), Space.flat()
CHI = kato.indicator_potential(1.0)
GAUSS = kato.gaussian_potential(1.0, 0.5)

# values produced by the d-reduction and confirmed by the polar-coordinate route
FROZEN = {
    ("kato", 0.0): 6.824552530569805,
    ("kato", 0.5): 6.039557073432721,
    ("kato", 2.0): 1.2746311904261975,
    ("modified", 0.0): 7.4286356063900545,
    ("modified", 0.5): 7.04572885685982,
    ("modified", 2.0): 5.110932705708293,
    ("delta", 0.0): 6.932362137805953,
    ("delta", 0.5): 6.157734313072907,
    ("delta", 2.0): 1.4177999575336573,
}


def weights():
    return {"kato": kato.kato_weight(H3), "modified": kato.modified_weight(H3),
            "delta": kato.delta_weight(H3, 0.1)}


@pytest.mark.parametrize("key", sorted(FROZEN))
def test_indicator_frozen_values(key):
    name, rho = key
    w = weights()[name]
    assert kato.weighted_integral(H3, CHI, rho, w) == pytest.approx(FROZEN[key], rel=1e-12)
    assert kato.weighted_integral_2d(H3, CHI, rho, w, n_r=48, n_theta=48) == pytest.approx(
        FROZEN[key], rel=1e-9)


def test_indicator_closed_forms():
    assert FROZEN[("kato", 0.0)] == pytest.approx(4 * np.pi * (np.cosh(1) - 1), rel=1e-14)
    shi = quad(lambda r: np.sinh(r) ** 2 / r, 0, 1, epsabs=0, epsrel=1e-13)[0]
    assert FROZEN[("modified", 0.0)] == pytest.approx(4 * np.pi * shi, rel=1e-13)
    # outside the unit ball the modified weight is 1, so the value is the L1 norm
    assert kato.l1_norm(H3, CHI) == pytest.approx(np.pi * (np.sinh(2) - 2), rel=1e-13)
    assert FROZEN[("modified", 2.0)] == pytest.approx(np.pi * (np.sinh(2) - 2), rel=1e-13)


def test_gaussian_values_against_quad():
    assert kato.weighted_integral(H3, GAUSS, 0.0, kato.kato_weight(H3)) == pytest.approx(
        1.637912049071373, rel=1e-12)
    ref = 4 * np.pi * quad(lambda r: np.exp(-4 * r * r) * np.sinh(r), 0, 5, epsrel=1e-13)[0]
    assert ref == pytest.approx(1.637912049071373, rel=1e-12)
    assert kato.l1_norm(H3, GAUSS) == pytest.approx(0.7907733397770713, rel=1e-12)
    assert kato.weighted_integral(H3, GAUSS, 0.0, kato.modified_weight(H3)) == pytest.approx(
        1.7161496851409872, rel=1e-12)


def test_flat_space_kato_norm():
    # in R3 the Kato integral of chi_B at the center is 4 pi int_0^1 r dr
    assert kato.weighted_integral(R3, CHI, 0.0, kato.kato_weight(R3)) == pytest.approx(2 * np.pi, rel=1e-13)
    with pytest.raises(ValueError):
        kato.delta_weight(R3, 0.1)
    with pytest.raises(ValueError):
        kato.kato_weight(Space.sphere())


@settings(max_examples=10)
@given(rho=st.floats(0.0, 3.0), width=st.floats(0.2, 1.0))
def test_route_agreement_and_ordering(rho, width):
    V = kato.gaussian_potential(1.0, width)
    w = weights()
    k = kato.weighted_integral(H3, V, rho, w["kato"])
    assert kato.weighted_integral_2d(H3, V, rho, w["kato"], n_r=64, n_theta=64) == pytest.approx(k, rel=1e-7)
    # j_delta < j makes the delta weight larger than the Kato weight
    assert kato.weighted_integral(H3, V, rho, w["delta"]) >= k


def test_sup_over_base_points_and_norms():
    res = kato.sup_over_base_points(H3, CHI, kato.kato_weight(H3))
    assert res.rho == pytest.approx(0.0, abs=1e-8)
    assert res.value == pytest.approx(FROZEN[("kato", 0.0)], rel=1e-12)
    assert kato.kato_norm(H3, CHI.scaled(2.0)) == pytest.approx(2 * res.value, rel=1e-12)
    assert kato.l1_gamma_norm(H3, CHI).value == pytest.approx(2.0, rel=1e-12)


def test_power_potential_monotone_and_divergent():
    vals = [kato.kato_norm(H3, kato.power_potential(H3, p)) for p in (1.5, 2.0, 3.0)]
    assert vals[0] > vals[1] > vals[2] > 0
    with pytest.raises(kato.DivergentIntegralError):
        kato.weighted_integral(H3, kato.power_potential(H3, 0.5), 0.0, kato.kato_weight(H3))


def test_report_json_and_diagnostics():
    rep = kato.kato_report(H3, GAUSS)
    data = json.loads(rep.to_json())
    assert data["kato"] == pytest.approx(1.637912049071373, rel=1e-10)
    assert data["delta"] == 0.1
    bad = kato.kato_report(H3, kato.power_potential(H3, 1.5))
    assert bad.l1 == float("inf")
    assert any(d.startswith("l1") for d in bad.diagnostics)
    with pytest.raises(ValueError):
        kato.kato_report(R3, GAUSS)


def test_load_potential(tmp_path):
    r = np.linspace(0, 4.5, 451)
    f = tmp_path / "v.txt"
    f.write_text("# r V\n" + "\n".join(f"{a} {b}" for a, b in zip(r, np.exp(-4 * r * r))))
    V = kato.load_potential(f)
    assert kato.l1_norm(H3, V) == pytest.approx(0.7907733397770713, rel=1e-6)
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2\n0 3\n")
    with pytest.raises(ValueError):
        kato.load_potential(bad)
    with pytest.raises(KeyError):
        kato.builtin_potential("yukawa", 1.0)
    assert kato.builtin_potential("zero", 1.0)(1.0) == 0.0
