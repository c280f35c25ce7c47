"""The twelve acceptance checks, shared by the test-suite and the CLI.

Each check returns a CheckResult with the measured value, the tolerance it
is compared against, a pass flag and a small dict of diagnostics.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import freeprop, jacobi, kato, parametrix, radial, schrodinger
from .manifold import Space


@dataclass
class CheckResult:
    number: int
    name: str
    measured: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] criterion {self.number:2d} {self.name}: "
                f"measured {self.measured:.6g} (tolerance {self.tolerance:.3g})")

    def as_dict(self, timing: bool = False) -> dict:
        d = _plain(asdict(self))
        if not timing:
            d.pop("seconds")
        return d


def _plain(obj):
    """numpy scalars and arrays to builtin types (for JSON)."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _timed(fn):
    def wrapper(**kw):
        t0 = time.perf_counter()
        res = fn(**kw)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _random_s3_point(rng):
    v = rng.normal(size=4)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# S3 and fundamental integrals


@_timed
def check_oracle_equivalence(seed: int = 1, samples: int = 20, degree: int = 8,
                             tol: float = 1e-6, max_seconds: float = 60.0) -> CheckResult:
    """Geometric S0(t) f vs the spectral sum, band-limited f on S3."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    S3 = Space.sphere()
    worst = 0.0
    for _ in range(samples):
        f = freeprop.PolynomialFunction.random(rng, degree)
        x = _random_s3_point(rng)
        t = rng.uniform(0.05, 2.0 * np.pi - 0.05)
        geo = freeprop.apply_sine(S3, t, f, x, level=degree + 4)
        spec = freeprop.spectral_sine_apply(t, f, x, ell_max=degree)
        scale = max(abs(spec), 1e-3 * np.abs(f.coeffs).sum())
        worst = max(worst, abs(geo - spec) / scale)
    elapsed = time.perf_counter() - t0
    return CheckResult(1, "S3 geometric vs spectral sine propagator", worst, tol,
                       bool(worst <= tol and elapsed <= max_seconds),
                       {"samples": samples, "degree": degree, "elapsed_s_limit": max_seconds})


@_timed
def check_antisymmetry(seed: int = 2, samples: int = 12, degree: int = 8,
                       tol: float = 1e-8) -> CheckResult:
    """S0(t) + S0(2 pi - t) = 0 and S0(pi) = 0 on S3."""
    rng = np.random.default_rng(seed)
    S3 = Space.sphere()
    anti, at_pi = 0.0, 0.0
    for _ in range(samples):
        f = freeprop.PolynomialFunction.random(rng, degree)
        x = _random_s3_point(rng)
        t = rng.uniform(0.05, np.pi)
        a = freeprop.apply_sine(S3, t, f, x, level=degree + 4)
        b = freeprop.apply_sine(S3, 2.0 * np.pi - t, f, x, level=degree + 4)
        anti = max(anti, abs(a + b))
        at_pi = max(at_pi, abs(freeprop.apply_sine(S3, np.pi, f, x)))
        # the limit through non-exceptional times
        at_pi = max(at_pi, abs(freeprop.apply_sine(S3, np.pi * (1 - 1e-12), f, x, level=degree + 4)))
    worst = max(anti, at_pi)
    return CheckResult(2, "S3 antisymmetry and S0(pi) = 0", worst, tol, bool(worst <= tol),
                       {"antisymmetry": anti, "at_pi": at_pi})


@_timed
def check_fundamental_integrals(radii=(0.5, 1.0, 2.0, 4.0), tol: float = 1e-8) -> CheckResult:
    """int |S0| dt = 1/(4 pi j(r)) on H3 (and S3 for r < pi); int j|S0| dt = 1/(4 pi)."""
    H3, S3 = Space.hyperbolic(), Space.sphere()
    worst = 0.0
    rows = []
    for sp in (H3, S3):
        for r in radii:
            if sp is S3 and r >= np.pi:
                continue
            num = freeprop.fundamental_integral_check(sp, r)
            ref = freeprop.fundamental_integral_closed(sp, r)
            wnum = freeprop.fundamental_integral_check(sp, r, weight=sp.j)
            e1 = abs(num - ref) / ref
            e2 = abs(wnum - 1.0 / (4.0 * np.pi)) * 4.0 * np.pi
            worst = max(worst, e1, e2)
            rows.append((sp.kind, r, num, ref, wnum))
    return CheckResult(3, "fundamental integrals", worst, tol, bool(worst <= tol),
                       {"rows": rows})


@_timed
def check_zonal_projections(ell_max: int = 16, seed: int = 3, degree: int = 6,
                            tol: float = 1e-10) -> CheckResult:
    """Traces (l+1)^2 and the closed-form P_l vs the S0-integral formula."""
    trace_err = max(abs(freeprop.projection_trace(ell) - (ell + 1) ** 2) for ell in range(ell_max + 1))
    rng = np.random.default_rng(seed)
    f = freeprop.PolynomialFunction.random(rng, degree)
    x = _random_s3_point(rng)
    scale = np.abs(f.coeffs).sum()
    worst = 0.0
    for ell in range(ell_max + 1):
        a = freeprop.projection_apply(ell, f, x, "closed")
        b = freeprop.projection_apply(ell, f, x, "sine")
        worst = max(worst, abs(a - b) / scale)
    measured = max(trace_err, worst)
    return CheckResult(4, "zonal projections", measured, tol, bool(measured <= tol),
                       {"trace_error": trace_err, "route_difference": worst, "ell_max": ell_max})


# ---------------------------------------------------------------------------
# Jacobi transport


@_timed
def check_jacobi_suite(eps_list=(1e-3, 1e-2, 1e-1), r_max: float = 20.0,
                       max_seconds: float = 30.0) -> CheckResult:
    """Contraction bounds |T - jI|/j, |T' - j'I|/j <= 2 eps and small-r slopes."""
    t0 = time.perf_counter()
    grid = np.concatenate([np.geomspace(1e-3, 1.0, 120), np.linspace(1.0, r_max, 400)[1:]])
    worst_ratio = 0.0
    min_slope_T, min_slope_dT = np.inf, np.inf
    rows = []
    for prof in jacobi.PROFILES:
        for mat in jacobi.MATRICES:
            for eps in eps_list:
                pe = jacobi.builtin_perturbation(prof, eps, mat)
                path = jacobi.integrate_transport(-1.0, pe, r_max)
                a, b = jacobi.contraction_ratios(path, grid)
                s1, s2 = jacobi.small_r_slopes(path)
                worst_ratio = max(worst_ratio, a / (2 * eps), b / (2 * eps))
                min_slope_T = min(min_slope_T, s1)
                min_slope_dT = min(min_slope_dT, s2)
                rows.append((prof, mat, eps, a / eps, b / eps, s1, s2))
    elapsed = time.perf_counter() - t0
    ok = worst_ratio <= 1.0 and min_slope_T >= 2.9 and min_slope_dT >= 1.9 and elapsed <= max_seconds
    return CheckResult(5, "Jacobi contraction suite (ratio to 2 eps)", worst_ratio, 1.0, bool(ok),
                       {"min_slope_T": min_slope_T, "min_slope_dT": min_slope_dT,
                        "rows": rows, "elapsed_s_limit": max_seconds})


@_timed
def check_scattering_rate(eps: float = 0.01, window=(10.0, 30.0), target: float = 2.0,
                          rel_tol: float = 0.05) -> CheckResult:
    """Fitted decay rate of |T/j - Tinf| for A1 = eps e^{-2s} I."""
    pe = jacobi.builtin_perturbation("exponential", eps)
    path = jacobi.integrate_transport(-1.0, pe, pe.support)
    scat = jacobi.scattering_data(-1.0, pe, path=path)
    r = np.linspace(window[0], window[1], 41)
    dev = jacobi.scattering_deviation(path, scat, r)
    vals = np.linalg.norm(dev, ord=2, axis=(-2, -1))
    rate = jacobi.fit_decay_rate(r, vals)
    ok = abs(rate - target) <= rel_tol * target and rate >= 1.9
    return CheckResult(6, "scattering-limit decay rate", rate, rel_tol * target, bool(ok),
                       {"target": target, "window": list(window)})


# ---------------------------------------------------------------------------
# parametrix


def error_l1_scale(pe: jacobi.Perturbation, kappa0: float = -1.0) -> float:
    """The smallness parameter for the L1 bound: max(2 ||A1||_{L1(geodesic)}, ||A1||_{L1(M)})."""
    if pe.profile is not None and pe.name.startswith("exponential"):
        return float("inf")
    return max(2.0 * pe.geodesic_l1(), pe.volume_l1(kappa0))


@_timed
def check_parametrix_error(eps_list=(1e-3, 1e-2, 1e-1), tol_exact: float = 1e-8,
                           r_max: float = 10.0) -> CheckResult:
    """Error = 0 for a = j^2; size bounds for the perturbation family."""
    r = np.concatenate([np.geomspace(1e-3, 1.0, 60), np.linspace(1.0, r_max, 200)[1:]])
    zero = jacobi.integrate_transport(-1.0, jacobi.zero_perturbation(), r_max)
    exact = float(np.max(np.abs(parametrix.error_values(zero, r))))
    fd = float(np.max(np.abs(parametrix.error_values_fd(zero, np.linspace(1.0, r_max, 50), h=2e-3))))
    point_ratio, l1_ratio = 0.0, 0.0
    rows = []
    for prof in jacobi.PROFILES:
        for mat in jacobi.MATRICES:
            for eps in eps_list:
                pe = jacobi.builtin_perturbation(prof, eps, mat)
                span = min(pe.support, 20.0) + 20.0
                path = jacobi.integrate_transport(-1.0, pe, span)
                ef = parametrix.error_term(path, r)
                pr = ef.scaled_sup() / (2 * eps)
                scale = error_l1_scale(pe)
                l1 = parametrix.error_l1(path) if np.isfinite(scale) else float("nan")
                lr = l1 / (2 * scale) if np.isfinite(scale) else 0.0
                point_ratio = max(point_ratio, pr)
                l1_ratio = max(l1_ratio, lr)
                rows.append((prof, mat, eps, pr, l1, scale))
    ok = exact <= tol_exact and point_ratio <= 1.0 and l1_ratio <= 1.0
    return CheckResult(7, "parametrix error (worst bound ratio)", max(point_ratio, l1_ratio), 1.0,
                       bool(ok), {"a_equals_j2_sup": exact, "a_equals_j2_fd_sup": fd,
                                  "pointwise_ratio": point_ratio, "l1_ratio": l1_ratio,
                                  "rows": rows})


@_timed
def check_error_series(eps: float = 0.01, T: float = 5.0, dt: float = 0.05,
                       c_max: float = 4.0) -> CheckResult:
    """Factorial decay of the U(L1) norms of S0 * E^{*n}."""
    n = int(round(T / dt))
    constants = {}
    residuals = {}
    for prof in jacobi.PROFILES:
        pe = jacobi.builtin_perturbation(prof, eps)
        path = jacobi.integrate_transport(-1.0, pe, T + 1.0)
        S0 = parametrix.perturbed_parametrix(path, dt, n)
        E = parametrix.error_kernel(path, dt, n)
        res = parametrix.iterate_error_series(S0, E, n_max=10)
        constants[prof] = parametrix.factorial_constant(res.norms, eps, T)
        residuals[prof] = parametrix.algebraic_residual(S0, E, res.total)
    worst = max(constants.values())
    return CheckResult(8, "error-series factorial constant", worst, c_max, bool(worst <= c_max),
                       {"constants": constants, "algebraic_residual": residuals})


def born_sample_points(n: int = 20, seed: int = 9, T: float = 4.0):
    """(t, r) inside the light cone, on a lattice shared by all grids used."""
    rng = np.random.default_rng(seed)
    pts = set()
    while len(pts) < n:
        ti = int(rng.integers(5, int(round(T * 10)) + 1))
        ki = int(rng.integers(0, ti))
        if (ti - ki) % 2:
            continue
        pts.add((ti / 10.0, ki / 10.0))
    return sorted(pts)


@_timed
def check_born_vs_fd(amplitude: float = 0.05, T: float = 4.0, tol: float = 1e-3,
                     dts=(0.05, 0.025), fd_steps=(0.05, 0.025, 0.0125),
                     max_seconds: float = 300.0) -> CheckResult:
    """Resummed Born sine kernel vs the characteristic finite-difference solver."""
    t0 = time.perf_counter()
    H3 = Space.hyperbolic()
    V = kato.indicator_potential(amplitude, 1.0)
    pts = born_sample_points(T=T)
    fd = []
    for h in fd_steps:
        F = radial.point_source_w(H3, V, T, h)
        fd.append([F.u(t, r) for t, r in pts])
    ref, fd_err = radial.richardson(fd)
    born = []
    res = None
    for dt in dts:
        n = int(round(T / dt))
        res = parametrix.born_series_potential(H3, V, dt, n)
        ac = res.total.ac_grid()
        born.append([ac[int(round(t / dt)), int(round(r / dt))] for t, r in pts])
    val, _ = radial.richardson(born)
    rel = np.abs(val - ref) / np.abs(ref)
    kn = kato.kato_norm(H3, V)
    ratios = res.ratios
    elapsed = time.perf_counter() - t0
    ok = rel.max() <= tol and max(ratios) <= 2 * kn and elapsed <= max_seconds
    return CheckResult(9, "Born series vs finite differences", float(rel.max()), tol, bool(ok),
                       {"fd_error_estimate": float(np.max(fd_err)), "term_ratios": ratios,
                        "kato_norm": kn, "ratio_bound": 2 * kn,
                        "raw_dt_errors": float(np.max(np.abs(np.array(born[-1]) - ref) / np.abs(ref)))})


# ---------------------------------------------------------------------------
# Schrodinger


def perturbed_sine_kernel(kato_size: float = 0.05, dt: float = 0.05, T: float = 10.0,
                          width: float = 0.5):
    """Born-resummed sine kernel for a gaussian V scaled to the given Kato norm."""
    H3 = Space.hyperbolic()
    unit = kato.gaussian_potential(1.0, width)
    amp = kato_size / kato.kato_norm(H3, unit)
    V = kato.gaussian_potential(amp, width)
    n = int(round(T / dt))
    return parametrix.born_series_potential(H3, V, dt, n), V


@_timed
def check_schrodinger(t_decay=None, tol_decay: float = 1e-6, tol_closed: float = 1e-6,
                      tol_time: float = 1e-4) -> CheckResult:
    """Free t^{3/2} decay, oscillatory vs closed form, time-domain vs spectral, perturbed scan."""
    if t_decay is None:
        t_decay = np.geomspace(1.0, 50.0, 12)
    r = np.linspace(0.0, 10.0, 101)
    c = schrodinger.FREE_DECAY_CONSTANT
    rows = schrodinger.decay_scan(schrodinger.free_kernel_oscillatory, t_decay, r)
    decay_err = max(abs(row[2] - c) / c for row in rows)
    closed_err = 0.0
    for t in np.geomspace(0.5, 50.0, 8):
        K = schrodinger.free_kernel_oscillatory(t, r)
        C = schrodinger.free_kernel_closed(t, r)
        closed_err = max(closed_err, float(np.max(np.abs(K.values - C) / np.abs(C))))
    H3 = Space.hyperbolic()
    S0 = parametrix.free_sine_kernel(H3, 0.05, 200)
    time_err = 0.0
    for t in (0.5, 1.0, 5.0, 20.0):
        a = schrodinger.time_domain_kernel(S0, t, r)
        b = schrodinger.free_kernel_oscillatory(t, r)
        time_err = max(time_err, float(np.max(np.abs(a.values - b.values) / np.abs(b.values))))
    series, _ = perturbed_sine_kernel()
    pert_rows = schrodinger.decay_scan(
        lambda t, rr: schrodinger.perturbed_kernel(series.total, t, rr), t_decay, r)
    pert_sup = max(row[2] for row in pert_rows)
    measured = max(decay_err / tol_decay, closed_err / tol_closed, time_err / tol_time)
    ok = measured <= 1.0 and np.isfinite(pert_sup)
    return CheckResult(10, "Schrodinger decay and routes (worst error / tolerance)", measured, 1.0,
                       bool(ok), {"free_decay_rel_error": decay_err,
                                  "oscillatory_vs_closed": closed_err,
                                  "time_domain_vs_spectral": time_err,
                                  "perturbed_sup_t32_K": pert_sup,
                                  "free_constant": c})


# ---------------------------------------------------------------------------
# weighted algebra and exponential decay


@_timed
def check_weighted_algebra(pairs: int = 100, seed: int = 11, dt: float = 0.0625, n: int = 12,
                           slack: float = 1e-6, delta: float = 0.1) -> CheckResult:
    """(comp1)-(comp4) on random kernel pairs with weights (j, j') and (j_delta, j_delta')."""
    H3 = Space.hyperbolic()
    rng = np.random.default_rng(seed)
    weights = {
        "j": (H3.j, lambda t: jacobi.scalar_j_prime(-1.0, t)),
        "j_delta": (lambda t: jacobi.scalar_j_delta(1.0, delta, t),
                    lambda t: jacobi.scalar_j_delta_prime(1.0, delta, t)),
    }
    worst = -np.inf
    by_name = {}
    for k in range(pairs):
        T1 = parametrix.random_kernel(H3, rng, dt, n)
        T2 = parametrix.random_kernel(H3, rng, dt, n)
        key = "j" if k % 2 == 0 else "j_delta"
        w, wp = weights[key]
        for name, lhs, rhs in parametrix.comp_inequalities(T1, T2, w, wp, n_rho=11):
            worst = max(worst, lhs / rhs)
            by_name[name] = max(by_name.get(name, -np.inf), lhs / rhs)
    # derivation identity t (F * G) = (tF) * G + F * (tG)
    tw = lambda t: np.asarray(t, dtype=float)  # noqa: E731
    T1 = parametrix.random_kernel(H3, rng, dt, n)
    T2 = parametrix.random_kernel(H3, rng, dt, n)
    lhs = parametrix.convolve(T1, T2).time_weighted(tw)
    rhs = parametrix.convolve(T1.time_weighted(tw), T2) + parametrix.convolve(T1, T2.time_weighted(tw))
    deriv = float(np.max(np.abs(lhs.ac_grid() - rhs.ac_grid())) / np.max(np.abs(lhs.ac_grid())))
    deriv_shell = float(abs(lhs.q(0.7) - rhs.q(0.7)))
    ok = worst <= 1.0 + slack and deriv <= 1e-12 and deriv_shell <= 1e-12
    return CheckResult(11, "weighted algebra (max lhs/rhs)", float(worst), 1.0 + slack,
                       bool(ok), {"max_lhs_over_rhs": by_name, "derivation_identity": deriv,
                                  "pairs": pairs})


def smooth_bump(radius: float = 1.0):
    """Radial (1 - r^2)^4 bump of unit L1 norm on H3."""
    from scipy.integrate import quad

    g = lambda r: np.where(r < radius, (1.0 - np.minimum(r / radius, 1.0) ** 2) ** 4, 0.0)  # noqa: E731
    mass = 4.0 * np.pi * quad(lambda r: float(g(r)) * np.sinh(r) ** 2, 0.0, radius)[0]
    return lambda r: g(r) / mass


@_timed
def check_exponential_decay(amplitude: float = 0.05, width: float = 0.5, T_max: float = 10.0,
                            delta_frac: float = 0.1, h: float = 0.01) -> CheckResult:
    """sinh((alpha0 - delta) t) ||S_V(t) f||_inf bounded on [1, T_max] for V in K~."""
    H3 = Space.hyperbolic()
    V = kato.gaussian_potential(amplitude, width)
    f = smooth_bump()
    R = 1.0 + T_max + 1.0
    F = radial.cauchy_w(H3, V, f, T_max, R, h)
    rate = H3.alpha0 * (1.0 - delta_frac)
    ts = np.arange(1.0, T_max + 1e-9, 0.5)
    vals = []
    for t in ts:
        m = int(round(t / h))
        k = np.arange(1 if m % 2 else 2, F.w.shape[1] - 1, 2)
        u = np.abs(F.w[m, k]) / H3.j(k * h)
        vals.append(np.sinh(rate * t) * u.max())
    vals = np.array(vals)
    bound = float(vals.max())
    ok = np.isfinite(bound) and vals[-1] <= bound
    return CheckResult(12, "exponential decay sup_t sinh((a0-d)t)||S_V f||_inf", bound, float("inf"),
                       bool(ok), {"modified_kato_norm": kato.modified_kato_norm(H3, V),
                                  "l1_norm": kato.l1_norm(H3, V),
                                  "profile": [(float(t), float(v)) for t, v in zip(ts, vals)]})


CHECKS = {
    1: check_oracle_equivalence,
    2: check_antisymmetry,
    3: check_fundamental_integrals,
    4: check_zonal_projections,
    5: check_jacobi_suite,
    6: check_scattering_rate,
    7: check_parametrix_error,
    8: check_error_series,
    9: check_born_vs_fd,
    10: check_schrodinger,
    11: check_weighted_algebra,
    12: check_exponential_decay,
}


def run(numbers=None, options: dict | None = None, echo=None):
    """Run the selected checks; options maps a criterion number to keyword overrides."""
    options = options or {}
    out = []
    for k in sorted(numbers or CHECKS):
        res = CHECKS[k](**options.get(k, {}))
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
