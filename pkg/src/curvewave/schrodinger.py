"""Schrodinger kernel e^{itH} on H3 (curvature -1) for radial data about a source.

With H0 = -Delta - 1, spherical functions sin(lam r)/(lam sinh r) and
Plancherel density lam^2/(2 pi^2), the free kernel is

    K(t, r) = (2 pi^2 sinh r)^{-1} int_0^inf e^{it lam^2} lam sin(lam r) dlam.

Two numerical routes are provided.

* spectral: the lam-integral by Filon quadrature in u = lam^2 on [0, lam_max]
  plus the exact Fresnel tail beyond lam_max;
* time domain: integrating by parts in lam turns the integral into a
  t^{-1}-weighted pairing of F[e^{it lam^2}](s) with the sine kernel
  s S(s), which is the form that extends to S_V from the Born series.

The closed form r/(sinh r) (4 pi t)^{-3/2} e^{i(3 pi/4 - r^2/(4t))} serves as
the oracle for the free kernel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .parametrix import SpaceTimeKernel, gauss_legendre

FREE_DECAY_CONSTANT = (4.0 * np.pi) ** -1.5


class ResolutionError(ValueError):
    pass


@dataclass
class SchrodingerKernel:
    """Radial profile K(t, r) on r_grid; tail is a truncation-error estimate."""

    t: float
    r: np.ndarray
    values: np.ndarray
    tail: float = 0.0
    route: str = ""

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def reversed(self) -> "SchrodingerKernel":
        """The kernel at -t, using K(-t) = conj K(t)."""
        return SchrodingerKernel(-self.t, self.r, np.conj(self.values), self.tail, self.route)


def _rj(r):
    """r / sinh r with the limit 1 at r = 0."""
    r = np.asarray(r, dtype=float)
    out = np.ones_like(r)
    nz = r > 1e-8
    out[nz] = r[nz] / np.sinh(r[nz])
    out[~nz] = 1.0 - r[~nz] ** 2 / 6.0
    return out


def free_kernel_closed(t: float, r) -> np.ndarray:
    """Closed-form free kernel (the oracle)."""
    if t == 0:
        raise ValueError("t = 0")
    if t < 0:
        return np.conj(free_kernel_closed(-t, r))
    r = np.asarray(r, dtype=float)
    return _rj(r) * FREE_DECAY_CONSTANT * t ** -1.5 * np.exp(1j * (0.75 * np.pi - r * r / (4.0 * t)))


# ---------------------------------------------------------------------------
# spectral route


def fresnel_tail(t: float, a: float) -> complex:
    """int_a^inf e^{it mu^2} dmu for t > 0 (any real a)."""
    k = np.sqrt(2.0 * t / np.pi)
    S, C = special.fresnel(a * k)
    return np.sqrt(np.pi / (2.0 * t)) * ((0.5 - C) + 1j * (0.5 - S))


def _tail_sine(t: float, r: float, lam: float) -> complex:
    """int_lam^inf e^{it l^2} l sin(l r) dl (Abel sense), t > 0."""
    total = 0.0 + 0.0j
    for sgn in (1.0, -1.0):
        # e^{it l^2 + i sgn l r} = e^{it mu^2} e^{-i r^2/4t},  mu = l + sgn r/2t
        shift = sgn * r / (2.0 * t)
        a = lam + shift
        part = 1j * np.exp(1j * t * a * a) / (2.0 * t) - shift * fresnel_tail(t, a)
        total += sgn * part
    return total * np.exp(-1j * r * r / (4.0 * t)) / 2j


def _filon_panel(t, ua, ub, g, nodes):
    """int_ua^ub e^{itu} g(u) du with g replaced by its Legendre interpolant."""
    x, w = gauss_legendre(nodes)
    m, h = 0.5 * (ua + ub), 0.5 * (ub - ua)
    gv = g(m + h * x)
    k = np.arange(nodes)
    P = special.eval_legendre(k[:, None], x[None, :])
    coef = (2 * k + 1) / 2.0 * ((P * w[None, :]) @ gv)
    om = t * h
    mom = 2.0 * (1j ** k) * special.spherical_jn(k, abs(om))
    if om < 0:
        mom = np.conj(mom)
    return h * np.exp(1j * t * m) * np.dot(coef, mom)


def oscillatory_integral(t: float, b, lam_max: float, panel: float, nodes: int = 20) -> complex:
    """int_0^lam_max e^{it lam^2} lam b(lam) dlam for smooth b.

    The first panel is done in lam by Gauss-Legendre (the phase is small
    there); the rest by Filon panels in u = lam^2, where lam dlam = du/2.
    """
    lam1 = panel if t == 0 else min(panel, 1.0 / np.sqrt(abs(t)))
    x, w = gauss_legendre(3 * nodes)
    lam = 0.5 * lam1 * (x + 1.0)
    total = 0.5 * lam1 * np.dot(w, np.exp(1j * t * lam * lam) * lam * b(lam))
    edges = np.arange(lam1, lam_max + 0.5 * panel, panel)
    edges[-1] = lam_max
    g = lambda u: 0.5 * b(np.sqrt(u))  # noqa: E731
    for la, lb in zip(edges[:-1], edges[1:]):
        if lb > la:
            total += _filon_panel(t, la * la, lb * lb, g, nodes)
    return total


def spectral_integral(t: float, r: float, lam_max: float = 8.0, panel: float | None = None,
                      nodes: int = 20) -> complex:
    """int_0^inf e^{it lam^2} lam sin(lam r) dlam for t > 0."""
    if panel is None:
        panel = min(0.25, 1.0 / max(r, 1e-12))
    b = lambda lam: np.sin(lam * r)  # noqa: E731
    return oscillatory_integral(t, b, lam_max, panel, nodes) + _tail_sine(t, r, lam_max)


def free_kernel_oscillatory(t: float, r_grid, lam_max: float = 8.0, nodes: int = 20,
                            t_min: float = 1e-3) -> SchrodingerKernel:
    """Free kernel from the spectral integral (Filon + Fresnel tail)."""
    if t == 0 or abs(t) < t_min:
        raise ResolutionError(f"|t| = {abs(t)} below the phase resolution t_min = {t_min}; "
                              f"needs a first panel of width <= {1.0 / np.sqrt(max(abs(t), 1e-300)):.3g}")
    if t < 0:
        return free_kernel_oscillatory(-t, r_grid, lam_max, nodes, t_min).reversed()
    r = np.atleast_1d(np.asarray(r_grid, dtype=float))
    vals = np.empty(r.size, dtype=complex)
    for i, ri in enumerate(r):
        if ri < 1e-8:
            # limit r -> 0: sin(lam r)/sinh r -> lam
            I = oscillatory_integral(t, lambda lam: lam, lam_max, 0.25, nodes)
            I += _tail_lam2(t, lam_max)
            vals[i] = I / (2.0 * np.pi ** 2)
        else:
            vals[i] = spectral_integral(t, ri, lam_max, nodes=nodes) / (2.0 * np.pi ** 2 * np.sinh(ri))
    return SchrodingerKernel(t, r, vals, 0.0, "spectral")


def _tail_lam2(t, lam):
    """int_lam^inf e^{it l^2} l^2 dl (Abel sense) by parts."""
    return 1j * lam * np.exp(1j * t * lam * lam) / (2.0 * t) + 1j / (2.0 * t) * fresnel_tail(t, lam)


# ---------------------------------------------------------------------------
# time-domain route


def fourier_gaussian(t: float, s):
    """F[e^{it lam^2}](s) = int e^{it lam^2 + i lam s} dlam."""
    s = np.asarray(s, dtype=float)
    ph = np.pi / 4.0 if t > 0 else -np.pi / 4.0
    return np.sqrt(np.pi / abs(t)) * np.exp(1j * (ph - s * s / (4.0 * t)))


NORMALIZATION = 1.0 / (2.0 * np.pi)


def time_domain_kernel(S: SpaceTimeKernel, t: float, r_grid, sub: int = 16) -> SchrodingerKernel:
    """K(t, r) = C t^{-1} int_0^T F[e^{it lam^2}](s) (i s S(s))(r) ds, C = 1/(2 pi).

    S is a sine kernel on H3 (shell plus ac part, as produced by the Born
    series). The ac part is interpolated linearly in s onto `sub` points
    per step. The time window ends at T = n dt; the returned tail is an
    estimate of the neglected s > T contribution assuming e^{-s} decay of
    the last slab.
    """
    if t == 0:
        raise ValueError("t = 0")
    if S.space.kappa0 != -1.0:
        raise ValueError("the time-domain route is set up for H3 with kappa0 = -1")
    r = np.atleast_1d(np.asarray(r_grid, dtype=float))
    T = S.t[-1]
    if np.any(r > T + 1e-12):
        raise ValueError(f"r up to {r.max()} needs the sine kernel up to s = r; window is {T}")
    pre = NORMALIZATION / t
    vals = np.zeros(r.size, dtype=complex)
    if S.shell is not None:
        # shell density q(s)/j(s) delta(r - s)
        vals += pre * fourier_gaussian(t, r) * 1j * _rj(r) * S.q(r)
    tail = 0.0
    if S.ac is not None:
        sf = np.linspace(0.0, T, S.n * sub + 1)
        Gf = fourier_gaussian(t, sf) * 1j * sf
        for i, ri in enumerate(r):
            col = np.interp(ri, S.r, np.arange(S.n + 1))
            k = int(round(col))
            if abs(col - k) > 1e-9:
                raise ValueError("r_grid must lie on the kernel grid")
            prof = S.ac[:, k].copy()
            prof[:k] = 0.0
            m = sf >= S.t[k] - 1e-12
            vals[i] += pre * np.trapezoid(Gf[m] * np.interp(sf[m], S.t, prof), sf[m])
        last = np.abs(S.ac[-1]).max() * T
        tail = abs(pre) * np.sqrt(np.pi / abs(t)) * last
    return SchrodingerKernel(t, r, vals, tail, "time-domain")


def perturbed_kernel(SV: SpaceTimeKernel, t: float, r_grid, sub: int = 16) -> SchrodingerKernel:
    """e^{itH}(x0, x) for H = H0 + V from the resummed Born sine kernel S_V."""
    if t < 0:
        return perturbed_kernel(SV, -t, r_grid, sub).reversed()
    return time_domain_kernel(SV, t, r_grid, sub)


# ---------------------------------------------------------------------------
# first-order Duhamel oracle


def first_born_duhamel(t: float, r: float, amplitude: float, width: float) -> complex:
    """i int_0^t ds int K0(t - s, d(x, y)) V(y) K0(s, |y|) dy for V = A e^{-|y|^2/w^2}.

    On H3 the factors sinh cancel against the closed-form free kernels, the
    shell integral in d has a primitive, and the remaining integral over
    |y| is Gaussian, so only the s-integral is done numerically.
    """
    if t <= 0:
        raise ValueError("t > 0 required")
    c0 = np.sqrt(np.pi) * np.exp(0.75j * np.pi) / (8.0 * np.pi ** 2)
    jr = np.sinh(r) if r > 0 else None

    def f(s):
        tau = t - s
        a = 1.0 / width ** 2 + 1j / (4.0 * s)
        b = a + 1j / (4.0 * tau)
        ks, kt = c0 * s ** -1.5, c0 * tau ** -1.5
        expo = -1j * r * r * a / (4.0 * tau * a + 1j)
        if jr is None:
            # r -> 0: (e^{..}(-c/b))/sinh r -> -(i/(2 tau b)) e^{0}
            core = -1j / (2.0 * tau * b)
        else:
            c = 1j * r / (2.0 * tau)
            core = np.exp(expo) * (-c / b) / jr
        gauss = amplitude * np.sqrt(np.pi / b) * core
        return 1j * 2.0 * np.pi * 2j * tau * kt * ks * 0.5 * gauss

    # s = t sin^2(phi) removes the endpoint behaviour
    def g(phi, part):
        s = t * np.sin(phi) ** 2
        v = f(s) * 2.0 * t * np.sin(phi) * np.cos(phi)
        return v.real if part == 0 else v.imag

    re = integrate.quad(g, 0.0, np.pi / 2, args=(0,), limit=400, epsabs=0, epsrel=1e-11)[0]
    im = integrate.quad(g, 0.0, np.pi / 2, args=(1,), limit=400, epsabs=0, epsrel=1e-11)[0]
    return re + 1j * im


# ---------------------------------------------------------------------------
# scans


def decay_scan(source, t_list, r_grid):
    """Rows (t, sup_r |K|, t^{3/2} sup_r |K|) for source(t, r_grid) -> SchrodingerKernel."""
    rows = []
    for t in t_list:
        K = source(t, r_grid)
        s = K.sup()
        rows.append((float(t), s, abs(t) ** 1.5 * s))
    return rows


def unitarity_proxy(t_list, n: int = 401, lam_max: float = 7.0):
    """L2 norm of e^{itH0} f over B(0, R(t)) for the packet sinh(r) f(r) = r e^{-r^2/2}.

    The free kernel itself is not in L2 (its L2 mass on a ball scales like
    t^{-3}), so the proxy evolves an L2 packet by the spectral route:
    sinh(r) u = (2 pi^2)^{-1} int e^{it lam^2} f^(lam) lam sin(lam r) dlam with
    f^(lam) = 4 pi sqrt(pi/2) e^{-lam^2/2}. R(t) = 10 sqrt(1 + 4 t^2) covers
    the spreading packet. Returns rows (t, norm^2) and the exact value pi^{3/2}.
    """
    amp = 4.0 * np.pi * np.sqrt(np.pi / 2.0)
    rows = []
    for t in t_list:
        R = 10.0 * np.sqrt(1.0 + 4.0 * t * t)
        r = np.linspace(0.0, R, n)
        w = np.empty(n, dtype=complex)
        for i, ri in enumerate(r):
            b = lambda lam, ri=ri: amp * np.exp(-0.5 * lam * lam) * np.sin(lam * ri)  # noqa: E731
            panel = min(0.25, 1.0 / max(ri, 1e-12))
            w[i] = oscillatory_integral(t, b, lam_max, panel) / (2.0 * np.pi ** 2)
        rows.append((float(t), 4.0 * np.pi * integrate.simpson(np.abs(w) ** 2, x=r)))
    return rows, np.pi ** 1.5
