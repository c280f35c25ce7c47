"""Kato-type norms of radial potentials on H3 (and flat space).

For V radial about a center c and a base point x0 at distance rho from c,

    int |V(x)| w(d(x0, x)) dx

is written in geodesic polar coordinates about x0. The angular integral is
exchanged for the distance d = d(c, x) through
    sin(theta) d theta = j(d) dd / (j(r) j(rho)),
which gives the one-dimensional form

    (2 pi / j(rho)) int |V(d)| j(d) W(|d - rho|, d + rho) dd,
    W(a, b) = int_a^b j(r) w(r) dr.

W has closed forms for the Kato weight 1/j (W = b - a), the modified
weight 1/min(1, r) and the L1 weight 1. The direct two-dimensional (r, theta)
quadrature is kept as an independent route.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar
from scipy.special import shichi

from .jacobi import scalar_j_delta
from .manifold import FLAT, HYPERBOLIC, Space, law_of_cosines

DEFAULT_NODES = 48
PANEL = 0.5


class DivergentIntegralError(ArithmeticError):
    pass


@dataclass(frozen=True)
class RadialPotential:
    """V(d) radial about a center. support is where |V| vanishes (or is
    negligible); breakpoints are radii where V or its derivative jumps."""

    fn: Callable
    name: str = "custom"
    support: float = np.inf
    breakpoints: tuple = ()

    def __call__(self, r):
        return self.fn(np.asarray(r, dtype=float))

    def scaled(self, c: float) -> "RadialPotential":
        f = self.fn
        return RadialPotential(lambda r: c * f(r), f"{c}*{self.name}", self.support,
                               self.breakpoints)


def indicator_potential(amplitude: float, radius: float = 1.0) -> RadialPotential:
    """amplitude * chi_{B(0, radius)}, with the mean value at the boundary."""

    def fn(r):
        r = np.asarray(r, dtype=float)
        return amplitude * np.where(r < radius, 1.0, np.where(r == radius, 0.5, 0.0))

    return RadialPotential(fn, f"indicator({amplitude},{radius})", float(radius), (float(radius),))


def gaussian_potential(amplitude: float, width: float = 0.5) -> RadialPotential:
    def fn(r):
        return amplitude * np.exp(-(np.asarray(r, dtype=float) / width) ** 2)

    return RadialPotential(fn, f"gaussian({amplitude},{width})", 9.0 * width)


def exponential_potential(amplitude: float, rate: float = 3.0) -> RadialPotential:
    def fn(r):
        return amplitude * np.exp(-rate * np.asarray(r, dtype=float))

    return RadialPotential(fn, f"exponential({amplitude},{rate})", 40.0 / rate)


def power_potential(space: Space, p: float, amplitude: float = 1.0) -> RadialPotential:
    """amplitude * (1 + j(r))^{-p}."""

    def fn(r):
        return amplitude * (1.0 + space.j(np.asarray(r, dtype=float))) ** (-p)

    return RadialPotential(fn, f"power({p})")


def zero_potential() -> RadialPotential:
    return RadialPotential(lambda r: np.zeros_like(np.asarray(r, dtype=float)), "zero", 0.0)


def load_potential(path) -> RadialPotential:
    """Two-column table (r, V); cubic interpolation, zero past the last radius."""
    with open(path) as fh:
        rows = [
            [float(v) for v in line.replace(",", " ").split()]
            for line in fh
            if line.strip() and not line.lstrip().startswith("#")
        ]
    data = np.array(rows)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("potential table needs two columns r, V")
    r, v = data[:, 0], data[:, 1]
    if np.any(np.diff(r) <= 0) or r[0] < 0:
        raise ValueError("potential radii must be increasing and non-negative")
    spl = CubicSpline(r, v)
    rmax = float(r[-1])

    def fn(s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= rmax, spl(np.clip(s, r[0], rmax)), 0.0)

    return RadialPotential(fn, f"table:{path}", rmax, (rmax,))


BUILTIN_POTENTIALS = {
    "indicator": indicator_potential,
    "gaussian": gaussian_potential,
    "exponential": exponential_potential,
}


def builtin_potential(name: str, amplitude: float) -> RadialPotential:
    if name == "zero":
        return zero_potential()
    if name not in BUILTIN_POTENTIALS:
        raise KeyError(f"unknown potential family {name!r}")
    return BUILTIN_POTENTIALS[name](amplitude)


# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class Weight:
    """Spatial weight w(r) with W(a, b) = int_a^b j(r) w(r) dr."""

    name: str
    w: Callable
    W: Callable
    kinks: tuple = ()


def _check_space(space: Space):
    if space.kind not in (HYPERBOLIC, FLAT):
        raise ValueError("Kato norms are defined here for H3 and flat space")


def kato_weight(space: Space) -> Weight:
    _check_space(space)
    return Weight("kato", lambda r: 1.0 / space.j(r), lambda a, b: b - a)


def modified_weight(space: Space) -> Weight:
    _check_space(space)
    al = space.alpha0

    if space.kind == FLAT:
        def G(r):
            return np.where(r <= 1.0, r, 1.0 + 0.5 * (r * r - 1.0))
    else:
        shi1 = shichi(al)[0]

        def G(r):
            inner = shichi(al * np.minimum(r, 1.0))[0] / al
            outer = (np.cosh(al * np.maximum(r, 1.0)) - np.cosh(al)) / al ** 2
            return np.where(r <= 1.0, inner, shi1 / al + outer)

    return Weight("modified", lambda r: 1.0 / np.minimum(1.0, r),
                  lambda a, b: G(b) - G(a), (1.0,))


def unit_weight(space: Space) -> Weight:
    _check_space(space)
    al = space.alpha0
    if space.kind == FLAT:
        return Weight("l1", lambda r: np.ones_like(r), lambda a, b: 0.5 * (b * b - a * a))
    # cosh(al b) - cosh(al a) written without cancellation
    return Weight("l1", lambda r: np.ones_like(r),
                  lambda a, b: 2.0 * np.sinh(0.5 * al * (b + a)) * np.sinh(0.5 * al * (b - a)) / al ** 2)


def delta_weight(space: Space, delta: float, nodes: int = 32) -> Weight:
    if space.kind != HYPERBOLIC:
        raise ValueError("K_delta is defined for H3")
    al = space.alpha0
    x, wq = np.polynomial.legendre.leggauss(nodes)

    def jd(r):
        return scalar_j_delta(al, delta, r)

    def ratio(r):
        # j / j_delta, smooth with value 1 at r = 0
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, space.j(safe) / jd(safe), 1.0)

    def W(a, b):
        a = np.asarray(a, dtype=float)[..., None]
        b = np.asarray(b, dtype=float)[..., None]
        r = 0.5 * (b - a) * x + 0.5 * (b + a)
        return 0.5 * (b - a)[..., 0] * np.sum(wq * ratio(r), axis=-1)

    return Weight(f"delta({delta})", lambda r: 1.0 / jd(r), W)


# ---------------------------------------------------------------------------
# quadrature helpers


def _panels(edges, panel=PANEL):
    edges = np.unique(np.asarray(edges, dtype=float))
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(1, int(np.ceil((b - a) / panel)))
        e = np.linspace(a, b, n + 1)
        out.extend(zip(e[:-1], e[1:]))
    return out


def composite_gl(fn, edges, nodes: int = DEFAULT_NODES, panel: float = PANEL) -> float:
    x, w = np.polynomial.legendre.leggauss(nodes)
    pan = _panels(edges, panel)
    if not pan:
        return 0.0
    a = np.array([p[0] for p in pan])[:, None]
    b = np.array([p[1] for p in pan])[:, None]
    pts = 0.5 * (b - a) * x + 0.5 * (b + a)
    vals = fn(pts.ravel()).reshape(pts.shape)
    return float(np.sum(0.5 * (b - a) * w * vals))


def _effective_support(space, V, integrand_factory, nodes, panel):
    """Finite integration radius, or raise DivergentIntegralError."""
    if np.isfinite(V.support):
        return V.support
    prev = None
    for R in (20.0, 40.0, 80.0, 160.0):
        val = composite_gl(integrand_factory(), [0.0, R], nodes, panel)
        if prev is not None and abs(val - prev) <= 1e-12 * max(abs(val), 1e-300):
            return R
        prev = val
    raise DivergentIntegralError(f"integral of {V.name} does not settle as the cutoff grows")


# ---------------------------------------------------------------------------
# base-point integrals


def weighted_integral(space: Space, V: RadialPotential, rho: float, weight: Weight,
                      nodes: int = DEFAULT_NODES, panel: float = PANEL) -> float:
    """int |V(x)| w(d(x0, x)) dx for d(center, x0) = rho, by the d-reduction."""
    j = space.j

    if rho < 1e-9:
        def integrand(d):
            return np.abs(V(d)) * j(d) ** 2 * weight.w(np.where(d > 0, d, 1.0)) * np.where(d > 0, 1.0, 0.0)

        R = _effective_support(space, V, lambda: integrand, nodes, panel)
        edges = [0.0, R, *[b for b in V.breakpoints if b < R], *[k for k in weight.kinks if k < R]]
        return 4.0 * np.pi * composite_gl(integrand, edges, nodes, panel)

    jr = float(j(rho))

    def integrand(d):
        return np.abs(V(d)) * j(d) * weight.W(np.abs(d - rho), d + rho)

    R = _effective_support(space, V, lambda: integrand, nodes, panel)
    edges = [0.0, R, rho, *[b for b in V.breakpoints if b < R]]
    for k in weight.kinks:
        edges += [k + rho, abs(k - rho)]
    edges = [e for e in edges if 0.0 <= e <= R]
    return 2.0 * np.pi / jr * composite_gl(integrand, edges, nodes, panel)


def weighted_integral_2d(space: Space, V: RadialPotential, rho: float, weight: Weight,
                         n_r: int = 64, n_theta: int = 64, r_max: float | None = None) -> float:
    """The same integral by direct quadrature in polar coordinates about x0:
    2 pi int dr int d theta |V(d(r, theta))| w(r) j(r)^2 sin(theta).

    The theta-range is split where the distance to the center crosses a
    breakpoint of V, so that jumps of V do not spoil the Gauss rule.
    """
    j = space.j
    if r_max is None:
        r_max = rho + (V.support if np.isfinite(V.support) else 40.0)
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    xt, wt = np.polynomial.legendre.leggauss(n_theta)
    r_edges = [0.0, r_max, *weight.kinks]
    for b in V.breakpoints:
        r_edges += [abs(rho - b), rho + b]
    r_edges = [e for e in r_edges if 0.0 <= e <= r_max]
    total = 0.0
    for a, b in _panels(r_edges, PANEL):
        rs = 0.5 * (b - a) * xr + 0.5 * (b + a)
        for r, wrr in zip(rs, 0.5 * (b - a) * wr):
            th_edges = [0.0, np.pi]
            for d_b in V.breakpoints:
                th = _theta_crossing(space, r, rho, d_b)
                if th is not None:
                    th_edges.append(th)
            th_edges = np.unique(th_edges)
            inner = 0.0
            for t0, t1 in zip(th_edges[:-1], th_edges[1:]):
                th = 0.5 * (t1 - t0) * xt + 0.5 * (t1 + t0)
                d = law_of_cosines(space, r, rho, th)
                inner += 0.5 * (t1 - t0) * np.dot(wt, np.abs(V(d)) * np.sin(th))
            total += wrr * inner * float(weight.w(r)) * float(j(r)) ** 2
    return 2.0 * np.pi * total


def _theta_crossing(space, r, rho, d_b):
    k = space.scale
    if space.kind == HYPERBOLIC:
        num = np.sinh(0.5 * k * d_b) ** 2 - np.sinh(0.5 * k * (r - rho)) ** 2
        den = np.sinh(k * r) * np.sinh(k * rho)
    else:
        num = 0.25 * (d_b ** 2 - (r - rho) ** 2)
        den = r * rho
    if den <= 0:
        return None
    h = num / den
    if not 0.0 < h < 1.0:
        return None
    return 2.0 * np.arcsin(np.sqrt(h))


# ---------------------------------------------------------------------------
# sweeps and norms


@dataclass
class SweepResult:
    value: float
    rho: float
    interior: bool
    plateau: bool
    rho_max: float
    diagnostic: str = ""


def sup_over_base_points(space: Space, V: RadialPotential, weight: Weight,
                         rho_max: float | None = None, n_rho: int = 41,
                         nodes: int = DEFAULT_NODES, max_extend: int = 6) -> SweepResult:
    """sup over rho = d(center, x0) of weighted_integral, by a grid sweep plus
    bounded refinement around the best grid point. If the best point lies on
    the last grid node the grid is extended; a profile that stays flat under
    extension is accepted as a plateau."""
    if rho_max is None:
        base = V.support if np.isfinite(V.support) else 10.0
        rho_max = 2.0 * base + 2.0

    def f(rho):
        return weighted_integral(space, V, rho, weight, nodes)

    plateau = False
    diag = ""
    for _ in range(max_extend + 1):
        grid = np.linspace(0.0, rho_max, n_rho)
        vals = np.array([f(r) for r in grid])
        k = int(np.argmax(vals))
        if k < n_rho - 1:
            break
        ext = f(2.0 * rho_max)
        if ext <= vals[-1] * (1.0 + 1e-10):
            plateau = True
            diag = "supremum reached as a plateau at large rho"
            break
        rho_max *= 2.0
    else:
        return SweepResult(float(vals.max()), float(grid[k]), False, False, rho_max,
                           "supremum still growing at the end of the extended grid")
    best_rho, best = float(grid[k]), float(vals[k])
    if vals.max() > 0 and 0 < k < n_rho - 1:
        lo, hi = grid[k - 1], grid[k + 1]
        res = minimize_scalar(lambda r: -f(r), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-9})
        if -res.fun > best:
            best_rho, best = float(res.x), float(-res.fun)
    return SweepResult(best, best_rho, k < n_rho - 1 or plateau, plateau, rho_max, diag)


def kato_norm(space: Space, V: RadialPotential, **kw) -> float:
    return sup_over_base_points(space, V, kato_weight(space), **kw).value


def modified_kato_norm(space: Space, V: RadialPotential, **kw) -> float:
    return sup_over_base_points(space, V, modified_weight(space), **kw).value


def kato_delta_norm(space: Space, V: RadialPotential, delta: float, **kw) -> float:
    return sup_over_base_points(space, V, delta_weight(space, delta), **kw).value


def l1_norm(space: Space, V: RadialPotential, nodes: int = DEFAULT_NODES) -> float:
    """int |V| dx = 4 pi int |V| j^2 dr."""
    return weighted_integral(space, V, 0.0, unit_weight(space), nodes)


# ---------------------------------------------------------------------------
# along-geodesic norm


def _arclength_for_distance(space: Space, b: float, d: float):
    """Arclength from the closest point at which a geodesic with impact
    parameter b reaches distance d from the center."""
    if d <= b:
        return None
    k = space.scale
    if space.kind == HYPERBOLIC:
        return float(np.arccosh(np.cosh(k * d) / np.cosh(k * b)) / k)
    if space.kind == FLAT:
        return float(np.sqrt(d * d - b * b))
    c = np.cos(k * d) / np.cos(k * b)
    return float(np.arccos(np.clip(c, -1, 1)) / k)


def geodesic_integral(space: Space, F: RadialPotential, b: float,
                      nodes: int = DEFAULT_NODES) -> float:
    """int F along the full geodesic with impact parameter b.

    Points at arclength s from the closest point lie at distance
    law_of_cosines(b, s, pi/2) from the center.
    """
    R = F.support if np.isfinite(F.support) else 60.0
    if b >= R:
        return 0.0
    S = _arclength_for_distance(space, b, R)
    edges = [0.0, S]
    for d_b in F.breakpoints:
        s = _arclength_for_distance(space, b, d_b)
        if s is not None and s < S:
            edges.append(s)

    def integrand(s):
        return np.abs(F(law_of_cosines(space, b, s, 0.5 * np.pi)))

    return 2.0 * composite_gl(integrand, edges, nodes)


def l1_gamma_norm(space: Space, F: RadialPotential, n_b: int = 41,
                  nodes: int = DEFAULT_NODES) -> SweepResult:
    """sup over impact parameters b of the line integral of |F|."""
    R = F.support if np.isfinite(F.support) else 60.0
    grid = np.linspace(0.0, R, n_b)
    vals = np.array([geodesic_integral(space, F, b, nodes) for b in grid])
    k = int(np.argmax(vals))
    best_b, best = float(grid[k]), float(vals[k])
    if 0 < k < n_b - 1:
        res = minimize_scalar(lambda b: -geodesic_integral(space, F, b, nodes),
                              bounds=(grid[k - 1], grid[k + 1]), method="bounded",
                              options={"xatol": 1e-9})
        if -res.fun > best:
            best_b, best = float(res.x), float(-res.fun)
    return SweepResult(best, best_b, True, False, R)


# ---------------------------------------------------------------------------
# report


@dataclass
class KatoReport:
    potential: str
    kato: float
    modified_kato: float
    kato_delta: float
    delta: float
    l1: float
    l1_gamma: float
    argmax_rho: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def kato_report(space: Space, V: RadialPotential, delta: float | None = None,
                nodes: int = DEFAULT_NODES) -> KatoReport:
    """All norms of V; a divergent norm is reported as inf with a diagnostic."""
    if space.kind != HYPERBOLIC:
        raise ValueError("kato_report needs kappa0 < 0")
    if delta is None:
        delta = 0.1 * space.alpha0
    diags = []
    out = {}
    argmax = {}
    for key, w in (("kato", kato_weight(space)), ("modified_kato", modified_weight(space)),
                   ("kato_delta", delta_weight(space, delta))):
        try:
            res = sup_over_base_points(space, V, w, nodes=nodes)
            out[key] = res.value
            argmax[key] = res.rho
            if res.diagnostic:
                diags.append(f"{key}: {res.diagnostic}")
        except DivergentIntegralError as exc:
            out[key] = float("inf")
            diags.append(f"{key}: {exc}")
    try:
        l1 = l1_norm(space, V, nodes)
    except DivergentIntegralError as exc:
        l1 = float("inf")
        diags.append(f"l1: {exc}")
    try:
        lg = l1_gamma_norm(space, V, nodes=nodes).value
    except DivergentIntegralError as exc:
        lg = float("inf")
        diags.append(f"l1_gamma: {exc}")
    return KatoReport(V.name, out["kato"], out["modified_kato"], out["kato_delta"],
                      float(delta), l1, lg, argmax, diags)
