"""Space-time kernels on H3, their convolution algebra, the perturbed-metric
parametrix with its error term, and the Born/error series.

A kernel is radial about the source: K(t)(x, x0) = k(t, d(x, x0)). It may
have three parts:

* a shell q(t) on d = t. The kernel is (q(t)/j(t)) times the surface
  measure of the geodesic sphere of radius t, so q = 1/(4 pi) is the free
  sine propagator and the slice mass is 4 pi q(t) j(t);
* an absolutely continuous part ac[i, k] on the grid t_i = i dt,
  r_k = k dt, supported in k <= i; the value at k = i is the limit from
  inside the light cone;
* a multiple of the identity delta(t) delta_{x0}.

Convolution

    [F * G](t)(x1, x0) = int_0^t int F(t - s)(x1, x) G(s)(x, x0) dx ds

reduces for radial factors to one-dimensional integrals through the change
of variables sin(theta) d theta = j(d) dd / (j(r) j(rho)). With
H_s(r) = int_0^r g_s(d) j(d) dd these are

    shell x shell: (2 pi / j(rho)) int q_F(t - s) q_G(s) ds,  s in [(t - rho)/2, (t + rho)/2]
    shell x ac:    (2 pi / j(rho)) int q_F(t - s) [H_s(t - s + rho) - H_s(|t - s - rho|)] ds
    ac x ac:       (2 pi / j(rho)) int ds int g_s(r) j(r) [H^F_{t-s}(r + rho) - H^F_{t-s}(|r - rho|)] dr

The first is evaluated by Gauss-Legendre in s, the others by the trapezoid
rule on the grid (second order; the integrands are continuous with kinks).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import factorial
from typing import Callable

import numpy as np

from .jacobi import ConjugatePointError, TransportPath, scalar_j
from .kato import RadialPotential, modified_weight, sup_over_base_points
from .manifold import HYPERBOLIC, Space

SHELL_NODES = 16


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


class GridError(ValueError):
    """Kernels on incompatible grids."""


class DivergenceError(ArithmeticError):
    """Series terms stopped decreasing."""


def _rho_over_j(space: Space, rho):
    rho = np.asarray(rho, dtype=float)
    safe = np.where(rho > 0, rho, 1.0)
    return np.where(rho > 0, safe / space.j(safe), 1.0)


@dataclass
class SpaceTimeKernel:
    space: Space
    dt: float
    n: int
    shell: Callable | None = None
    shell_breaks: tuple = ()
    ac: np.ndarray | None = None
    delta0: float = 0.0
    label: str = ""

    # grid ------------------------------------------------------------------
    @property
    def t(self):
        return np.arange(self.n + 1) * self.dt

    @property
    def r(self):
        return self.t

    def q(self, t):
        t = np.asarray(t, dtype=float)
        if self.shell is None:
            return np.zeros_like(t)
        return np.asarray(self.shell(t), dtype=float) * np.ones_like(t)

    def ac_grid(self):
        if self.ac is None:
            return np.zeros((self.n + 1, self.n + 1))
        return self.ac

    def shell_coeff(self, t):
        """Coefficient of the surface measure, q(t)/j(t)."""
        t = np.asarray(t, dtype=float)
        return self.q(t) / self.space.j(t)

    def compatible(self, other: "SpaceTimeKernel"):
        if self.space != other.space or self.n != other.n or abs(self.dt - other.dt) > 1e-15:
            raise GridError("kernels live on different grids")

    # algebra ---------------------------------------------------------------
    def __add__(self, other: "SpaceTimeKernel") -> "SpaceTimeKernel":
        self.compatible(other)
        if self.shell is None:
            shell = other.shell
        elif other.shell is None:
            shell = self.shell
        else:
            f, g = self.shell, other.shell
            shell = lambda t: f(t) + g(t)  # noqa: E731
        ac = None
        if self.ac is not None or other.ac is not None:
            ac = self.ac_grid() + other.ac_grid()
        return SpaceTimeKernel(self.space, self.dt, self.n, shell,
                               tuple(sorted(set(self.shell_breaks) | set(other.shell_breaks))),
                               ac, self.delta0 + other.delta0)

    def scaled(self, c: float) -> "SpaceTimeKernel":
        f = self.shell
        return replace(self, shell=None if f is None else (lambda t: c * f(t)),
                       ac=None if self.ac is None else c * self.ac, delta0=c * self.delta0)

    def __neg__(self):
        return self.scaled(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def time_weighted(self, w: Callable) -> "SpaceTimeKernel":
        """w(t) K(t). The identity part is kept only when w(0) is finite."""
        f = self.shell
        shell = None if f is None else (lambda t: w(np.asarray(t, dtype=float)) * f(t))
        ac = None if self.ac is None else w(self.t)[:, None] * self.ac
        d0 = self.delta0 * float(w(np.array(0.0))) if self.delta0 else 0.0
        return replace(self, shell=shell, ac=ac, delta0=d0)

    def potential_multiplied(self, V) -> "SpaceTimeKernel":
        """V(d(x, x0)) K(t)(x, x0) for V radial about the source."""
        f = self.shell
        shell = None if f is None else (lambda t: V(np.asarray(t, dtype=float)) * f(t))
        breaks = tuple(sorted(set(self.shell_breaks) | set(getattr(V, "breakpoints", ()))))
        ac = None if self.ac is None else V(self.r)[None, :] * self.ac
        return replace(self, shell=shell, shell_breaks=breaks, ac=ac, delta0=0.0)

    # diagnostics -----------------------------------------------------------
    def slice_mass(self, i: int, signed: bool = False) -> float:
        """int |K(t_i)(x, x0)| dx over x (shell plus ac part)."""
        t = self.t[i]
        q = float(self.q(t))
        shell = 4.0 * np.pi * (q if signed else abs(q)) * float(self.space.j(t))
        if self.ac is None or i == 0:
            return shell
        g = self.ac[i, : i + 1] if signed else np.abs(self.ac[i, : i + 1])
        jr = self.space.j(self.r[: i + 1])
        return shell + 4.0 * np.pi * np.trapezoid(g * jr * jr, dx=self.dt)

    def masses(self, signed: bool = False):
        return np.array([self.slice_mass(i, signed) for i in range(self.n + 1)])

    def sup_mass(self) -> float:
        """sup over t of the L1_x mass (the L^inf_t L^1_x norm)."""
        return float(self.masses().max()) + abs(self.delta0)

    def value(self, i: int, k: int) -> float:
        return float(self.ac_grid()[i, k])

    def dump_rows(self):
        """Rows (t, r, shell_coeff, ac_value) for k <= i."""
        ac = self.ac_grid()
        rows = []
        for i, t in enumerate(self.t):
            c = float(self.shell_coeff(t)) if (self.shell is not None and t > 0) else 0.0
            for k in range(i + 1):
                rows.append((t, self.r[k], c if k == i else 0.0, ac[i, k]))
        return rows


def identity_kernel(space: Space, dt: float, n: int) -> SpaceTimeKernel:
    return SpaceTimeKernel(space, dt, n, delta0=1.0, label="identity")


def free_sine_kernel(space: Space, dt: float, n: int) -> SpaceTimeKernel:
    """The free sine propagator: shell coefficient 1/(4 pi j(t)), q = 1/(4 pi)."""
    return SpaceTimeKernel(space, dt, n, lambda t: np.full_like(np.asarray(t, dtype=float), 1 / (4 * np.pi)),
                           label="S0")


# ---------------------------------------------------------------------------
# convolution


def _cumulative(space: Space, ac: np.ndarray, dt: float):
    """H[m, k] = int_0^{r_k} g_m(d) j(d) dd, constant beyond the front k = m."""
    n1 = ac.shape[0]
    jr = space.j(np.arange(n1) * dt)
    H = np.zeros_like(ac)
    g = ac * jr[None, :]
    H[:, 1:] = np.cumsum(0.5 * dt * (g[:, 1:] + g[:, :-1]), axis=1)
    for m in range(n1):
        H[m, m + 1:] = H[m, m]
    return H


def _trap_weights(i: int, dt: float):
    w = np.full(i + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    if i == 0:
        w[:] = 0.0
    return w


def shell_shell(space: Space, qF, qG, t, rho, breaks_F=(), breaks_G=(), nodes: int = SHELL_NODES):
    """(2 pi / j(rho)) int_{(t-rho)/2}^{(t+rho)/2} qF(t - s) qG(s) ds for rho <= t."""
    x, w = gauss_legendre(nodes)
    t = float(t)
    rho = float(rho)
    if rho > t:
        return 0.0
    if rho == 0.0:
        return 2.0 * np.pi * float(qF(np.array(t / 2))) * float(qG(np.array(t / 2)))
    lo, hi = 0.5 * (t - rho), 0.5 * (t + rho)
    edges = [lo, hi, *[b for b in breaks_G if lo < b < hi], *[t - b for b in breaks_F if lo < t - b < hi]]
    edges = np.unique(edges)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        s = 0.5 * (b - a) * x + 0.5 * (a + b)
        total += 0.5 * (b - a) * np.dot(w, qF(t - s) * qG(s))
    return 2.0 * np.pi * total / float(space.j(rho))


def _shell_shell_grid(F: SpaceTimeKernel, G: SpaceTimeKernel, nodes: int = SHELL_NODES):
    """shell_shell on every grid node (t_i, r_k), k <= i, in one vectorized pass."""
    n, dt, sp = F.n, F.dt, F.space
    I, K = np.tril_indices(n + 1)
    keep = I > 0
    I, K = I[keep], K[keep]
    t, rho = I * dt, K * dt
    lo, hi = 0.5 * (t - rho), 0.5 * (t + rho)
    cand = [lo, hi]
    cand += [np.clip(b, lo, hi) for b in G.shell_breaks]
    cand += [np.clip(t - b, lo, hi) for b in F.shell_breaks]
    edges = np.sort(np.stack(cand), axis=0)
    x, w = gauss_legendre(nodes)
    a, b = edges[:-1, :, None], edges[1:, :, None]
    s = 0.5 * (b - a) * x + 0.5 * (a + b)
    vals = F.q(t[None, :, None] - s) * G.q(s)
    integral = np.sum(0.5 * (b - a)[..., 0] * np.sum(w * vals, axis=-1), axis=0)
    out = np.zeros((n + 1, n + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        res = 2.0 * np.pi * integral / sp.j(rho)
    zero = K == 0
    res[zero] = 2.0 * np.pi * F.q(t[zero] / 2) * G.q(t[zero] / 2)
    out[I, K] = res
    return out


def _shell_ac_grid(space, q_shell, acG, dt, n):
    """shell (coefficient function q_shell) convolved with the ac kernel acG."""
    H = _cumulative(space, acG, dt)
    jr = space.j(np.arange(n + 1) * dt)
    row_of_k = np.arange(n + 1)
    out = np.zeros((n + 1, n + 1))
    for i in range(1, n + 1):
        m = np.arange(i + 1)[:, None]          # s = t_m
        tau = i - m                            # t - s
        k = row_of_k[None, : i + 1]
        up = np.minimum(tau + k, m)
        dn = np.minimum(np.abs(tau - k), m)
        mm = np.broadcast_to(m, up.shape)
        diff = H[mm, up] - H[mm, dn]
        wq = _trap_weights(i, dt)[:, None] * q_shell(tau * dt)
        val = np.sum(wq * diff, axis=0)
        rk = k[0] * dt
        with np.errstate(divide="ignore", invalid="ignore"):
            res = 2.0 * np.pi * val / space.j(rk)
        # rho = 0: limit 4 pi q(tau) g_s(tau) j(tau)
        m0 = np.arange(i + 1)
        t0 = i - m0
        inside = t0 <= m0
        g = np.where(inside, acG[m0, np.minimum(t0, m0)], 0.0)
        res[0] = 4.0 * np.pi * np.sum(_trap_weights(i, dt) * q_shell(t0 * dt) * g * space.j(t0 * dt))
        out[i, : i + 1] = res
    return out


def _ac_ac_grid(space, acF, acG, dt, n):
    HF = _cumulative(space, acF, dt)
    jr = space.j(np.arange(n + 1) * dt)
    out = np.zeros((n + 1, n + 1))
    for i in range(1, n + 1):
        wt = _trap_weights(i, dt)
        acc = np.zeros(i + 1)
        acc0 = 0.0
        for m in range(i + 1):
            if wt[m] == 0.0 or m == 0:
                continue
            tau = i - m
            if tau == 0:
                continue
            kk = np.arange(m + 1)                   # inner radius index, r <= s
            wr = _trap_weights(m, dt)
            g = acG[m, : m + 1] * jr[: m + 1] * wr   # g_s(r) j(r) dr
            k = np.arange(i + 1)[None, :]
            up = np.minimum(kk[:, None] + k, tau)
            dn = np.minimum(np.abs(kk[:, None] - k), tau)
            diff = HF[tau, up] - HF[tau, dn]
            acc += wt[m] * (g @ diff)
            lim = min(m, tau)
            fvals = np.where(kk <= tau, acF[tau, np.minimum(kk, tau)], 0.0)
            acc0 += wt[m] * 4.0 * np.pi * np.sum(g * fvals * jr[: m + 1] * (kk <= lim))
        with np.errstate(divide="ignore", invalid="ignore"):
            res = 2.0 * np.pi * acc / jr[: i + 1]
        res[0] = acc0
        out[i, : i + 1] = res
    return out


def convolve(F: SpaceTimeKernel, G: SpaceTimeKernel) -> SpaceTimeKernel:
    """F * G on the common grid."""
    F.compatible(G)
    sp, dt, n = F.space, F.dt, F.n
    ac = np.zeros((n + 1, n + 1))
    shell_parts = []
    if F.delta0:
        ac += F.delta0 * G.ac_grid()
        if G.shell is not None:
            shell_parts.append((F.delta0, G.shell))
    if G.delta0:
        ac += G.delta0 * F.ac_grid()
        if F.shell is not None:
            shell_parts.append((G.delta0, F.shell))
    if F.shell is not None and G.shell is not None:
        ac += _shell_shell_grid(F, G)
    if F.shell is not None and G.ac is not None:
        ac += _shell_ac_grid(sp, F.q, G.ac, dt, n)
    if F.ac is not None and G.shell is not None:
        ac += _shell_ac_grid(sp, G.q, F.ac, dt, n)
    if F.ac is not None and G.ac is not None:
        ac += _ac_ac_grid(sp, F.ac, G.ac, dt, n)
    shell = None
    if shell_parts:
        parts = list(shell_parts)
        shell = lambda t: sum(c * f(t) for c, f in parts)  # noqa: E731
    breaks = tuple(sorted(set(F.shell_breaks) | set(G.shell_breaks)))
    return SpaceTimeKernel(sp, dt, n, shell, breaks, ac, F.delta0 * G.delta0,
                           f"({F.label}*{G.label})")


# exact route for shell kernels ------------------------------------------


@dataclass
class ExactKernel:
    """ac part given as a function ac(t, rho); used to test the algebra
    without grid error. Produced by shell x shell and shell x exact."""

    space: Space
    fn: Callable
    kinks: Callable   # t -> radii where the profile has a kink or jump

    def __call__(self, t, rho):
        return self.fn(t, rho)


def exact_shell_shell(space: Space, qF, qG, breaks_F=(), breaks_G=(), nodes: int = 24):
    def fn(t, rho):
        return shell_shell(space, qF, qG, t, rho, breaks_F, breaks_G, nodes)

    return ExactKernel(space, fn, lambda t: (t,))


def exact_shell_ac(space: Space, qF, G: ExactKernel, t: float, rho: float,
                   nodes: int = 24) -> float:
    """Shell qF convolved with the exact ac kernel G, by nested Gauss rules."""
    x, w = gauss_legendre(nodes)

    def H(s, r):
        r = min(r, s)
        if r <= 0:
            return 0.0
        d = 0.5 * r * x + 0.5 * r
        vals = np.array([G(s, dd) for dd in d])
        return 0.5 * r * np.dot(w, vals * space.j(d))

    def integrand(s):
        tau = t - s
        return float(qF(np.array(tau))) * (H(s, tau + rho) - H(s, abs(tau - rho)))

    edges = np.unique([0.0, t, 0.5 * (t + rho), 0.5 * (t - rho), t - rho])
    edges = edges[(edges >= 0) & (edges <= t)]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        s = 0.5 * (b - a) * x + 0.5 * (a + b)
        total += 0.5 * (b - a) * sum(wi * integrand(si) for wi, si in zip(w, s))
    if rho == 0:
        raise ValueError("exact_shell_ac needs rho > 0")
    return 2.0 * np.pi * total / float(space.j(rho))


# ---------------------------------------------------------------------------
# norms


def time_profile(K: SpaceTimeKernel, weight: Callable | None = None):
    """P(r_k) = w(r)|c(r)| + int w(t)|ac(t, r_k)| dt on the r grid (r > 0).

    The shell part is reported separately as a function since it is
    singular-free only after multiplication by j^2.
    """
    w = (lambda t: np.ones_like(np.asarray(t, dtype=float))) if weight is None else weight
    n, dt = K.n, K.dt
    P = np.zeros(n + 1)
    if K.ac is not None:
        A = np.abs(K.ac) * w(K.t)[:, None]
        for k in range(n + 1):
            col = A[k:, k]
            if col.size > 1:
                P[k] = np.trapezoid(col, dx=dt)
    return P


@dataclass
class UNorms:
    u_l1: float
    u_l1_linf: float
    u_l1_ktilde: float
    u_ktilde_upper: float
    u_ktilde_linf_upper: float
    diagnostics: list = field(default_factory=list)


def _shell_profile(K, w):
    def f(r):
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, w(safe) * np.abs(K.q(safe)) / K.space.j(safe), 0.0)
    return f


def _profile_potential(K: SpaceTimeKernel, weight: Callable, include_shell: bool = True):
    P = time_profile(K, weight)
    r = K.r
    shell = _shell_profile(K, weight) if (include_shell and K.shell is not None) else None
    rmax = r[-1]

    def fn(d):
        d = np.asarray(d, dtype=float)
        v = np.interp(d, r, P, right=0.0)
        if shell is not None:
            v = v + np.where(d <= rmax, shell(d), 0.0)
        return np.where(d <= rmax, v, 0.0)

    return RadialPotential(fn, "profile", float(rmax), (float(rmax),))


def weighted_u_norms(K: SpaceTimeKernel, weight: Callable | None = None,
                     ktilde: bool = True, n_rho: int = 21) -> UNorms:
    """U-norms of w(t) K for a kernel radial about the source.

    u_l1: int P_w dx (exact for translation-invariant positive reductions);
    u_l1_linf: sup_r P_w(r);
    u_l1_ktilde: modified Kato norm of P_w;
    u_ktilde_upper: U(K~) majorant, equal to u_l1;
    u_ktilde_linf_upper: U(K~, L^inf) majorant sup_r P_w(r) min(1, r).
    """
    w = (lambda t: np.ones_like(np.asarray(t, dtype=float))) if weight is None else weight
    sp, dt, n = K.space, K.dt, K.n
    r = K.r
    jr = sp.j(r)
    P = time_profile(K, w)
    diags = []
    u_l1 = 4.0 * np.pi * np.trapezoid(P * jr * jr, dx=dt)
    if K.shell is not None:
        x, wq = gauss_legendre(32)
        T = K.t[-1]
        edges = np.unique([0.0, T, *[b for b in K.shell_breaks if 0 < b < T]])
        for a, b in zip(edges[:-1], edges[1:]):
            s = 0.5 * (b - a) * x + 0.5 * (a + b)
            u_l1 += 4.0 * np.pi * 0.5 * (b - a) * np.dot(wq, w(s) * np.abs(K.q(s)) * sp.j(s))
    u_l1 += abs(K.delta0) * float(w(np.array(0.0))) if K.delta0 else 0.0
    Pfull = P[1:] + (_shell_profile(K, w)(r[1:]) if K.shell is not None else 0.0)
    sup_p = float(np.max(Pfull)) if Pfull.size else 0.0
    sup_min = float(np.max(Pfull * np.minimum(1.0, r[1:]))) if Pfull.size else 0.0
    if K.delta0:
        sup_p = sup_min = float("inf")
        diags.append("identity part: L^inf-type norms infinite")
    kt = float("nan")
    if ktilde and sp.kind == HYPERBOLIC:
        pot = _profile_potential(K, w)
        kt = sup_over_base_points(sp, pot, modified_weight(sp), n_rho=n_rho).value
    return UNorms(float(u_l1), sup_p, kt, float(u_l1), sup_min, diags)


# ---------------------------------------------------------------------------
# perturbed parametrix and error term


def perturbed_parametrix(path: TransportPath, dt: float, n: int) -> SpaceTimeKernel:
    """S0 = (4 pi sqrt(a))^{-1} delta_{d = t}, i.e. q(t) = j(t)/(4 pi sqrt(a(t)))."""
    space = _space_of(path.kappa0)
    if (n * dt) > path.r_max + 1e-12:
        raise GridError("transport path shorter than the time grid")

    def q(t):
        t = np.asarray(t, dtype=float)
        safe = np.where(t > 0, t, 1.0)
        U, _ = path.normalized(safe)
        detU = U[..., 0, 0] * U[..., 1, 1] - U[..., 0, 1] * U[..., 1, 0]
        if np.any(detU <= 0):
            raise ConjugatePointError("det T <= 0 on the time grid")
        return np.where(t > 0, 1.0 / (4.0 * np.pi * np.sqrt(detU)), 1.0 / (4.0 * np.pi))

    return SpaceTimeKernel(space, dt, n, q, tuple(path.pert.breakpoints), label="S0(a)")


def slice_mass_ratio(path: TransportPath, t):
    """Slice mass of the parametrix over j(t): 4 pi j^2 (4 pi sqrt a)^{-1} / j."""
    U, _ = path.normalized(np.asarray(t, dtype=float))
    detU = U[..., 0, 0] * U[..., 1, 1] - U[..., 0, 1] * U[..., 1, 0]
    return 1.0 / np.sqrt(detU)


def _space_of(kappa0):
    if kappa0 < 0:
        return Space.hyperbolic(float(np.sqrt(-kappa0)))
    if kappa0 > 0:
        return Space.sphere(kappa0)
    return Space.flat()


@dataclass
class ErrorField:
    r: np.ndarray
    values: np.ndarray
    a: np.ndarray
    kappa0: float

    def scaled_sup(self) -> float:
        """sup_r |Error(r)| j(r)."""
        return float(np.max(np.abs(self.values) * np.abs(scalar_j(self.kappa0, self.r))))


def error_values(path: TransportPath, r):
    """Error = Delta f - kappa0 f for f = a^{-1/2}, a = det T.

    With U = T/j, l = log det U and c = j'/j one has
    Error = a^{-1/2} (-l''/2 - c l' - l'^2/4), and l', l'' follow from
    U' and U'' = -A1 U - 2 c U' without numerical differentiation.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("Error is evaluated for r > 0")
    j, jp = scalar_j(path.kappa0, r, with_derivative=True)
    c = jp / j
    U, dU = path.normalized(r)
    d2U = -path.pert(r) @ U - 2.0 * c[..., None, None] * dU
    Ui = np.linalg.inv(U)
    X = Ui @ dU
    l1 = np.trace(X, axis1=-2, axis2=-1)
    l2 = np.trace(Ui @ d2U, axis1=-2, axis2=-1) - np.trace(X @ X, axis1=-2, axis2=-1)
    detU = U[..., 0, 0] * U[..., 1, 1] - U[..., 0, 1] * U[..., 1, 0]
    if np.any(detU <= 0):
        raise ConjugatePointError("det T <= 0")
    a_inv_sqrt = 1.0 / (np.abs(j) * np.sqrt(detU))
    return a_inv_sqrt * (-0.5 * l2 - c * l1 - 0.25 * l1 * l1)


def error_values_fd(path: TransportPath, r, h: float = 1e-2):
    """Error from f = a^{-1/2}: f'' by a fourth-order stencil, a'/a exact."""
    r = np.asarray(r, dtype=float)

    def f(x):
        return path.area(x)[0] ** -0.5

    f2 = (-f(r + 2 * h) + 16 * f(r + h) - 30 * f(r) + 16 * f(r - h) - f(r - 2 * h)) / (12 * h * h)
    a, da, _ = path.area(r)
    fr = a ** -0.5
    df = -0.5 * da / a * fr
    return f2 + da / a * df - path.kappa0 * fr


def error_term(path: TransportPath, r) -> ErrorField:
    r = np.asarray(r, dtype=float)
    return ErrorField(r, error_values(path, r), path.area(r)[0], path.kappa0)


def error_l1(path: TransportPath, r_max: float | None = None, nodes: int = 48,
             panel: float = 0.25) -> float:
    """||Error||_{L1} = 4 pi int |Error| a dr over the perturbed volume a dr d omega."""
    r_max = path.r_max if r_max is None else r_max
    edges = [0.0, r_max, *[b for b in path.pert.breakpoints if 0 < b < r_max]]
    x, w = gauss_legendre(nodes)
    total = 0.0
    edges = np.unique(edges)
    for a0, b0 in zip(edges[:-1], edges[1:]):
        m = max(1, int(np.ceil((b0 - a0) / panel)))
        e = np.linspace(a0, b0, m + 1)
        for a, b in zip(e[:-1], e[1:]):
            s = 0.5 * (b - a) * x + 0.5 * (a + b)
            total += 0.5 * (b - a) * np.dot(w, np.abs(error_values(path, s)) * path.area(s)[0])
    return 4.0 * np.pi * total


def error_kernel(path: TransportPath, dt: float, n: int) -> SpaceTimeKernel:
    """E(t) = Error(t)/(4 pi) on the shell d = t (the defect of S0, sign
    chosen so that S = S0 + S0*E + S0*E*E + ...)."""
    space = _space_of(path.kappa0)

    def q(t):
        t = np.asarray(t, dtype=float)
        safe = np.where(t > 0, t, 1.0)
        val = error_values(path, safe) * space.j(safe) / (4.0 * np.pi)
        return np.where(t > 0, val, _error_q0(path))

    return SpaceTimeKernel(space, dt, n, q, tuple(path.pert.breakpoints), label="E")


def _error_q0(path):
    # Error j -> value at r -> 0 by evaluation at a small radius
    r = np.array([1e-6])
    return float(error_values(path, r)[0] * scalar_j(path.kappa0, r)[0] / (4.0 * np.pi))


# ---------------------------------------------------------------------------
# series


@dataclass
class SeriesResult:
    total: SpaceTimeKernel
    terms: list
    norms: list
    linf_norms: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    converged: bool = True


def iterate_error_series(S0: SpaceTimeKernel, E: SpaceTimeKernel, n_max: int = 12,
                         tol: float = 1e-14) -> SeriesResult:
    """Partial sums of S0 + S0*E + S0*E*E + ...

    Term norms: U(L1) (space-time mass on the window) and sup_t L1_x.
    """
    terms = [S0]
    norms = [weighted_u_norms(S0, ktilde=False).u_l1]
    linf = [S0.sup_mass()]
    total = S0
    term = S0
    for _ in range(n_max):
        term = convolve(term, E)
        nm = weighted_u_norms(term, ktilde=False).u_l1
        terms.append(term)
        norms.append(nm)
        linf.append(term.sup_mass())
        total = total + term
        if nm <= tol * norms[0]:
            break
        if len(norms) > 3 and nm > norms[-2] and norms[-2] > norms[-3]:
            raise DivergenceError("error-series terms are growing")
    ratios = [norms[k + 1] / norms[k] for k in range(len(norms) - 1) if norms[k] > 0]
    return SeriesResult(total, terms, norms, linf, ratios)


def factorial_constant(norms, eps: float, T: float) -> float:
    """Smallest C with norms[n] <= norms[0] (C eps T)^n / n! for all n >= 1."""
    out = 0.0
    for n in range(1, len(norms)):
        if norms[n] <= 0:
            continue
        out = max(out, (factorial(n) * norms[n] / norms[0]) ** (1.0 / n) / (eps * T))
    return out


def algebraic_residual(S0: SpaceTimeKernel, E: SpaceTimeKernel, S: SpaceTimeKernel) -> float:
    """sup_t L1 mass of S0 + S*E - S, the defect of S in S = S0 + S*E."""
    return (S0 + convolve(S, E) - S).sup_mass()


def born_series_potential(space: Space, V, dt: float, n: int, n_max: int = 12,
                          tol: float = 1e-13, S0: SpaceTimeKernel | None = None) -> SeriesResult:
    """S_V = sum_n (-1)^n S0 * (V S0)^{*n}, via K_{n+1} = -S0 * (V K_n).

    V is radial about the source. Term norms: U(L1) (space-time mass on the
    window) and sup_t L1_x. Raises DivergenceError when the U(L1) ratio of
    successive terms reaches 1.
    """
    if S0 is None:
        S0 = free_sine_kernel(space, dt, n)
    terms = [S0]
    norms = [weighted_u_norms(S0, ktilde=False).u_l1]
    linf = [S0.sup_mass()]
    total = S0
    K = S0
    for _ in range(n_max):
        K = -convolve(S0, K.potential_multiplied(V))
        nm = weighted_u_norms(K, ktilde=False).u_l1
        terms.append(K)
        norms.append(nm)
        linf.append(K.sup_mass())
        total = total + K
        if len(norms) > 2 and norms[-1] >= norms[-2]:
            raise DivergenceError("Born-series terms stopped decreasing; V too large")
        if nm <= tol * norms[1]:
            break
    ratios = [norms[k + 1] / norms[k] for k in range(len(norms) - 1) if norms[k] > 0]
    return SeriesResult(total, terms, norms, linf, ratios)


# ---------------------------------------------------------------------------
# weighted product rules


def _profile_weight(K: SpaceTimeKernel, weight: Callable, n_fine: int = 4001):
    """The time-integrated profile of w(t) K used as a spatial weight."""
    from .kato import Weight

    sp = K.space
    P = time_profile(K, weight)
    rf = np.linspace(0.0, K.r[-1], n_fine)
    Pg = np.interp(rf, K.r, P)
    jP = Pg * sp.j(rf)
    Pf = Pg
    if K.shell is not None:
        Pf = Pg + _shell_profile(K, weight)(rf)
        # j times the shell part stays finite at r = 0
        jP = jP + np.where(rf > 0, weight(rf) * np.abs(K.q(rf)), 0.0)
    G = np.concatenate([[0.0], np.cumsum(0.5 * (jP[1:] + jP[:-1]) * np.diff(rf))])

    def W(a, b):
        return np.interp(b, rf, G) - np.interp(a, rf, G)

    return Weight("profile", lambda d: np.interp(d, rf, Pf, right=0.0), W)


def ktilde_linf_lower(K: SpaceTimeKernel, weight: Callable,
                      radii=(0.05, 0.1, 0.2, 0.5, 1.0), n_rho: int = 21) -> float:
    """Lower bound for the U(K~, L^inf) norm of w(t) K, from ball potentials:
    max over eta of sup_x (P * chi_{B(eta)})(x) / ||chi_{B(eta)}||_{K~}."""
    from .kato import indicator_potential, modified_kato_norm, weighted_integral

    sp = K.space
    pw = _profile_weight(K, weight)
    best = 0.0
    for eta in radii:
        chi = indicator_potential(1.0, eta)
        norm = modified_kato_norm(sp, chi, n_rho=n_rho)
        grid = np.linspace(0.0, K.r[-1] + eta, n_rho)
        val = max(weighted_integral(sp, chi, rho, pw) for rho in grid)
        best = max(best, val / norm)
    return best


def comp_inequalities(T1: SpaceTimeKernel, T2: SpaceTimeKernel, w: Callable, wp: Callable,
                      n_rho: int = 21):
    """The weighted product rules for T1, T2 supported in t >= 0, with weight
    pair (w, w') = (j, j') or (j_delta, j_delta'). Returns (name, lhs, rhs).

    U(K~) norms of these radial reductions equal the U(L1) norms; the
    U(K~, L^inf) norm enters through the majorant sup P min(1, r) on the
    right and through the ball-potential lower bound on the left. The
    U(L1, K~*) rule is not evaluated (dual norm).
    """
    T12 = convolve(T1, T2)
    n = lambda K, wt: weighted_u_norms(K, wt, n_rho=n_rho)  # noqa: E731
    a_w, a_wp = n(T1, w), n(T1, wp)
    b_w, b_wp = n(T2, w), n(T2, wp)
    c_w, c_wp = n(T12, w), n(T12, wp)
    out = [
        ("comp1", c_w.u_l1_ktilde,
         a_w.u_l1_ktilde * b_wp.u_l1 + a_wp.u_ktilde_upper * b_w.u_l1_ktilde),
        ("comp2", c_w.u_l1_linf,
         a_w.u_l1_linf * b_wp.u_l1 + a_wp.u_ktilde_linf_upper * b_w.u_l1_ktilde),
        ("comp3_l1", c_wp.u_l1, 2.0 * a_wp.u_l1 * b_wp.u_l1),
        ("comp3_ktilde", c_wp.u_ktilde_upper, 2.0 * a_wp.u_ktilde_upper * b_wp.u_ktilde_upper),
        ("comp4_ktilde_linf", ktilde_linf_lower(T12, wp, n_rho=n_rho),
         2.0 * a_wp.u_ktilde_linf_upper * b_wp.u_ktilde_upper),
    ]
    return out


def random_kernel(space: Space, rng, dt: float, n: int, shell: bool = True,
                  ac: bool = True) -> SpaceTimeKernel:
    """Smooth random kernel supported in t >= 0 (for property tests)."""
    q = None
    if shell:
        c = rng.normal(size=4)
        q = lambda t: c[0] + c[1] * np.cos(2 * t + c[3]) + c[2] * t  # noqa: E731
    A = None
    if ac:
        T, R = np.meshgrid(np.arange(n + 1) * dt, np.arange(n + 1) * dt, indexing="ij")
        k = rng.normal(size=5)
        A = (k[0] + k[1] * T + k[2] * R + k[3] * np.sin(3 * T * R + k[4])) * (R <= T + 1e-12)
    return SpaceTimeKernel(space, dt, n, q, (), A, label="random")
