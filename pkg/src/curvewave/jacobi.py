"""Scalar and matrix Jacobi equations along a geodesic.

The transport matrix T(r) solves

    T'' + (kappa0 I + A1(r)) T = 0,   T(0) = 0,  T'(0) = I,

where A1 is a symmetric 2x2 perturbation of the curvature matrix. For
A1 = 0 the solution is j(r) I with j the scalar Jacobi solution. The
integrator works with the deviation D = T - j I, which vanishes to third
order at r = 0 and carries the whole effect of the perturbation, so small
deviations keep full relative accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad, quad_vec, solve_ivp
from scipy.interpolate import CubicSpline


class IntegrationError(RuntimeError):
    """The transport ODE could not be integrated to the requested accuracy."""


class ConjugatePointError(RuntimeError):
    """det T reached zero along the geodesic."""


class ConvergenceError(RuntimeError):
    """Perturbation outside the contraction regime."""


# ---------------------------------------------------------------------------
# scalar solutions


def scalar_j(kappa0: float, r, with_derivative: bool = False):
    """j(r) = sin(r sqrt k)/sqrt k, sinh(r sqrt -k)/sqrt -k, or r.

    With with_derivative=True returns the pair (j, j').
    """
    r = np.asarray(r, dtype=float)
    if kappa0 > 0:
        k = np.sqrt(kappa0)
        j, jp = np.sin(k * r) / k, np.cos(k * r)
    elif kappa0 < 0:
        k = np.sqrt(-kappa0)
        j, jp = np.sinh(k * r) / k, np.cosh(k * r)
    else:
        j, jp = r.copy(), np.ones_like(r)
    if with_derivative:
        return j, jp
    return j


def scalar_j_prime(kappa0: float, r):
    return scalar_j(kappa0, r, with_derivative=True)[1]


def _check_delta(alpha0, delta):
    if not 0.0 < delta < alpha0:
        raise ValueError(f"delta must lie in (0, alpha0), got {delta} for alpha0={alpha0}")


def scalar_j_delta(alpha0: float, delta: float, r):
    """j_delta(r) = sinh(r (alpha0 - delta)) / (alpha0 - delta)."""
    _check_delta(alpha0, delta)
    b = alpha0 - delta
    return np.sinh(b * np.asarray(r, dtype=float)) / b


def scalar_j_delta_prime(alpha0: float, delta: float, r):
    _check_delta(alpha0, delta)
    return np.cosh((alpha0 - delta) * np.asarray(r, dtype=float))


# ---------------------------------------------------------------------------
# perturbations

IDENTITY = np.eye(2)
TRACEFREE = np.diag([1.0, -1.0])


@dataclass(frozen=True)
class Perturbation:
    """Radial symmetric 2x2 perturbation A1(r) of the Jacobi curvature matrix.

    eps is a bound for the L1 norm of |A1| along the geodesic from the base
    point; support is a radius beyond which A1 is zero or negligible.
    """

    fn: Callable
    eps: float
    name: str = "custom"
    support: float = np.inf
    breakpoints: tuple = ()
    profile: Callable | None = None
    matrix: np.ndarray | None = field(default=None, compare=False)

    def __call__(self, r):
        return self.fn(np.asarray(r, dtype=float))

    def norm(self, r):
        """Operator 2-norm |A1(r)|."""
        a = self(r)
        return np.linalg.norm(a, ord=2, axis=(-2, -1))

    def geodesic_l1(self) -> float:
        """One-sided L1 norm of |A1| along the geodesic from the base point."""
        upper = self.support if np.isfinite(self.support) else 60.0
        pts = [p for p in self.breakpoints if 0 < p < upper]
        val, _ = quad(lambda s: float(self.norm(s)), 0.0, upper, points=pts or None, limit=400)
        return val

    def volume_l1(self, kappa0: float) -> float:
        """L1 norm of |A1| over the manifold (radial about the base point)."""
        upper = self.support if np.isfinite(self.support) else 60.0
        pts = [p for p in self.breakpoints if 0 < p < upper]
        val, _ = quad(
            lambda s: float(self.norm(s)) * float(scalar_j(kappa0, s)) ** 2,
            0.0, upper, points=pts or None, limit=400,
        )
        return 4.0 * np.pi * val

    def is_zero(self) -> bool:
        return self.eps == 0.0


def _gaussian(r):
    return np.exp(-4.0 * (r - 1.0) ** 2)


def _exponential(r):
    return np.exp(-2.0 * r)


def _compact(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    x = r[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x * x))
    return out


# profile, support radius, breakpoints. Every profile has sup = 1 and
# integral over [0, inf) at most 1, so the amplitude bounds the L1 norm.
PROFILES = {
    "gaussian": (_gaussian, 8.0, ()),
    "exponential": (_exponential, 40.0, ()),
    "compact": (_compact, 1.0, (1.0,)),
}
MATRICES = {"identity": IDENTITY, "tracefree": TRACEFREE}


def builtin_perturbation(profile: str, eps: float, matrix: str = "identity") -> Perturbation:
    """A1(r) = eps * phi(r) * M for a named profile phi and matrix M."""
    if profile not in PROFILES:
        raise KeyError(f"unknown perturbation profile {profile!r}")
    if matrix not in MATRICES:
        raise KeyError(f"unknown perturbation matrix {matrix!r}")
    phi, support, bps = PROFILES[profile]
    m = MATRICES[matrix]

    def fn(r):
        return eps * np.asarray(phi(r))[..., None, None] * m

    return Perturbation(fn, float(eps), f"{profile}/{matrix}", support, bps, phi, m)


def zero_perturbation() -> Perturbation:
    return Perturbation(lambda r: np.zeros(np.shape(r) + (2, 2)), 0.0, "zero", 0.0)


def load_perturbation(path) -> Perturbation:
    """Read a whitespace or comma separated table with columns r, A11, A12, A22.

    Lines starting with '#' are ignored. Values are interpolated with cubic
    splines and set to zero beyond the last tabulated radius.
    """
    with open(path) as fh:
        rows = [
            [float(v) for v in line.replace(",", " ").split()]
            for line in fh
            if line.strip() and not line.lstrip().startswith("#")
        ]
    data = np.array(rows)
    if data.ndim != 2 or data.shape[1] != 4:
        raise ValueError("perturbation table needs four columns r, A11, A12, A22")
    r = data[:, 0]
    if np.any(np.diff(r) <= 0) or r[0] < 0:
        raise ValueError("perturbation radii must be increasing and non-negative")
    splines = [CubicSpline(r, data[:, k]) for k in (1, 2, 3)]
    rmax = r[-1]

    def fn(s):
        s = np.asarray(s, dtype=float)
        inside = (s <= rmax)
        a11, a12, a22 = (np.where(inside, sp(np.clip(s, r[0], rmax)), 0.0) for sp in splines)
        return np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)

    pert = Perturbation(fn, 0.0, f"table:{path}", float(rmax), (float(rmax),))
    return Perturbation(fn, pert.geodesic_l1(), pert.name, pert.support, pert.breakpoints)


# ---------------------------------------------------------------------------
# transport


@dataclass(frozen=True)
class TransportState:
    r: float
    T: np.ndarray
    dT: np.ndarray


@dataclass(frozen=True)
class TransportPath:
    """Dense solution of the transport equation on [0, r_max]."""

    kappa0: float
    pert: Perturbation
    r_max: float
    tol: float
    _sol: object = field(repr=False, default=None)

    def _dev(self, r):
        r = np.asarray(r, dtype=float)
        if self._sol is None:
            z = np.zeros(r.shape + (2, 2))
            return z, z.copy()
        y = self._sol(np.clip(r, 0.0, self.r_max).ravel())
        D = y[:4].T.reshape(r.shape + (2, 2))
        dD = y[4:].T.reshape(r.shape + (2, 2))
        return D, dD

    def deviation(self, r):
        """(T - j I, T' - j' I)."""
        return self._dev(r)

    def T(self, r):
        j = scalar_j(self.kappa0, r)
        return self._dev(r)[0] + j[..., None, None] * IDENTITY

    def dT(self, r):
        jp = scalar_j_prime(self.kappa0, r)
        return self._dev(r)[1] + jp[..., None, None] * IDENTITY

    def state(self, r: float) -> TransportState:
        return TransportState(float(r), self.T(r), self.dT(r))

    def wronskian(self, r):
        """T'^T T - T^T T', identically zero for symmetric A1."""
        T, dT = self.T(r), self.dT(r)
        return np.swapaxes(dT, -1, -2) @ T - np.swapaxes(T, -1, -2) @ dT

    def normalized(self, r):
        """U = T/j and U' for r > 0, computed without cancellation."""
        r = np.asarray(r, dtype=float)
        j, jp = scalar_j(self.kappa0, r, with_derivative=True)
        D, dD = self._dev(r)
        c = (jp / j)[..., None, None]
        U = IDENTITY + D / j[..., None, None]
        dU = (dD - c * D) / j[..., None, None]
        return U, dU

    def area(self, r):
        """(a, a', a'') with a = det T, from the ODE (no numerical differencing)."""
        r = np.asarray(r, dtype=float)
        T, dT = self.T(r), self.dT(r)
        A = self.pert(r) + self.kappa0 * IDENTITY
        d2T = -A @ T
        a = _det2(T)
        da = _mixed(dT, T)
        d2a = _mixed(d2T, T) + 2.0 * _det2(dT)
        return a, da, d2a


def _det2(M):
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


def _mixed(X, Y):
    """d/de det(Y + e X) at e = 0 for 2x2 matrices, i.e. tr(adj(Y) X)."""
    return (X[..., 0, 0] * Y[..., 1, 1] + Y[..., 0, 0] * X[..., 1, 1]
            - X[..., 0, 1] * Y[..., 1, 0] - Y[..., 0, 1] * X[..., 1, 0])


def integrate_transport(kappa0: float, pert: Perturbation, r_max: float,
                        tol: float = 1e-11) -> TransportPath:
    """Integrate the transport equation on [0, r_max] with dense output.

    Uses an adaptive 8th-order Runge-Kutta scheme on the deviation
    D = T - j I; the error control is relative to the size of D, which is
    itself bounded by a multiple of j(r).
    """
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if pert.is_zero():
        return TransportPath(kappa0, pert, float(r_max), tol, None)

    def rhs(r, y):
        D = y[:4].reshape(2, 2)
        A1 = pert(r)
        j = float(scalar_j(kappa0, r))
        d2 = -kappa0 * D - A1 @ (D + j * IDENTITY)
        return np.concatenate([y[4:], d2.ravel()])

    # breakpoints of the perturbation are hit exactly by splitting the interval
    edges = [0.0] + sorted(p for p in pert.breakpoints if 0 < p < r_max) + [float(r_max)]
    pieces = []
    y0 = np.zeros(8)
    for a, b in zip(edges[:-1], edges[1:]):
        sol = solve_ivp(rhs, (a, b), y0, method="DOP853", rtol=tol, atol=1e-300,
                        dense_output=True)
        if not sol.success:
            raise IntegrationError(sol.message)
        pieces.append((a, b, sol.sol))
        y0 = sol.y[:, -1]
    if len(pieces) == 1:
        dense = pieces[0][2]
    else:
        dense = _Piecewise(pieces)
    return TransportPath(kappa0, pert, float(r_max), tol, dense)


class _Piecewise:
    def __init__(self, pieces):
        self.pieces = pieces
        self.edges = np.array([p[1] for p in pieces[:-1]])

    def __call__(self, r):
        r = np.atleast_1d(r)
        idx = np.searchsorted(self.edges, r, side="right")
        out = np.empty((8, r.size))
        for k, (_, _, f) in enumerate(self.pieces):
            m = idx == k
            if np.any(m):
                out[:, m] = f(r[m])
        return out


def area_element(state: TransportState):
    """(a, da/dr) with a = det T and da/dr = a tr(T^{-1} T')."""
    a = float(_det2(state.T))
    if not a > 0:
        raise ConjugatePointError(f"det T = {a} <= 0 at r = {state.r}")
    da = a * float(np.trace(np.linalg.solve(state.T, state.dT)))
    return a, da


# ---------------------------------------------------------------------------
# scattering data


@dataclass(frozen=True)
class ScatteringData:
    I: np.ndarray      # I[:, k] is the vector I_k, so I[l, k] = I_{kl}
    Tinf: np.ndarray

    def vector(self, k: int):
        return self.I[:, k]


def scattering_data(kappa0: float, pert: Perturbation, tol: float = 1e-11,
                    path: TransportPath | None = None) -> ScatteringData:
    """I_k = int_0^inf exp(-s alpha0) [A1 J_k](s) ds with J_k = T e_k, and
    Tinf = lim T(r)/j(r) = I - [I_1 I_2]."""
    if not kappa0 < 0:
        raise ValueError("scattering data needs kappa0 < 0")
    alpha0 = np.sqrt(-kappa0)
    if pert.geodesic_l1() >= alpha0:
        raise ConvergenceError("perturbation too large for the contraction regime")
    if pert.is_zero():
        return ScatteringData(np.zeros((2, 2)), np.eye(2))
    upper = pert.support if np.isfinite(pert.support) else 60.0
    if path is None or path.r_max < upper:
        path = integrate_transport(kappa0, pert, upper, tol)

    def integrand(s):
        return np.exp(-alpha0 * s) * (pert(s) @ path.T(s))

    pts = sorted(p for p in pert.breakpoints if 0 < p < upper)
    I = _integrate_matrix(integrand, 0.0, upper, pts, tol)
    return ScatteringData(I, np.eye(2) - I)


def _integrate_matrix(f, a, b, pts, tol):
    edges = [a] + list(pts) + [b]
    total = np.zeros((2, 2))
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi > lo:
            val, _ = quad_vec(f, lo, hi, epsabs=0.0, epsrel=max(tol, 1e-13), limit=400)
            total = total + val
    return total


def scattering_deviation(path: TransportPath, scat: ScatteringData, r, tol: float = 1e-11):
    """T(r)/j(r) - Tinf evaluated through the exact representation

        int_r^inf e^{-a s} A1 T ds + e^{-a r}/sinh(a r) int_0^r sinh(a s) A1 T ds,

    which avoids the cancellation in the direct difference at large r.
    """
    alpha0 = np.sqrt(-path.kappa0)
    pert = path.pert
    upper = pert.support if np.isfinite(pert.support) else 60.0
    pts = sorted(pert.breakpoints)
    out = []
    for rr in np.atleast_1d(r):
        if pert.is_zero():
            out.append(np.zeros((2, 2)))
            continue
        tail = _integrate_matrix(
            lambda s: np.exp(-alpha0 * s) * (pert(s) @ path.T(s)),
            rr, max(rr, upper), [p for p in pts if rr < p < upper], tol,
        )
        # exp(-a r) sinh(a s)/sinh(a r) written to stay finite for large r
        def inner(s, rr=rr):
            w = np.exp(-alpha0 * (2 * rr - s)) * (1.0 - np.exp(-2 * alpha0 * s)) \
                / (1.0 - np.exp(-2 * alpha0 * rr))
            return w * (pert(s) @ path.T(s))

        head = _integrate_matrix(inner, 0.0, min(rr, upper), [p for p in pts if 0 < p < min(rr, upper)], tol)
        out.append(tail + head)
    return np.array(out)


def fit_decay_rate(r, values) -> float:
    """Least-squares slope of -log(values) against r."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(values, dtype=float)
    slope = np.polyfit(r, np.log(v), 1)[0]
    return float(-slope)


def loglog_slope(r, values) -> float:
    r = np.asarray(r, dtype=float)
    v = np.asarray(values, dtype=float)
    return float(np.polyfit(np.log(r), np.log(v), 1)[0])


def contraction_ratios(path: TransportPath, r_grid):
    """sup_r |T - jI|/j and sup_r |T' - j'I|/j over the grid (operator norms)."""
    r_grid = np.asarray(r_grid, dtype=float)
    r_grid = r_grid[r_grid > 0]
    j = scalar_j(path.kappa0, r_grid)
    D, dD = path.deviation(r_grid)
    t_ratio = np.linalg.norm(D, ord=2, axis=(-2, -1)) / np.abs(j)
    d_ratio = np.linalg.norm(dD, ord=2, axis=(-2, -1)) / np.abs(j)
    return float(t_ratio.max()), float(d_ratio.max())


def small_r_slopes(path: TransportPath, r_lo: float = 1e-3, r_hi: float = 1e-1, n: int = 25):
    """Log-log slopes of |T - jI| and |T' - j'I| on [r_lo, r_hi].

    Returns (nan, nan) if the deviation vanishes identically there.
    """
    r = np.geomspace(r_lo, r_hi, n)
    D, dD = path.deviation(r)
    a = np.linalg.norm(D, ord=2, axis=(-2, -1))
    b = np.linalg.norm(dD, ord=2, axis=(-2, -1))
    if np.all(a == 0) and np.all(b == 0):
        return float("nan"), float("nan")
    return loglog_slope(r, a), loglog_slope(r, b)
