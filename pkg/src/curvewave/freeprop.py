"""Free propagators on constant curvature spaces.

The sine propagator sin(t sqrt(H0))/sqrt(H0), H0 = -Delta + kappa0, has the
kernel (4 pi j(t))^{-1} delta_{d = t}: a uniform measure on the geodesic
sphere of radius t. Applied to a function it becomes a spherical mean,
which is evaluated with the product rule of `manifold.s2_rule`.

On S3 the module also provides the spectral side: the zonal kernels P_l of
the eigenspaces of H0 (eigenvalue (l+1)^2), and the propagators written as
finite sums over them. These serve as an independent oracle for the
geometric formulas.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import eval_chebyu, roots_hermite

from .jacobi import scalar_j
from .manifold import (
    FLAT,
    HYPERBOLIC,
    SPHERE,
    Space,
    distance,
    inner,
    sphere_points,
)

DEFAULT_LEVEL = 32
DEFAULT_ELL_MAX = 64


class MissingDerivativeError(ValueError):
    """An analytic radial derivative was requested but not supplied."""


@dataclass(frozen=True)
class RadialKernel:
    """One time slice of a rotation-invariant kernel.

    shell_coeff multiplies the surface measure of dB(x0, t); the absolutely
    continuous part is a profile on r_grid (empty for free kernels).
    """

    t: float
    shell_coeff: float
    r_grid: np.ndarray | None = None
    ac_profile: np.ndarray | None = None

    def shell_mass(self, space: Space) -> float:
        return self.shell_coeff * 4.0 * np.pi * float(space.j(self.t)) ** 2


def _is_conjugate_time(space: Space, t) -> bool:
    if space.kind != SPHERE:
        return False
    k = t * space.scale / np.pi
    return abs(k - round(k)) < 1e-13 and round(k) != 0


def sine_kernel(space: Space, t: float) -> RadialKernel:
    if not t > 0:
        raise ValueError("t must be positive")
    if _is_conjugate_time(space, t):
        return RadialKernel(float(t), 0.0)
    return RadialKernel(float(t), 1.0 / (4.0 * np.pi * float(space.j(t))))


# ---------------------------------------------------------------------------
# test functions


class RadialFunction:
    """f(x) = g(d(center, x)) with optional derivative g'."""

    def __init__(self, space: Space, center, g, dg=None):
        self.space = space
        self.center = np.asarray(center, dtype=float)
        self.g = g
        self.dg = dg

    def __call__(self, pts):
        return self.g(distance(self.space, self.center, pts, check=False))

    def _ddist(self, pts, vel):
        sp = self.space
        d = distance(sp, self.center, pts, check=False)
        k = sp.scale
        if sp.kind == HYPERBOLIC:
            num = -inner(sp, self.center, vel)
            den = np.sinh(k * d)
        elif sp.kind == SPHERE:
            num = -inner(sp, self.center, vel)
            den = np.sin(k * d)
        else:
            num = inner(sp, pts - self.center, vel)
            den = d
        with np.errstate(invalid="ignore", divide="ignore"):
            dd = np.where(den != 0, num / np.where(den != 0, den, 1.0), 0.0)
        return d, dd

    def directional_derivative(self, pts, vel):
        if self.dg is None:
            raise MissingDerivativeError("radial derivative not supplied")
        d, dd = self._ddist(pts, vel)
        return self.dg(d) * dd


class PolynomialFunction:
    """f(x) = sum_m c_m <x, u_m>^{n_m} with Euclidean products in R^4.

    On S3 a polynomial of degree L restricts to a band-limited function with
    components l <= L only.
    """

    def __init__(self, coeffs, vectors, degrees):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.vectors = np.asarray(vectors, dtype=float)
        self.degrees = np.asarray(degrees, dtype=int)

    @property
    def degree(self) -> int:
        return int(self.degrees.max())

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        s = pts @ self.vectors.T
        return np.sum(self.coeffs * s ** self.degrees, axis=-1)

    def directional_derivative(self, pts, vel):
        pts = np.asarray(pts, dtype=float)
        s = pts @ self.vectors.T
        sv = vel @ self.vectors.T
        n = self.degrees
        pw = np.where(n > 0, s ** np.maximum(n - 1, 0), 0.0)
        return np.sum(self.coeffs * n * pw * sv, axis=-1)

    @classmethod
    def random(cls, rng, degree: int, terms: int = 6):
        vecs = rng.normal(size=(terms, 4))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        degs = rng.integers(0, degree + 1, size=terms)
        degs[0] = degree
        coeffs = rng.normal(size=terms)
        return cls(coeffs, vecs, degs)


# ---------------------------------------------------------------------------
# geometric side


def _velocities(space: Space, center, vecs, t):
    s = t * space.scale
    c = np.asarray(center, dtype=float)
    if space.kind == SPHERE:
        return space.scale * (-np.sin(s) * c + np.cos(s) * vecs)
    if space.kind == HYPERBOLIC:
        return space.scale * (np.sinh(s) * c + np.cosh(s) * vecs)
    return vecs


def spherical_mean(space: Space, f, x, t, level: int = DEFAULT_LEVEL):
    """(1/4pi) int_{S^2} f(exp_x(t omega)) d omega."""
    pts, _, w = sphere_points(space, x, t, level)
    return float(np.dot(w, f(pts))) / (4.0 * np.pi)


def apply_sine(space: Space, t: float, f, x, level: int = DEFAULT_LEVEL) -> float:
    """[S0(t) f](x) = (j(t)/4pi) int_{S^2} f(exp_x(t omega)) d omega."""
    if not t > 0:
        raise ValueError("t must be positive")
    if _is_conjugate_time(space, t):
        return 0.0
    return float(space.j(t)) * spherical_mean(space, f, x, t, level)


def _mean_derivative(space, t, f, x, level, derivative, h):
    pts, vecs, w = sphere_points(space, x, t, level)
    use_analytic = derivative == "analytic" or (
        derivative == "auto" and hasattr(f, "directional_derivative")
        and getattr(f, "dg", True) is not None
    )
    if use_analytic:
        if not hasattr(f, "directional_derivative"):
            raise MissingDerivativeError("f has no directional_derivative")
        vel = _velocities(space, x, vecs, t)
        vals = f.directional_derivative(pts, vel)
    else:
        # fourth-order centered stencil along each outgoing geodesic
        def at(s):
            return f(sphere_points(space, x, s, level)[0])

        vals = (-at(t + 2 * h) + 8 * at(t + h) - 8 * at(t - h) + at(t - 2 * h)) / (12 * h)
    return float(np.dot(w, vals)) / (4.0 * np.pi)


def apply_cosine(space: Space, t: float, f, x, level: int = DEFAULT_LEVEL,
                 derivative: str = "auto", h: float = 1e-3) -> float:
    """[C0(t) f](x) = j'(t) M_f(t) + j(t) M_{d_r f}(t) with M the spherical mean.

    derivative: 'analytic' requires f.directional_derivative, 'numeric'
    differentiates along geodesics with a fourth-order stencil, 'auto'
    prefers the analytic form when available.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    j, jp = scalar_j(space.kappa0, t, with_derivative=True)
    mean_f = spherical_mean(space, f, x, t, level)
    mean_df = _mean_derivative(space, t, f, x, level, derivative, h)
    if _is_conjugate_time(space, t):
        j = 0.0
    return float(jp) * mean_f + float(j) * mean_df


def radial_sine_apply(space: Space, t: float, g, rho: float, n: int = 400) -> float:
    """[S0(t) f](x) for f = g(d(c, .)) radial about c and d(c, x) = rho.

    Uses the reduction of the spherical mean to a one-dimensional integral
    (1/(2 j(rho))) int_{|t-rho|}^{t+rho} g(d) j(d) dd (H3 and flat space).
    """
    if space.kind == SPHERE:
        raise ValueError("radial reduction implemented for H3 and flat space")
    if rho == 0:
        return float(space.j(t) * g(np.array(t)))
    a, b = abs(t - rho), t + rho
    x, w = np.polynomial.legendre.leggauss(n)
    d = 0.5 * (b - a) * x + 0.5 * (a + b)
    val = 0.5 * (b - a) * np.dot(w, g(d) * space.j(d))
    return float(val / (2.0 * space.j(rho)))


# ---------------------------------------------------------------------------
# fundamental integrals


def fundamental_integral_closed(space: Space, r: float, weight=None) -> float:
    """Closed form of int |S0(t)(x, x0)| w(t) dt at d(x, x0) = r."""
    w = 1.0 if weight is None else float(weight(r))
    return w / (4.0 * np.pi * abs(float(space.j(r))))


def fundamental_integral_check(space: Space, r: float, weight=None,
                               eta: float = 0.02, nodes: int = 80) -> float:
    """Numerical value of int_0^T |S0(t)(x, x0)| w(t) dt at d(x, x0) = r.

    Here T is infinity on H3 and pi on S3. The time integral of the shell
    measures is a density in x. It is measured by pairing with normalized
    Gaussian shells of width eta around d = r: a t-integral of |coeff| times
    the shell area, divided by the volume weight of the test shell. The
    eta -> 0 limit is taken by Richardson extrapolation over eta, eta/2,
    eta/4 (error O(eta^6)).
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if space.kind == SPHERE and not r * space.scale < np.pi:
        raise ValueError("r must lie in (0, pi) on the sphere")
    z, wz = roots_hermite(nodes)
    wfun = (lambda t: np.ones_like(t)) if weight is None else weight

    def paired(e):
        t = r + np.sqrt(2.0) * e * z
        if np.any(t <= 0) or (space.kind == SPHERE and np.any(t * space.scale >= np.pi)):
            raise ValueError("mollifier width too large for this r")
        j = space.j(t)
        coeff = 1.0 / (4.0 * np.pi * np.abs(j))
        area = 4.0 * np.pi * j ** 2
        num = np.dot(wz, wfun(t) * coeff * area)
        den = np.dot(wz, area)
        return num / den

    f1, f2, f4 = paired(eta), paired(eta / 2), paired(eta / 4)
    # eliminate eta^2 then eta^4
    g1 = (4 * f2 - f1) / 3
    g2 = (4 * f4 - f2) / 3
    return float((16 * g2 - g1) / 15)


# ---------------------------------------------------------------------------
# spectral side on S3


def zonal_projection(ell: int, theta):
    """Kernel of the projection onto eigenvalue (l+1)^2 at distance theta:
    (l+1) sin((l+1) theta) / (2 pi^2 sin theta), with the limit
    (l+1)^2/(2 pi^2) at theta = 0."""
    if ell < 0:
        raise ValueError("ell must be >= 0")
    theta = np.asarray(theta, dtype=float)
    return (ell + 1) * eval_chebyu(ell, np.cos(theta)) / (2.0 * np.pi ** 2)


def projection_trace(ell: int) -> float:
    """int_{S3} P_l(x, x) dx = P_l(0) vol(S3)."""
    return float(zonal_projection(ell, 0.0)) * 2.0 * np.pi ** 2


def dyadic_projection(k: int, theta):
    """P~_k = sum of P_l for 2^k - 1 <= l <= 2^{k+1} - 2."""
    if k < 0:
        raise ValueError("k must be >= 0")
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for ell in range(2 ** k - 1, 2 ** (k + 1) - 1):
        out = out + zonal_projection(ell, theta)
    return out


def dyadic_trace(k: int) -> int:
    return int(sum((ell + 1) ** 2 for ell in range(2 ** k - 1, 2 ** (k + 1) - 1)))


def dyadic_bound_scan(k_max: int = 8, n_theta: int = 4001):
    """sup_theta 2^{-k} |P~_k(theta)| min(theta, pi - theta)^2 for k <= k_max."""
    theta = np.linspace(0.0, np.pi, n_theta)
    edge = np.minimum(theta, np.pi - theta) ** 2
    return np.array([
        float(np.max(2.0 ** (-k) * np.abs(dyadic_projection(k, theta)) * edge))
        for k in range(k_max + 1)
    ])


def _theta_rule(n: int):
    # midpoint rule on [0, pi]: exact for cos(m theta), 0 <= m < 2n
    theta = (np.arange(n) + 0.5) * np.pi / n
    return theta, np.full(n, np.pi / n)


def spectral_coefficients(f, x, ell_max: int = DEFAULT_ELL_MAX,
                          level: int | None = None, n_theta: int | None = None):
    """Values (P_l f)(x) for l = 0..ell_max on the unit S3.

    (P_l f)(x) = int_0^pi P_l(theta) 4 pi M_f(theta) sin^2(theta) d theta,
    with M_f the spherical mean of f about x. For f of degree <= ell_max
    the integrand is a cosine polynomial in theta, which the midpoint rule
    integrates exactly.
    """
    space = Space.sphere()
    n_theta = n_theta or (2 * ell_max + 16)
    level = level or (ell_max + 8)
    theta, wt = _theta_rule(n_theta)
    means = np.array([spherical_mean(space, f, x, th, level) for th in theta])
    ells = np.arange(ell_max + 1)
    P = np.array([zonal_projection(int(l), theta) for l in ells])
    return P @ (wt * 4.0 * np.pi * means * np.sin(theta) ** 2)


def spectral_sine_apply(t: float, f, x, ell_max: int = DEFAULT_ELL_MAX,
                        return_error: bool = False, guard: int = 8):
    """S0(t) f(x) = sum_l sin(t(l+1))/(l+1) (P_l f)(x) on the unit S3.

    With return_error=True also returns an estimate of the truncation error,
    taken from the coefficients in the guard band l_max < l <= l_max + guard
    (zero for band-limited f).
    """
    c = spectral_coefficients(f, x, ell_max + guard)
    n = np.arange(1, ell_max + guard + 2)
    terms = np.sin(t * n) / n * c
    value = float(np.sum(terms[: ell_max + 1]))
    if not return_error:
        return value
    err = float(np.sum(np.abs(c[ell_max + 1:]) / n[ell_max + 1:]))
    return value, err


def spectral_cosine_apply(t: float, f, x, ell_max: int = DEFAULT_ELL_MAX) -> float:
    c = spectral_coefficients(f, x, ell_max)
    n = np.arange(1, ell_max + 2)
    return float(np.sum(np.cos(t * n) * c))


def spectral_multiplier_apply(mult, f, x, ell_max: int = DEFAULT_ELL_MAX) -> float:
    """sum_l mult(l) (P_l f)(x) for an arbitrary multiplier of l."""
    c = spectral_coefficients(f, x, ell_max)
    return float(np.sum(mult(np.arange(ell_max + 1)) * c))


def projection_apply(ell: int, f, x, route: str = "closed", level: int = 40,
                     n_theta: int = 96, n_time: int = 96) -> float:
    """(P_l f)(x) either from the closed-form kernel or from the sine propagator.

    route='sine' evaluates ((l+1)/pi) int_0^{2pi} sin(t(l+1)) [S0(t) f](x) dt
    with the geometric apply_sine and a midpoint rule in t (exact for the
    trigonometric polynomials that arise from band-limited f).
    """
    space = Space.sphere()
    if route == "closed":
        theta, wt = _theta_rule(n_theta)
        means = np.array([spherical_mean(space, f, x, th, level) for th in theta])
        return float(np.sum(wt * zonal_projection(ell, theta) * 4.0 * np.pi * means
                            * np.sin(theta) ** 2))
    if route == "sine":
        t = (np.arange(n_time) + 0.5) * 2.0 * np.pi / n_time
        vals = np.array([apply_sine(space, tt, f, x, level) for tt in t])
        return float((ell + 1) / np.pi * np.sum(np.sin(t * (ell + 1)) * vals)
                     * 2.0 * np.pi / n_time)
    raise ValueError(f"unknown route {route!r}")
