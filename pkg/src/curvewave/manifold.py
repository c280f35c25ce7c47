"""Point and geodesic geometry on S3, H3 and flat R3.

Points are stored as 4-vectors. The sphere is the unit sphere in R^4, the
hyperbolic space is the upper sheet of the hyperboloid <p, p> = -1 in
Minkowski space R^{1,3}, and flat space uses the affine chart p = (1, x).
A curvature kappa0 with |kappa0| != 1 rescales lengths by 1/sqrt(|kappa0|);
the embedded model itself always has unit curvature.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .jacobi import scalar_j

SPHERE = "sphere"
HYPERBOLIC = "hyperbolic"
FLAT = "flat"

CONSTRAINT_TOL = 1e-12
# coordinates further than this from the model surface are rejected outright
REJECT_TOL = 1e-6


class ConstraintError(ValueError):
    """Embedding coordinates do not describe a point of the model."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


@dataclass(frozen=True)
class Space:
    kind: str
    kappa0: float

    def __post_init__(self):
        if self.kind == SPHERE and not self.kappa0 > 0:
            raise DomainError("sphere needs kappa0 > 0")
        if self.kind == HYPERBOLIC and not self.kappa0 < 0:
            raise DomainError("hyperbolic space needs kappa0 < 0")
        if self.kind == FLAT and self.kappa0 != 0:
            raise DomainError("flat space needs kappa0 = 0")
        if self.kind not in (SPHERE, HYPERBOLIC, FLAT):
            raise DomainError(f"unknown space kind {self.kind!r}")

    @property
    def alpha0(self) -> float:
        return float(np.sqrt(-self.kappa0)) if self.kappa0 < 0 else 0.0

    @property
    def scale(self) -> float:
        """Factor converting lengths to angles in the unit model."""
        return float(np.sqrt(abs(self.kappa0))) if self.kappa0 != 0 else 1.0

    def j(self, r):
        return scalar_j(self.kappa0, r)

    @classmethod
    def sphere(cls, kappa0: float = 1.0) -> "Space":
        return cls(SPHERE, float(kappa0))

    @classmethod
    def hyperbolic(cls, alpha0: float = 1.0) -> "Space":
        return cls(HYPERBOLIC, -float(alpha0) ** 2)

    @classmethod
    def flat(cls) -> "Space":
        return cls(FLAT, 0.0)

    @classmethod
    def from_name(cls, name: str, curvature: float | None = None) -> "Space":
        key = name.lower()
        if key in ("s3", "sphere"):
            return cls.sphere(1.0 if curvature is None else curvature)
        if key in ("h3", "hyperbolic"):
            k = -1.0 if curvature is None else curvature
            return cls(HYPERBOLIC, float(k))
        if key in ("r3", "flat"):
            return cls.flat()
        raise DomainError(f"unknown space {name!r}")


@dataclass(frozen=True)
class TangentVector:
    base: np.ndarray
    vec: np.ndarray


def inner(space: Space, u, v):
    """Ambient bilinear form: Euclidean, Minkowski, or Euclidean on the chart."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if space.kind == HYPERBOLIC:
        return -u[..., 0] * v[..., 0] + np.sum(u[..., 1:] * v[..., 1:], axis=-1)
    if space.kind == FLAT:
        return np.sum(u[..., 1:] * v[..., 1:], axis=-1)
    return np.sum(u * v, axis=-1)


def _violation(space, p):
    if space.kind == SPHERE:
        return np.abs(inner(space, p, p) - 1.0)
    if space.kind == HYPERBOLIC:
        bad_sheet = np.where(p[..., 0] > 0, 0.0, np.inf)
        return np.abs(inner(space, p, p) + 1.0) + bad_sheet
    return np.abs(p[..., 0] - 1.0)


def project(space: Space, p):
    """Renormalize coordinates onto the model surface."""
    p = np.array(p, dtype=float)
    if space.kind == SPHERE:
        return p / np.linalg.norm(p, axis=-1, keepdims=True)
    if space.kind == HYPERBOLIC:
        spatial = p[..., 1:]
        p0 = np.sqrt(1.0 + np.sum(spatial * spatial, axis=-1))
        return np.concatenate([p0[..., None], spatial], axis=-1)
    p[..., 0] = 1.0
    return p


def make_point(space: Space, coords):
    """Validate and renormalize embedding coordinates."""
    p = np.asarray(coords, dtype=float)
    if p.shape[-1] != 4:
        raise ConstraintError("points are 4-vectors")
    scale = np.maximum(1.0, np.abs(p).max(axis=-1)) ** 2
    if np.any(_violation(space, p) > REJECT_TOL * scale):
        raise ConstraintError("coordinates violate the model constraint")
    q = project(space, p)
    assert np.all(_violation(space, q) <= CONSTRAINT_TOL * scale)
    return q


def origin(space: Space):
    return np.array([1.0, 0.0, 0.0, 0.0])


def point_at(space: Space, r, direction=(1.0, 0.0, 0.0)):
    """Point at distance r from the origin in the given unit direction of R^3."""
    w = np.asarray(direction, dtype=float)
    w = w / np.linalg.norm(w)
    v = TangentVector(origin(space), np.concatenate([[0.0], w]))
    return exp_map(space, v, r)


def antipode(p):
    """Antipodal map x -> -x on the sphere."""
    return -np.asarray(p, dtype=float)


def distance(space: Space, p, q, check: bool = True):
    """Geodesic distance, vectorized over leading axes.

    Uses the chord length and a half-angle formula, which stays accurate for
    nearby points where arccos / arccosh lose digits.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if check:
        for x in (p, q):
            scale = np.maximum(1.0, np.abs(x).max(axis=-1)) ** 2
            if np.any(_violation(space, x) > REJECT_TOL * scale):
                raise ConstraintError("coordinates violate the model constraint")
    diff = p - q
    chord2 = np.maximum(inner(space, diff, diff), 0.0)
    half = 0.5 * np.sqrt(chord2)
    if space.kind == SPHERE:
        angle = 2.0 * np.arcsin(np.minimum(half, 1.0))
    elif space.kind == HYPERBOLIC:
        angle = 2.0 * np.arcsinh(half)
    else:
        angle = 2.0 * half
    return angle / space.scale


def tangent_frame(space: Space, p):
    """Orthonormal basis (3, 4) of the tangent space at p."""
    p = np.asarray(p, dtype=float)
    basis = []
    for k in range(4):
        e = np.zeros(4)
        e[k] = 1.0
        if space.kind == FLAT:
            e[0] = 0.0
        else:
            e = e - inner(space, e, p) / inner(space, p, p) * p
        for b in basis:
            e = e - inner(space, e, b) * b
        n2 = inner(space, e, e)
        if n2 > 1e-8:
            basis.append(e / np.sqrt(n2))
        if len(basis) == 3:
            break
    return np.array(basis)


def tangent_vector(space: Space, p, w):
    """Tangent vector at p with frame components w in R^3 (normalized)."""
    w = np.asarray(w, dtype=float)
    frame = tangent_frame(space, p)
    return TangentVector(np.asarray(p, dtype=float), (w / np.linalg.norm(w)) @ frame)


def exp_map(space: Space, v: TangentVector, r):
    """Point reached after unit-speed travel of length r along v.

    r may be an array; the result then has shape r.shape + (4,).
    """
    p = np.asarray(v.base, dtype=float)
    u = np.asarray(v.vec, dtype=float)
    n = inner(space, u, u)
    if np.any(np.abs(n - 1.0) > 1e-10):
        raise DomainError("tangent vector must have unit length")
    if np.any(np.abs(inner(space, u, p)) > 1e-10) and space.kind != FLAT:
        raise DomainError("vector is not tangent at its base point")
    s = np.asarray(r, dtype=float)[..., None] * space.scale
    if space.kind == SPHERE:
        out = np.cos(s) * p + np.sin(s) * u
    elif space.kind == HYPERBOLIC:
        out = np.cosh(s) * p + np.sinh(s) * u
    else:
        out = p + s * u
    return project(space, out)


def geodesic_velocity(space: Space, v: TangentVector, r):
    """Unit velocity of the geodesic exp(v, r) in ambient coordinates."""
    p = np.asarray(v.base, dtype=float)
    u = np.asarray(v.vec, dtype=float)
    s = np.asarray(r, dtype=float)[..., None] * space.scale
    if space.kind == SPHERE:
        return -np.sin(s) * p + np.cos(s) * u
    if space.kind == HYPERBOLIC:
        return np.sinh(s) * p + np.cosh(s) * u
    return np.broadcast_to(u, s.shape[:-1] + (4,)).copy()


@lru_cache(maxsize=32)
def s2_rule(level: int):
    """Product rule on the unit sphere S^2 in R^3.

    Gauss-Legendre in cos(polar angle) with `level` nodes times the trapezoid
    rule in azimuth with 2*level nodes. Exact for spherical polynomials of
    degree < 2*level. Returns (directions (N, 3), weights (N,)) with
    sum(weights) = 4*pi.
    """
    if level < 1:
        raise DomainError("quadrature level must be >= 1")
    x, w = np.polynomial.legendre.leggauss(level)
    nphi = 2 * level
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    st = np.sqrt(1.0 - x * x)
    dirs = np.stack(
        [
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.repeat(x, nphi),
        ],
        axis=-1,
    )
    weights = np.repeat(w, nphi) * (2.0 * np.pi / nphi)
    dirs.setflags(write=False)
    weights.setflags(write=False)
    return dirs, weights


def sphere_directions(space: Space, center, level: int):
    """Unit tangent vectors at center for the nodes of s2_rule(level)."""
    dirs, w = s2_rule(level)
    frame = tangent_frame(space, center)
    return dirs @ frame, w


def sphere_points(space: Space, center, r, level: int):
    """Nodes exp_center(r * omega) for the S^2 rule (no validity check on r)."""
    center = np.asarray(center, dtype=float)
    vecs, w = sphere_directions(space, center, level)
    s = float(r) * space.scale
    if space.kind == SPHERE:
        pts = np.cos(s) * center + np.sin(s) * vecs
    elif space.kind == HYPERBOLIC:
        pts = np.cosh(s) * center + np.sinh(s) * vecs
    else:
        pts = center + s * vecs
    return project(space, pts), vecs, w


def sphere_quadrature(space: Space, center, r: float, level: int = 16):
    """Nodes and weights for integrating over the geodesic sphere dB(center, r).

    The weights carry the area element j(r)^2 d(omega), so they sum to
    4 pi j(r)^2.
    """
    if not r > 0:
        raise DomainError("radius must be positive")
    if space.kind == SPHERE and not r * space.scale < np.pi:
        raise DomainError("radius must be below the conjugate radius on the sphere")
    pts, _, w = sphere_points(space, center, r, level)
    return pts, w * space.j(r) ** 2


def law_of_cosines(space: Space, s, rho, theta):
    """Distance between exp(x0, s*omega) and a point at distance rho whose
    direction makes the angle theta with omega at x0.

    Written with half-angle quantities so that small distances keep full
    relative accuracy:
        sinh^2(d/2) = sinh^2((s - rho)/2) + sinh(s) sinh(rho) sin^2(theta/2).
    """
    k = space.scale
    a = np.asarray(s, dtype=float) * k
    b = np.asarray(rho, dtype=float) * k
    h = np.sin(0.5 * np.asarray(theta, dtype=float)) ** 2
    if space.kind == HYPERBOLIC:
        val = np.sinh(0.5 * (a - b)) ** 2 + np.sinh(a) * np.sinh(b) * h
        d = 2.0 * np.arcsinh(np.sqrt(np.maximum(val, 0.0)))
    elif space.kind == SPHERE:
        val = np.sin(0.5 * (a - b)) ** 2 + np.sin(a) * np.sin(b) * h
        d = 2.0 * np.arcsin(np.sqrt(np.clip(val, 0.0, 1.0)))
    else:
        val = 0.25 * (a - b) ** 2 + a * b * h
        d = 2.0 * np.sqrt(np.maximum(val, 0.0))
    return d / k
