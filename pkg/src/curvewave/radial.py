"""Finite-difference reference solver for radial waves on H3 (and flat space).

For radial u(t, r) about the origin, w = j(r) u turns -Delta + kappa0 into
-d_r^2, so (d_t^2 - Delta + kappa0 + V) u = 0 becomes the 1D equation

    w_tt - w_rr + V(r) w = 0,  w(t, 0) = 0.

The solver uses characteristic diamonds: for the cell with vertices
N (t+h, r), S (t-h, r), E (t, r+h), W (t, r-h), integrating the equation in
characteristic coordinates gives

    w_N = w_E + w_W - w_S - 1/2 int_D V w,

with w replaced by its bilinear interpolant in (t - r, t + r). The cell
integrals of V against the four basis functions are precomputed per radius,
splitting at jumps of V. The top vertex enters implicitly. Nodes live on the
lattice n - k even (t = n h, r = k h).

Two problems are solved:

* the point-source response. The kernel of sin(t sqrt H)/sqrt H minus the
  free shell is absolutely continuous inside r < t. Its w solves the
  equation with source -V delta(r - t)/(4 pi), which fixes the inside value
  on the front, w(t, t-) = -(1/8 pi) int_0^t V;
* the Cauchy problem u(0) = 0, u_t(0) = g.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import FLAT, HYPERBOLIC, Space


def _v_breaks(V, lo, hi):
    return [b for b in getattr(V, "breakpoints", ()) if lo < b < hi]


def diamond_weights(V, radii, h, nodes: int = 12):
    """Integrals over the diamond |t| + |r - r_k| <= h of V(r) times the
    bilinear basis functions of the N, S, E, W vertices.

    The t-integral of each basis function is done in closed form; the
    r-integral uses Gauss-Legendre split at jumps of V.
    """
    x, wq = np.polynomial.legendre.leggauss(nodes)
    out = np.zeros((4, len(radii)))
    for i, rk in enumerate(radii):
        edges = [rk - h, rk, rk + h, *_v_breaks(V, rk - h, rk + h)]
        edges = np.unique(np.clip(edges, 0.0, None))
        acc = np.zeros(4)
        for a, b in zip(edges[:-1], edges[1:]):
            if b <= a:
                continue
            r = 0.5 * (b - a) * x + 0.5 * (a + b)
            rr = (r - rk) / h
            L = h * (1.0 - np.abs(rr))
            cub = 2.0 * L ** 3 / (3.0 * h * h)
            fN = 0.25 * (2.0 * L + cub - 2.0 * L * rr * rr)
            fE = 0.25 * (2.0 * L * (1.0 + rr) ** 2 - cub)
            fW = 0.25 * (2.0 * L * (1.0 - rr) ** 2 - cub)
            vr = V(r)
            q = 0.5 * (b - a) * wq * vr
            acc += [np.dot(q, fN), np.dot(q, fN), np.dot(q, fE), np.dot(q, fW)]
        out[:, i] = acc
    return out  # rows: N, S, E, W


def front_value(V, t, nodes: int = 16):
    """-(1/8 pi) int_0^t V."""
    edges = np.unique([0.0, t, *_v_breaks(V, 0.0, t)])
    x, wq = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        s = 0.5 * (b - a) * x + 0.5 * (a + b)
        total += 0.5 * (b - a) * np.dot(wq, V(s))
    return -total / (8.0 * np.pi)


def _check(space: Space):
    if space.kind not in (HYPERBOLIC, FLAT):
        raise ValueError("the radial reduction w = j u needs H3 or flat space")


@dataclass
class RadialField:
    """w on the characteristic lattice; NaN off the lattice or outside."""

    space: Space
    h: float
    w: np.ndarray

    def value(self, t: float, r: float) -> float:
        n, k = int(round(t / self.h)), int(round(r / self.h))
        if abs(n * self.h - t) > 1e-9 or abs(k * self.h - r) > 1e-9 or (n - k) % 2:
            raise ValueError(f"({t}, {r}) is not a lattice point for h = {self.h}")
        return float(self.w[n, k])

    def u(self, t: float, r: float) -> float:
        return self.value(t, r) / float(self.space.j(r))


def point_source_w(space: Space, V, T: float, h: float) -> RadialField:
    """w = j * (absolutely continuous part of the sine kernel of -Delta + kappa0 + V)."""
    _check(space)
    N = int(round(T / h))
    radii = np.arange(N + 1) * h
    cN, cS, cE, cW = diamond_weights(V, radii, h)
    w = np.full((N + 1, N + 1), np.nan)
    w[0, 0] = 0.0
    fronts = np.array([front_value(V, n * h) for n in range(N + 1)])
    for n in range(0, N):
        m = n + 1
        w[m, m] = fronts[m]
        if m % 2 == 0:
            w[m, 0] = 0.0
        k = np.arange(m % 2 if m % 2 else 2, m - 1, 2)
        if k.size:
            wE, wW, wS = w[n, k + 1], w[n, k - 1], w[n - 1, k]
            rhs = wE + wW - wS - 0.5 * (cE[k] * wE + cW[k] * wW + cS[k] * wS)
            w[m, k] = rhs / (1.0 + 0.5 * cN[k])
    return RadialField(space, h, w)


def cauchy_w(space: Space, V, g, T: float, R: float, h: float) -> RadialField:
    """w = j u for u_tt + (-Delta + kappa0 + V) u = 0, u(0) = 0, u_t(0) = g(r).

    R is an outer radius where w = 0 is imposed; keep R - supp(g) > T so the
    boundary is never seen.
    """
    _check(space)
    N = int(round(T / h))
    K = int(round(R / h))
    r = np.arange(K + 1) * h
    cN, cS, cE, cW = diamond_weights(V, r, h)
    G = space.j(r) * g(r)
    # G'' by a fourth-order stencil in r (G is odd, so reflect through 0)
    Gx = np.concatenate([-G[2:0:-1], G, np.zeros(2)])
    G2 = (-Gx[4:] + 16 * Gx[3:-1] - 30 * Gx[2:-2] + 16 * Gx[1:-3] - Gx[:-4]) / (12 * h * h)
    w = np.full((N + 1, K + 1), np.nan)
    even = np.arange(0, K + 1, 2)
    odd = np.arange(1, K + 1, 2)
    w[0, even] = 0.0
    # w(h) from the Taylor series: w_t = G, w_ttt = G'' - V G
    w[1, odd] = h * G[odd] + h ** 3 / 6.0 * (G2[odd] - V(r[odd]) * G[odd])
    for n in range(1, N):
        m = n + 1
        k = np.arange(2 if m % 2 == 0 else 1, K, 2)
        wE, wW, wS = w[n, k + 1], w[n, k - 1], w[n - 1, k]
        rhs = wE + wW - wS - 0.5 * cE[k] * wE - 0.5 * cW[k] * wW - 0.5 * cS[k] * wS
        w[m, k] = rhs / (1.0 + 0.5 * cN[k])
        if m % 2 == 0:
            w[m, 0] = 0.0
        if (m - K) % 2 == 0:
            w[m, K] = 0.0
    return RadialField(space, h, w)


def richardson(values, order: int = 2, ratio: float = 2.0):
    """Extrapolate a sequence computed at h, h/ratio, h/ratio^2, ...

    Removes the error terms h^order, h^(order+2), ...; returns the final
    value and the size of the last correction as an error estimate.
    """
    vals = [np.asarray(v, dtype=float) for v in values]
    p = order
    est = np.zeros_like(vals[-1])
    while len(vals) > 1:
        f = ratio ** p
        nxt = [(f * b - a) / (f - 1.0) for a, b in zip(vals[:-1], vals[1:])]
        est = np.abs(nxt[-1] - vals[-1])
        vals = nxt
        p += 2
    return vals[0], est
