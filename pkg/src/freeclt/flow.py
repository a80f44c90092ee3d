"""Semicircular-flow machinery: heights, regions, and the push-forward map.

For a probability measure nu and time t > 0, the free convolution of nu with
the semicircle law of variance t has an explicit boundary parametrization:

  height   v(u)  solves  I(u, v) = 1/t  where  I(u, v) = int dnu / ((u-x)^2 + v^2),
           with v(u) = 0 where I(u, 0) <= 1/t;
  map      psi(u) = u + t * J(u, v(u))  where  J = int (u-x) dnu / ((u-x)^2 + v^2);
  density  of the convolution at x = psi(u) equals v(u) / (pi t);
  boundary Cauchy transform at psi(u) is J(u, v(u)) - i v(u)/t, with modulus
           at most 1/sqrt(t).

The set {v > 0} is a finite union of open intervals (regions); psi restricted
to the real line is increasing and maps region closures onto the support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import (
    ConsistencyError,
    FlowInversionError,
    InvalidArgumentError,
)
from .measures import DensityTable, Measure, build_table

_V_BISECT_ITERS = 52        # 2^-52 ~ 2e-16 relative height resolution
_PSI_BISECT_TOL = 1e-13
_CAUCHY_BOUND_SLACK = 1e-9  # slack on |G| <= 1/sqrt(t)


class FlowKernel:
    """Vectorized evaluator for the integrals I, J and their refinements.

    Atom contributions are exact sums; an absolutely continuous part is
    integrated on fixed angle-substituted Gauss-Legendre nodes, which is
    spectrally accurate whenever the evaluation point stays a few node
    spacings away from the ac support or the height v is not tiny.
    """

    def __init__(self, nu: Measure, t: float, ac_nodes: int = 4096):
        if not (np.isfinite(t) and t > 0):
            raise InvalidArgumentError("flow time t must be positive")
        self.nu = nu
        self.t = float(t)
        xs = [a.x for a in nu.atoms]
        ws = [a.w for a in nu.atoms]
        if nu.ac is not None:
            xq, wq = nu.ac.quad_nodes(ac_nodes)
            xs = np.concatenate([np.asarray(xs), xq])
            ws = np.concatenate([np.asarray(ws), wq])
        self.nodes = np.asarray(xs, dtype=float)
        self.weights = np.asarray(ws, dtype=float)
        # closed support components: atoms as degenerate intervals + ac interval
        comps = [(a.x, a.x) for a in nu.atoms]
        if nu.ac is not None:
            comps.append(tuple(nu.ac.support))
        self.support_components = tuple(sorted(comps))

    # all of I, J, M2, M2x share the distance matrix; chunk over points
    def _accumulate(self, u: np.ndarray, v: np.ndarray, which: Tuple[str, ...]):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        flat_u = u.ravel()
        flat_v = np.broadcast_to(v, u.shape).ravel()
        out = {name: np.zeros(flat_u.shape) for name in which}
        with np.errstate(divide="ignore", invalid="ignore"):
            for lo in range(0, flat_u.size, 512):
                sl = slice(lo, min(lo + 512, flat_u.size))
                du = flat_u[sl, None] - self.nodes[None, :]
                D = du * du + (flat_v[sl, None]) ** 2
                w = self.weights[None, :]
                if "I" in out:
                    out["I"][sl] = np.sum(w / D, axis=1)
                if "J" in out:
                    out["J"][sl] = np.sum(w * du / D, axis=1)
                if "M2" in out:
                    out["M2"][sl] = np.sum(w / D ** 2, axis=1)
                if "M2x" in out:
                    out["M2x"][sl] = np.sum(w * du / D ** 2, axis=1)
        return tuple(out[name].reshape(u.shape) for name in which)

    def integral_I(self, u, v):
        return self._accumulate(np.asarray(u, float), np.asarray(v, float), ("I",))[0]

    def integral_J(self, u, v):
        return self._accumulate(np.asarray(u, float), np.asarray(v, float), ("J",))[0]

    def second_moments(self, u, v):
        return self._accumulate(np.asarray(u, float), np.asarray(v, float),
                                ("M2", "M2x"))


def flow_v(kernel: FlowKernel, u) -> np.ndarray:
    """Height function: the unique v >= 0 with I(u, v) = 1/t, or 0.

    Strict monotonicity of I in v makes bisection on (0, sqrt(t)] safe;
    iteration count fixes the relative resolution at ~2e-16.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    t = kernel.t
    target = 1.0 / t
    lo = np.zeros_like(u)
    hi = np.full_like(u, math.sqrt(t))
    inside = kernel.integral_I(u, lo) > target  # +inf on supp nu is fine
    for _ in range(_V_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        above = kernel.integral_I(u, mid) > target
        lo = np.where(inside & above, mid, lo)
        hi = np.where(inside & ~above, mid, hi)
    v = np.where(inside, 0.5 * (lo + hi), 0.0)
    if np.any(v > math.sqrt(t) * (1.0 + 1e-12)):
        raise ConsistencyError("flow height exceeded sqrt(t)")
    return v


def flow_psi(kernel: FlowKernel, u, v) -> np.ndarray:
    """Push-forward map psi(u) = u + t * J(u, v)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return u + kernel.t * kernel.integral_J(u, v)


def flow_map(kernel: FlowKernel, u):
    """(v, psi) at the curve height."""
    v = flow_v(kernel, u)
    return v, flow_psi(kernel, u, v)


def psi_derivative(kernel: FlowKernel, u, v) -> np.ndarray:
    """d psi / du along the curve.

    Where v > 0 differentiate I(u, v(u)) = 1/t implicitly:
      v' = -M2x / (v M2),   psi' = 2 t (M2x^2 + v^2 M2^2) / M2.
    Where v = 0 the map is u + t G_nu(u), so psi' = 1 - t I(u, 0).
    The derivative jumps at region ends; the positive-height branch is used
    for curve integrals (the integrand carries a factor of the density).
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    M2, M2x = kernel.second_moments(u, v)
    pos = v > 0
    out = np.empty_like(u)
    out[pos] = 2.0 * kernel.t * (M2x[pos] ** 2 + (v[pos] * M2[pos]) ** 2) / M2[pos]
    if np.any(~pos):
        I0 = kernel.integral_I(u[~pos], np.zeros(np.count_nonzero(~pos)))
        out[~pos] = 1.0 - kernel.t * I0
    return out


def flow_region(kernel: FlowKernel) -> Tuple[Tuple[float, float], ...]:
    """Maximal open intervals where the height is positive.

    I(., 0) is convex on each gap between support components and decays to
    zero at infinity, so each boundary is a simple crossing of 1/t.
    """
    t = kernel.t
    target = 1.0 / t
    comps = kernel.support_components

    def i0(x: float) -> float:
        return float(kernel.integral_I(np.array([x]), np.array([0.0]))[0])

    f = lambda x: i0(x) - target

    hull_lo, hull_hi = comps[0][0], comps[-1][1]
    scale = max(1.0, abs(hull_lo), abs(hull_hi), math.sqrt(t))

    def outer_crossing(hull_pt: float, sign: float) -> float:
        # I diverges approaching the support and decays to 0 far away, so a
        # unique crossing of 1/t lies on each side of the hull.
        d = 1e-12 * scale
        while f(hull_pt + sign * d) <= 0:
            d *= 0.25
            if d < 1e-300:
                raise ConsistencyError("no divergence of I at the support hull")
        inner = hull_pt + sign * d
        step = math.sqrt(t)
        while f(hull_pt + sign * step) > 0:
            step *= 2.0
        outer = hull_pt + sign * step
        a, b = (outer, inner) if sign < 0 else (inner, outer)
        return brentq(f, a, b, xtol=1e-14, rtol=8.9e-16)

    g0 = outer_crossing(hull_lo, -1.0)
    h_last = outer_crossing(hull_hi, +1.0)

    # interior gaps: convexity gives at most two crossings per gap
    def inner_point(pt: float, sign: float, gap: float) -> float:
        d = 1e-9 * gap
        while f(pt + sign * d) <= 0:
            d *= 0.25
            if d < 1e-300:
                raise ConsistencyError("no divergence of I at a support point")
        return pt + sign * d

    cuts = []  # (h_i, g_{i+1}) pairs where the region splits
    for (_, c_hi), (c_lo, _) in zip(comps, comps[1:]):
        gap = c_lo - c_hi
        if gap < 1e-12:
            continue
        res = minimize_scalar(i0, bounds=(c_hi + 1e-9 * gap, c_lo - 1e-9 * gap),
                              method="bounded", options={"xatol": 1e-13})
        if res.fun >= target:
            continue  # gap stays inside one region
        xm = float(res.x)
        h_i = brentq(f, inner_point(c_hi, +1.0, gap), xm, xtol=1e-14, rtol=8.9e-16)
        g_i = brentq(f, xm, inner_point(c_lo, -1.0, gap), xtol=1e-14, rtol=8.9e-16)
        cuts.append((h_i, g_i))

    edges = [g0]
    for h_i, g_i in cuts:
        edges.extend([h_i, g_i])
    edges.append(h_last)
    return tuple((edges[k], edges[k + 1]) for k in range(0, len(edges), 2))


def _region_outer_edges(kernel: FlowKernel):
    comps = kernel.support_components
    return comps[0][0], comps[-1][1]


@dataclass(frozen=True, eq=False)
class FlowCurve:
    """Sampled flow curve: u-grid with heights and image points, per region."""

    kernel: FlowKernel
    regions: Tuple[Tuple[float, float], ...]
    u: np.ndarray
    v: np.ndarray
    psi: np.ndarray
    region_index: np.ndarray

    @property
    def t(self) -> float:
        return self.kernel.t

    def j_values(self) -> np.ndarray:
        """J along the curve, recovered from psi = u + t*J."""
        return (self.psi - self.u) / self.t

    def psi_prime(self) -> np.ndarray:
        return psi_derivative(self.kernel, self.u, self.v)


def _chebyshev_closed(a: float, b: float, n: int) -> np.ndarray:
    k = np.arange(n)
    return np.sort(0.5 * (a + b) - 0.5 * (b - a) * np.cos(np.pi * k / (n - 1)))


def flow_curve(kernel: FlowKernel, points_per_region: int = 1401,
               refine_passes: int = 3) -> FlowCurve:
    """Sample the curve on each region, refining where the image is sparse."""
    regions = flow_region(kernel)
    us, vs, ps, ridx = [], [], [], []
    for k, (g, h) in enumerate(regions):
        u = _chebyshev_closed(g, h, points_per_region)
        v = flow_v(kernel, u)
        v[0] = v[-1] = 0.0  # exact at region ends
        psi = flow_psi(kernel, u, v)
        span = psi[-1] - psi[0]
        dx_max = span / (points_per_region - 1) * 6.0
        for _ in range(refine_passes):
            gaps = np.nonzero(np.diff(psi) > dx_max)[0]
            if gaps.size == 0:
                break
            u_new = 0.5 * (u[gaps] + u[gaps + 1])
            v_new = flow_v(kernel, u_new)
            psi_new = flow_psi(kernel, u_new, v_new)
            u = np.insert(u, gaps + 1, u_new)
            v = np.insert(v, gaps + 1, v_new)
            psi = np.insert(psi, gaps + 1, psi_new)
        # near critical points psi flattens cubically and adjacent image
        # points can collide at machine precision; keep a strictly
        # increasing subsequence (the dropped points carry density ~ 0)
        delta = 1e-13 * max(1.0, float(np.max(np.abs(psi))))
        keep = [0]
        for i in range(1, psi.size):
            if psi[i] > psi[keep[-1]] + delta:
                keep.append(i)
        if keep[-1] != psi.size - 1:
            keep[-1] = psi.size - 1  # preserve the exact region endpoint
        u, v, psi = u[keep], v[keep], psi[keep]
        if np.any(np.diff(psi) <= 0):
            raise ConsistencyError(
                "flow image grid not strictly increasing in region %d" % k)
        us.append(u)
        vs.append(v)
        ps.append(psi)
        ridx.append(np.full(u.shape, k, dtype=int))
    return FlowCurve(kernel, regions, np.concatenate(us), np.concatenate(vs),
                     np.concatenate(ps), np.concatenate(ridx))


def flow_density(nu: Measure, t: float, points_per_region: int = 1401,
                 ac_nodes: int = 4096):
    """Density table of the free convolution of nu with the semicircle law.

    Returns (curve, table).  The density at psi(u) is v(u)/(pi t); region
    ends map to support edges where the density vanishes like a square root.
    """
    kernel = FlowKernel(nu, t, ac_nodes=ac_nodes)
    curve = flow_curve(kernel, points_per_region)
    tables = []
    for k, _ in enumerate(curve.regions):
        sel = curve.region_index == k
        x = curve.psi[sel]
        p = curve.v[sel] / (np.pi * t)
        tables.append(build_table(x, p, support=(x[0], x[-1]),
                                  edge_orders=(0.5, 0.5), expected_mass=None))
    if len(tables) != 1:
        # multi-region supports stay as separate tables for the caller
        return curve, tuple(tables)
    return curve, tables[0]


def flow_invert_psi(kernel: FlowKernel, x) -> np.ndarray:
    """Solve psi(u) = x for real x; psi is increasing on the whole line.

    The bracket uses |psi(u) - u| <= sqrt(t), a consequence of the modulus
    bound |G| <= 1/sqrt(t) for the convolved transform.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rt = math.sqrt(kernel.t)
    lo = x - rt * (1.0 + 1e-9) - 1e-12
    hi = x + rt * (1.0 + 1e-9) + 1e-12

    def psi_of(u):
        return flow_psi(kernel, u, flow_v(kernel, u))

    flo = psi_of(lo) - x
    fhi = psi_of(hi) - x
    if np.any(flo > 0) or np.any(fhi < 0):
        raise FlowInversionError("inversion bracket failed; map not monotone?")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = psi_of(mid) - x
        take_lo = fm < 0
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_lo, hi, mid)
        if np.max(hi - lo) < _PSI_BISECT_TOL:
            break
    return 0.5 * (lo + hi)


def flow_cauchy(kernel: FlowKernel, x) -> np.ndarray:
    """Boundary Cauchy transform of the convolution at real x.

    Equals J - i v/t at u = psi^{-1}(x); the modulus never exceeds 1/sqrt(t)
    (checked, with a small slack, as an internal consistency guard).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = flow_invert_psi(kernel, x)
    v = flow_v(kernel, u)
    j = kernel.integral_J(u, v)
    g = j - 1j * v / kernel.t
    bound = 1.0 / math.sqrt(kernel.t) + _CAUCHY_BOUND_SLACK
    if np.any(np.abs(g) > bound):
        raise ConsistencyError("void: |G| exceeded 1/sqrt(t) on the boundary")
    return g


def region_integral(kernel: FlowKernel, region: Tuple[float, float],
                    integrand, nodes: int = 256) -> float:
    """Integral over one region in the u variable with square-root endpoint
    substitutions: s = sqrt(u - g) (resp. sqrt(h - u)) on each half.

    integrand(u) must be vectorized; heights vanish like sqrt at the region
    ends so the substituted integrand is smooth there.
    """
    g, h = region
    mid = 0.5 * (g + h)
    x_gl, w_gl = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for left in (True, False):
        smax = math.sqrt(mid - g) if left else math.sqrt(h - mid)
        s = 0.5 * smax * (x_gl + 1.0)
        w = 0.5 * smax * w_gl
        u = (g + s * s) if left else (h - s * s)
        total += float(np.sum(w * 2.0 * s * integrand(u)))
    return total
