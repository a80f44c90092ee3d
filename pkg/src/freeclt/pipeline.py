"""Densities of normalized free convolution powers via two independent routes.

For a standardized seed measure mu and n >= 1, the object of interest is the
n-th free convolution power rescaled by 1/sqrt(n), so every power keeps mean
zero and variance one.

Route 1 (flow): with nu the companion of mu (1/G_mu = z - G_nu), the
reciprocal transform of the n-th normalized power is
  z - C(z),  C = Cauchy transform of (nu scaled by 1/sqrt(n)) convolved with
the semicircle law of variance t = (n-1)/n.  Boundary values of C come from
the explicit flow parametrization, and the density follows pointwise from a
quotient -- no fixed-point iteration anywhere.

Route 2 (subordination): omega(Z) solves omega = Z/n + (1-1/n)/G_mu(omega);
then the transform of the power at Z is G_mu(omega(Z)), rescaled back to the
normalized variable.  The density is recovered by extrapolating boundary
values to the real axis.

Atoms: the n-th power has an atom at n*x exactly when an atom of mu at x has
weight w > 1 - 1/n, with weight n*w - (n-1); normalization moves it to
sqrt(n)*x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ConsistencyError,
    FixedPointError,
    InvalidArgumentError,
)
from .measures import Atom, DensityTable, Measure, build_table, dilate
from .transforms import (
    InversionSchedule,
    cauchy,
    cauchy_derivative,
    companion_measure,
    find_support_interval,
    stieltjes_invert,
)
from .flow import (
    FlowCurve,
    FlowKernel,
    flow_curve,
    flow_map,
    flow_v,
    psi_derivative,
    region_integral,
)

DEFAULT_GRID = (-3.0, 3.0, 1201)
DEFAULT_EPS = 1e-6          # top of the inversion ladder for route 2
TOL_FIXED_POINT = 1e-13
_PICARD_DAMPING = 0.8
_PICARD_MAX = 400
_NEWTON_MAX = 60


def default_grid() -> np.ndarray:
    lo, hi, n = DEFAULT_GRID
    return np.linspace(lo, hi, n)


def _require_power(n: int) -> int:
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise InvalidArgumentError("power index n must be an integer >= 1")
    return int(n)


def _require_standardized(mu: Measure) -> None:
    if not mu.is_standardized(1e-6):
        raise InvalidArgumentError(
            "seed measure must be standardized (mean 0, variance 1)")


def atoms_of_power(mu: Measure, n: int) -> Tuple[Atom, ...]:
    """Atoms of the normalized n-th power: survive iff seed weight > 1 - 1/n."""
    n = _require_power(n)
    out = []
    for a in mu.atoms:
        w_n = n * a.w - (n - 1)
        if w_n > 1e-14:
            out.append(Atom(math.sqrt(n) * a.x, w_n))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class CltDensity:
    """Density of one normalized free convolution power.

    tables may be empty (purely atomic, only possible at n = 1 or via the
    weight criterion) and has one entry per support interval.  Moments
    include atom contributions.  curve is set on the flow route; residual
    and iterations describe the fixed-point solve on the subordination route.
    """

    n: int
    path: str
    atoms: Tuple[Atom, ...]
    tables: Tuple[DensityTable, ...]
    mass: float
    mean: float
    variance: float
    curve: Optional[FlowCurve] = None
    residual: Optional[float] = None
    iterations: Optional[int] = None

    def density(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        for tab in self.tables:
            out += tab.density(x)
        return out

    def intervals(self) -> Tuple[Tuple[float, float], ...]:
        return tuple(t.support for t in self.tables)

    def support(self) -> Tuple[float, float]:
        lo = [t.support[0] for t in self.tables] + [a.x for a in self.atoms]
        hi = [t.support[1] for t in self.tables] + [a.x for a in self.atoms]
        if not lo:
            raise ConsistencyError("empty density object")
        return min(lo), max(hi)


def _seed_only(mu: Measure, path: str) -> CltDensity:
    tables = ()
    if mu.ac is not None:
        tab = mu.ac if isinstance(mu.ac, DensityTable) else mu.ac.to_table(2001)
        tables = (tab,)
    return CltDensity(1, path, mu.atoms, tables, 1.0, mu.mean(), mu.variance())


# -- route 1: explicit flow -------------------------------------------------

def _quotient_values(curve: FlowCurve, sel: np.ndarray):
    """Density of the power at x = psi(u): (1/pi) (v/t) / (A^2 + (v/t)^2)."""
    t = curve.t
    x = curve.psi[sel]
    v = curve.v[sel]
    j = curve.j_values()[sel]
    a = x - j
    with np.errstate(divide="ignore", invalid="ignore"):
        p = (v / t) / (a * a + (v / t) ** 2) / np.pi
    return x, p, a


def clt_density_flow(mu: Measure, n: int, points_per_region: int = 1401,
                     moment_nodes: int = 320) -> CltDensity:
    """Density of the normalized n-th power through the flow parametrization."""
    n = _require_power(n)
    _require_standardized(mu)
    if n == 1:
        return _seed_only(mu, "flow")
    nu = companion_measure(mu)
    t = (n - 1) / n
    nu_s = dilate(nu, 1.0 / math.sqrt(n))
    kernel = FlowKernel(nu_s, t)
    curve = flow_curve(kernel, points_per_region)
    atoms = atoms_of_power(mu, n)

    tables = []
    for k, _ in enumerate(curve.regions):
        sel = curve.region_index == k
        x, p, _ = _quotient_values(curve, sel)
        good = np.isfinite(p)
        tables.append(build_table(x[good], p[good], support=(x[0], x[-1]),
                                  edge_orders="fit", expected_mass=None))

    # moments in the u variable: spectrally accurate with sqrt endpoint
    # substitutions, valid for both soft (+1/2) and singular (-1/2) edges
    def quotient_u(u: np.ndarray, power: int) -> np.ndarray:
        v = np.maximum(flow_v(kernel, u), 1e-300)
        psi = u + t * kernel.integral_J(u, v)
        a = psi - (psi - u) / t
        p = (v / t) / (a * a + (v / t) ** 2) / np.pi
        return psi ** power * p * psi_derivative(kernel, u, v)

    mass = mean = second = 0.0
    for reg in curve.regions:
        mass += region_integral(kernel, reg, lambda u: quotient_u(u, 0), moment_nodes)
        mean += region_integral(kernel, reg, lambda u: quotient_u(u, 1), moment_nodes)
        second += region_integral(kernel, reg, lambda u: quotient_u(u, 2), moment_nodes)
    for a in atoms:
        mass += a.w
        mean += a.w * a.x
        second += a.w * a.x ** 2
    return CltDensity(n, "flow", atoms, tuple(tables), mass, mean,
                      second - mean ** 2, curve=curve)


# -- route 2: subordination fixed point --------------------------------------

@dataclass(frozen=True)
class SubordinationResult:
    omega: complex
    iterations: int
    residual: float


def _real_z_map(mu: Measure, n: int, w: np.ndarray):
    """Z(omega) = n*omega - (n-1) F(omega) and Z' on the real axis off supp.

    Spectral edges of the n-th power are critical values of this map: the
    subordination solution omega(Z) turns complex exactly past a fold.  At
    atoms of mu, F vanishes, so atom locations map to n*x.
    """
    z = np.asarray(w, dtype=float) + 1e-30j
    with np.errstate(divide="ignore", invalid="ignore"):
        g = cauchy(mu, z)
        gp = cauchy_derivative(mu, z)
        f = np.real(1.0 / g)
        fp = np.real(-gp / (g * g))
    f = np.where(np.isfinite(f), f, 0.0)
    return n * np.asarray(w, float) - (n - 1) * f, n - (n - 1) * fp


def _edge_candidates(mu: Measure, n: int) -> np.ndarray:
    """Normalized candidate support edges of the n-th power.

    Candidates: images of seed support points (atoms and ac endpoints), and
    critical values of the real map Z(omega) on each maximal interval where
    the reciprocal transform is real-analytic (outside the seed support).
    """
    from scipy.optimize import brentq

    comps = [(a.x, a.x) for a in mu.atoms]
    if mu.ac is not None:
        comps.append(tuple(mu.ac.support))
    comps.sort()
    hull_lo, hull_hi = comps[0][0], comps[-1][1]
    reach = 4.0 + math.sqrt(n)
    segments = [(hull_lo - reach, hull_lo)]
    for (_, c_hi), (c_lo, _) in zip(comps, comps[1:]):
        if c_lo - c_hi > 1e-10:
            segments.append((c_hi, c_lo))
    segments.append((hull_hi, hull_hi + reach))

    cands = [n * pt for seg in comps for pt in seg]

    def zprime(w: float) -> float:
        return float(_real_z_map(mu, n, np.array([w]))[1][0])

    for lo, hi in segments:
        pad = 1e-9 * max(1.0, abs(lo), abs(hi))
        grid = np.linspace(lo + pad, hi - pad, 1501)
        _, zp = _real_z_map(mu, n, grid)
        sign = np.sign(zp)
        flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
        for i in flips:
            root = brentq(zprime, grid[i], grid[i + 1], xtol=1e-15, rtol=8.9e-16)
            cands.append(float(_real_z_map(mu, n, np.array([root]))[0][0]))
    out = np.sort(np.asarray(cands)) / math.sqrt(n)
    # drop fold images that blew up on a pole of F (zero of the transform)
    bound = 2.0 + max(abs(hull_lo), abs(hull_hi)) + 1.0
    return out[np.abs(out) <= bound]


def _refine_edge(coarse: float, candidates: np.ndarray, window: float) -> float:
    if candidates.size == 0:
        return coarse
    i = int(np.argmin(np.abs(candidates - coarse)))
    if abs(candidates[i] - coarse) <= window:
        return float(candidates[i])
    return coarse


def _phi_factory(mu: Measure, n: int):
    frac = (n - 1.0) / n

    def phi(z_big: np.ndarray, w: np.ndarray) -> np.ndarray:
        return z_big / n + frac / cauchy(mu, w)

    def phi_prime(w: np.ndarray) -> np.ndarray:
        g = cauchy(mu, w)
        gp = cauchy_derivative(mu, w)
        return -frac * gp / (g * g)

    return phi, phi_prime


def _omega_grid(mu: Measure, n: int, z_big, tol: float = TOL_FIXED_POINT,
                max_iter: int = 10_000):
    """Solve omega = Z/n + (1-1/n) F_mu(omega) for an array of Z.

    Damped Picard iteration converges globally but slows down to 1/(1-|phi'|)
    near spectral edges; unconverged points get a guarded Newton polish.
    Returns (omega, iterations, residual) with omega shaped like Z.
    """
    phi, phi_prime = _phi_factory(mu, n)
    shape = np.shape(z_big)
    z = np.atleast_1d(np.asarray(z_big, dtype=complex)).ravel()
    w = z.copy()
    lam = _PICARD_DAMPING
    iters = 0
    pending = np.arange(z.size)
    while pending.size and iters < max_iter:
        # damped Picard burst: globally convergent, but the contraction rate
        # degrades to 1 - O(dist) just outside the support, so cap the burst
        # and hand over to Newton, returning here if points are still open
        for _ in range(min(_PICARD_MAX, max_iter - iters)):
            if pending.size == 0:
                break
            iters += 1
            wp = w[pending]
            zp = z[pending]
            nxt = phi(zp, wp)
            res = np.abs(nxt - wp)
            w[pending] = (1.0 - lam) * wp + lam * nxt
            pending = pending[res > tol]
        for _ in range(min(_NEWTON_MAX, max_iter - iters)):
            if pending.size == 0:
                break
            iters += 1
            wp = w[pending]
            zp = z[pending]
            h = phi(zp, wp) - wp
            step = -h / (phi_prime(wp) - 1.0)
            cap = 0.5 * (1.0 + np.abs(wp))
            scale = np.minimum(1.0, cap / np.maximum(np.abs(step), 1e-300))
            cand = wp + scale * step
            # backtrack any candidate that dips toward the real axis; omega
            # must stay well inside the upper half-plane for the transforms
            for _try in range(8):
                bad = cand.imag <= 0.25 * zp.imag
                if not np.any(bad):
                    break
                scale = np.where(bad, 0.3 * scale, scale)
                cand = wp + scale * step
            still_bad = cand.imag <= 0.25 * zp.imag
            if np.any(still_bad):
                # blocked Newton candidates take a plain Picard update, which
                # never loses height, rather than freezing in place
                pic = (1.0 - lam) * wp + lam * phi(zp, wp)
                cand[still_bad] = pic[still_bad]
            w[pending] = cand
            h_new = np.abs(phi(zp, cand) - cand)
            pending = pending[h_new > tol]
    if pending.size:
        worst = float(np.max(np.abs(phi(z[pending], w[pending]) - w[pending])))
        raise FixedPointError(
            "subordination fixed point stalled at %d points" % pending.size,
            residual=worst, iterations=iters)
    final_res = np.abs(phi(z, w) - w)
    if shape:
        return w.reshape(shape), iters, final_res.reshape(shape)
    return complex(w[0]), iters, float(final_res[0])


def subordination_omega(mu: Measure, n: int, z, tol_fp: float = TOL_FIXED_POINT,
                        max_iter: int = 10_000) -> SubordinationResult:
    """Single-point subordination solve in the unnormalized variable Z."""
    n = _require_power(n)
    _require_standardized(mu)
    z = complex(z)
    if z.imag <= 0:
        raise InvalidArgumentError("subordination requires Im z > 0")
    w, iters, res = _omega_grid(mu, n, np.asarray(z), tol=tol_fp,
                                max_iter=max_iter)
    w = complex(w)
    if w.imag < z.imag * (1.0 - 1e-12):
        raise ConsistencyError(
            f"subordination value lost height: Im omega = {w.imag:.3e} "
            f"< Im z = {z.imag:.3e}")
    return SubordinationResult(w, iters, float(np.max(res)))


def clt_cauchy(mu: Measure, n: int, z):
    """Cauchy transform of the normalized n-th power at complex z (Im z > 0)."""
    n = _require_power(n)
    _require_standardized(mu)
    z_arr = np.asarray(z, dtype=complex)
    if np.any(z_arr.imag <= 0):
        raise InvalidArgumentError("transform requires Im z > 0")
    if n == 1:
        return cauchy(mu, z_arr)
    rt = math.sqrt(n)
    w, _, _ = _omega_grid(mu, n, rt * z_arr)
    out = rt * cauchy(mu, w)
    return out if np.ndim(out) else complex(out)


def clt_density_subordination(mu: Measure, n: int, grid_points: int = 801,
                              eps_top: float = DEFAULT_EPS, levels: int = 6,
                              tau: float = 1e-7) -> CltDensity:
    """Density of the normalized n-th power via extrapolated boundary values."""
    n = _require_power(n)
    _require_standardized(mu)
    if n == 1:
        return _seed_only(mu, "subordination")
    atoms = atoms_of_power(mu, n)
    rt = math.sqrt(n)
    max_iters = 0
    max_res = 0.0

    def transform_ac(z: np.ndarray) -> np.ndarray:
        nonlocal max_iters, max_res
        z = np.asarray(z, dtype=complex)
        w, iters, res = _omega_grid(mu, n, rt * z)
        max_iters = max(max_iters, iters)
        max_res = max(max_res, float(np.max(res)))
        out = rt * cauchy(mu, w)
        for a in atoms:
            out = out - a.w / (z - a.x)
        return out

    def boundary_density(x: np.ndarray, eps: float) -> np.ndarray:
        return -np.imag(transform_ac(x + 1j * eps)) / np.pi + 0.0 * x

    # superconvergence keeps the support inside [-2 - L, 2 + L] already at
    # n = 2; scan a bit wider to be safe for n = 1-adjacent cases
    seed_lo, seed_hi = mu.support()
    span = 2.0 + max(abs(seed_lo), abs(seed_hi)) + 1.0
    interval = find_support_interval(boundary_density, -span, span, tau=tau,
                                     scan_points=2001)
    if interval is None:
        raise ConsistencyError("no continuous part found for the power")
    # threshold detection locates a bounded edge well but overshoots a
    # power-law singular edge (the off-support skin decays too slowly);
    # snap each edge to the nearest critical value of the real fold map,
    # which pins it to machine precision
    cands = _edge_candidates(mu, n)
    a = _refine_edge(interval[0], cands, window=0.02)
    b = _refine_edge(interval[1], cands, window=0.02)
    k = np.arange(grid_points)
    x = np.sort(0.5 * (a + b) - 0.5 * (b - a)
                * np.cos(np.pi * (k + 0.5) / grid_points))
    dist = np.minimum(x - a, b - x)
    sched = InversionSchedule.geometric(start=eps_top, ratio=0.5, levels=levels)
    inv = stieltjes_invert(transform_ac, x, heights=sched.anchored(dist))
    tab = build_table(x, inv.values, support=(a, b), edge_orders="fit",
                      expected_mass=None)
    mass, mean, var = tab.moments()
    e2 = mass * (var + mean ** 2)
    e1 = mass * mean
    for at in atoms:
        mass += at.w
        e1 += at.w * at.x
        e2 += at.w * at.x ** 2
    return CltDensity(n, "subordination", atoms, (tab,), mass, e1,
                      e2 - e1 ** 2, residual=max_res, iterations=max_iters)


# -- consistency and structure checks ----------------------------------------

def cross_check(mu: Measure, n: int, probe_points: int = 257) -> dict:
    """Compare the two routes pointwise; they share no numerics.

    Returns sup and mean absolute density differences on a probe grid plus
    the moment gaps.  Raises nothing by itself; callers decide thresholds.
    """
    d1 = clt_density_flow(mu, n)
    d2 = clt_density_subordination(mu, n)
    lo = min(d1.support()[0], d2.support()[0]) - 0.05
    hi = max(d1.support()[1], d2.support()[1]) + 0.05
    x = np.linspace(lo, hi, probe_points)
    p1 = d1.density(x)
    p2 = d2.density(x)
    # exclude singular-edge neighborhoods from the sup when present
    weight = np.ones_like(x, dtype=bool)
    for tab in d1.tables + d2.tables:
        aa, bb = tab.support
        al, ar = tab.edge_orders
        if al is not None and al < 0:
            weight &= ~(np.abs(x - aa) < 0.02)
        if ar is not None and ar < 0:
            weight &= ~(np.abs(x - bb) < 0.02)
    diff = np.abs(p1 - p2)
    return {
        "n": n,
        "sup_diff": float(np.max(diff[weight])),
        "mean_diff": float(np.mean(diff)),
        "mass_diff": abs(d1.mass - d2.mass),
        "mean_gap": abs(d1.mean - d2.mean),
        "variance_gap": abs(d1.variance - d2.variance),
    }


def tail_bound_check(mu: Measure, n: int, eps: float = 0.05,
                     constant: float = 72.0, samples: int = 2000) -> dict:
    """Decay inequality for the power with index n+1 near the spectral edge.

    Along the flow curve of the (n+1)-st power, at image points x = psi(u)
    with |x| > 2 - 2*eps, the density obeys
        pi * p(x) <= constant * v(u) / (1 + |x|)^2,
    for n >= 3 and eps in (0, 1/10).  Returns the worst ratio and where.
    """
    n = _require_power(n)
    if n < 3:
        raise InvalidArgumentError("tail bound applies for n >= 3")
    if not (0.0 < eps < 0.1):
        raise InvalidArgumentError("eps must lie in (0, 1/10)")
    m = n + 1
    dens = clt_density_flow(mu, m, points_per_region=801)
    curve = dens.curve
    sel = np.abs(curve.psi) > 2.0 - 2.0 * eps
    x, p, _ = _quotient_values(curve, sel)
    v = curve.v[sel]
    lhs = np.pi * p
    rhs = constant * v / (1.0 + np.abs(x)) ** 2
    finite = np.isfinite(lhs)
    ratio = np.zeros_like(lhs)
    pos = finite & (rhs > 0)
    ratio[pos] = lhs[pos] / rhs[pos]
    worst = float(np.max(ratio)) if ratio.size else 0.0
    where = float(x[np.argmax(ratio)]) if ratio.size else math.nan
    return {"n": n, "power": m, "ok": bool(worst <= 1.0 + 1e-9),
            "max_ratio": worst, "at_x": where,
            "points_checked": int(np.count_nonzero(sel))}


def support_check(dens: CltDensity, mu: Measure,
                  tol_support: float = 1e-6) -> dict:
    """Support containment: the n-th power lives in [-2 - L/sqrt(n), 2 + L/sqrt(n)]
    where L bounds the seed support.  Reports the mass found outside."""
    lo, hi = mu.support()
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return {"n": dens.n, "ok": None, "bound": math.nan,
                "outside_mass": math.nan, "support": (lo, hi),
                "notice": "seed support unbounded; check skipped"}
    L = max(abs(lo), abs(hi))
    bound = 2.0 + L / math.sqrt(dens.n)
    s_lo, s_hi = dens.support()
    outside = 0.0
    for at in dens.atoms:
        if abs(at.x) > bound:
            outside += at.w
    for tab in dens.tables:
        x, w = tab.quad_nodes(4096)
        outside += float(np.sum(w[np.abs(x) > bound]))
    ok = outside < tol_support
    return {"n": dens.n, "ok": bool(ok), "bound": bound,
            "outside_mass": outside, "support": (s_lo, s_hi)}


def range_containment_check(mu: Measure, n: int, eta: float,
                            samples: int = 801) -> dict:
    """Containment of the flow image: psi([-1 + eta, 1 - eta]) inside
    [-2 + eta, 2 - eta] for the kernel of the n-th power, eta in (0, 1)."""
    n = _require_power(n)
    _require_standardized(mu)
    if not (0.0 < eta < 1.0):
        raise InvalidArgumentError("eta must lie in (0, 1)")
    if n < 2:
        raise InvalidArgumentError("containment check needs n >= 2")
    nu = companion_measure(mu)
    nu_s = dilate(nu, 1.0 / math.sqrt(n))
    kernel = FlowKernel(nu_s, (n - 1) / n)
    u = np.linspace(-1.0 + eta, 1.0 - eta, samples)
    _, psi = flow_map(kernel, u)
    worst = float(np.max(np.abs(psi)))
    return {"n": n, "eta": eta, "ok": bool(worst <= 2.0 - eta),
            "max_abs_psi": worst, "bound": 2.0 - eta}
