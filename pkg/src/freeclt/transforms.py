"""Cauchy transforms, boundary-value inversion, and companion recovery.

Conventions: the Cauchy transform of a probability measure is
G(z) = int d mu(x) / (z - x), analytic on the open upper half-plane with
Im G < 0 there and z*G(z) -> 1 at infinity.  Densities are recovered from
boundary values via p(x) = -Im G(x + i0) / pi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import (
    CompanionRecoveryError,
    DomainError,
    InvalidArgumentError,
    InversionError,
)
from .measures import (
    Atom,
    ArcsineFamily,
    DensityTable,
    Measure,
    SemicircleFamily,
    UniformFamily,
    build_table,
    gauss_theta_nodes,
)

_TABLE_NODES = 4096       # quadrature size for transforms of tabulated parts
_ATOM_SCAN_EPS = 1e-4     # imaginary offset for the atom-detection sweep
_ATOM_SCAN_THRESHOLD = 0.2  # eps*|G| level that flags a point-mass candidate
_COMPANION_MASS_TOL = 2e-6  # recovered-component mass budget


def sqrt_upper(w):
    """Square root with values in the closed upper half-plane.

    Branch cut along [0, inf): sqrt_upper(-1) = i, and for w approaching the
    positive real axis from below the value approaches -sqrt(|w|).
    """
    w = np.asarray(w, dtype=complex)
    s = np.sqrt(w)
    return np.where(s.imag < 0.0, -s, s)


def _require_upper(z: np.ndarray) -> None:
    if np.any(z.imag <= 0.0):
        raise DomainError("Cauchy transform requires Im z > 0")


def semicircle_cauchy(variance: float, z, center: float = 0.0):
    """Cauchy transform of the semicircle law, on the closed upper half-plane.

    Real arguments get the boundary value: inside the support the imaginary
    part equals -pi times the density; outside it the value is real.
    """
    if not (variance > 0 and np.isfinite(variance)):
        raise InvalidArgumentError("semicircle variance must be positive")
    t = float(variance)
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag < 0.0):
        raise DomainError("semicircle transform requires Im z >= 0")
    y = z - center
    edge = 2.0 * math.sqrt(t)
    out = np.empty_like(y)
    on_axis = y.imag == 0.0
    if np.any(on_axis):
        x = y[on_axis].real
        val = np.empty(x.shape, dtype=complex)
        inside = np.abs(x) <= edge
        val[inside] = (x[inside] - 1j * np.sqrt(4.0 * t - x[inside] ** 2)) / (2.0 * t)
        # rationalized forms: the naive (x -+ sqrt(x^2 - 4t))/2t cancels
        # catastrophically for |x| >> sqrt(t), these denominators never do
        right = x > edge
        val[right] = 2.0 / (x[right] + np.sqrt(x[right] ** 2 - 4.0 * t))
        left = x < -edge
        val[left] = 2.0 / (x[left] - np.sqrt(x[left] ** 2 - 4.0 * t))
        out[on_axis] = val
    off = ~on_axis
    if np.any(off):
        w = y[off]
        # Re sqrt_upper(w^2 - 4t) carries the sign of Re w on Im w > 0, so
        # the sum below never cancels; equals (w - sqrt_upper(...))/2t exactly
        out[off] = 2.0 / (w + sqrt_upper(w * w - 4.0 * t))
    return out if out.ndim else complex(out)


def _atoms_cauchy(atoms: Sequence[Atom], z: np.ndarray) -> np.ndarray:
    out = np.zeros_like(z)
    for a in atoms:
        out += a.w / (z - a.x)
    return out


def _table_cauchy(tab: DensityTable, z: np.ndarray) -> np.ndarray:
    # Subtract the density value at the projected real part so that the
    # quadrature integrand stays bounded when z approaches the support.
    a, b = tab.support
    xq, jac = gauss_theta_nodes(a, b, _TABLE_NODES)
    pq = tab.density(xq)
    flat = z.ravel()
    out = np.empty(flat.shape, dtype=complex)
    xstar = np.clip(flat.real, a, b)
    pstar = tab.density(xstar)
    for lo in range(0, flat.size, 256):
        sl = slice(lo, min(lo + 256, flat.size))
        zz = flat[sl, None]
        diff = pq[None, :] - pstar[sl, None]
        out[sl] = np.sum(jac[None, :] * diff / (zz - xq[None, :]), axis=1)
    out += pstar * np.log((flat - a) / (flat - b))
    return out.reshape(z.shape)


def _table_cauchy_derivative(tab: DensityTable, z: np.ndarray) -> np.ndarray:
    a, b = tab.support
    xq, jac = gauss_theta_nodes(a, b, _TABLE_NODES)
    pq = tab.density(xq)
    flat = z.ravel()
    out = np.empty(flat.shape, dtype=complex)
    xstar = np.clip(flat.real, a, b)
    pstar = tab.density(xstar)
    for lo in range(0, flat.size, 256):
        sl = slice(lo, min(lo + 256, flat.size))
        zz = flat[sl, None]
        diff = pq[None, :] - pstar[sl, None]
        out[sl] = -np.sum(jac[None, :] * diff / (zz - xq[None, :]) ** 2, axis=1)
    out += pstar * (1.0 / (flat - a) - 1.0 / (flat - b))
    return out.reshape(z.shape)


def cauchy(m: Measure, z):
    """Cauchy transform of a measure on the open upper half-plane."""
    z_arr = np.asarray(z, dtype=complex)
    _require_upper(z_arr)
    out = _atoms_cauchy(m.atoms, z_arr)
    ac = m.ac
    if isinstance(ac, SemicircleFamily):
        out = out + semicircle_cauchy(ac.variance, z_arr, center=ac.center)
    elif isinstance(ac, ArcsineFamily):
        # principal-branch factors each map the upper half-plane into the
        # first quadrant, so the product has positive imaginary part
        out = out + 1.0 / (np.sqrt(z_arr - ac.a) * np.sqrt(z_arr - ac.b))
    elif isinstance(ac, UniformFamily):
        out = out + np.log((z_arr - ac.a) / (z_arr - ac.b)) / (ac.b - ac.a)
    elif isinstance(ac, DensityTable):
        out = out + _table_cauchy(ac, z_arr)
    return out if out.ndim else complex(out)


def cauchy_derivative(m: Measure, z):
    """d/dz of the Cauchy transform, same domain conventions as cauchy()."""
    z_arr = np.asarray(z, dtype=complex)
    _require_upper(z_arr)
    out = np.zeros_like(z_arr)
    for a in m.atoms:
        out -= a.w / (z_arr - a.x) ** 2
    ac = m.ac
    if isinstance(ac, SemicircleFamily):
        t = ac.variance
        y = z_arr - ac.center
        out = out + (1.0 - y / sqrt_upper(y * y - 4.0 * t)) / (2.0 * t)
    elif isinstance(ac, ArcsineFamily):
        g = 1.0 / (np.sqrt(z_arr - ac.a) * np.sqrt(z_arr - ac.b))
        out = out - 0.5 * g * (1.0 / (z_arr - ac.a) + 1.0 / (z_arr - ac.b))
    elif isinstance(ac, UniformFamily):
        out = out + (1.0 / (z_arr - ac.a) - 1.0 / (z_arr - ac.b)) / (ac.b - ac.a)
    elif isinstance(ac, DensityTable):
        out = out + _table_cauchy_derivative(ac, z_arr)
    return out if out.ndim else complex(out)


def reciprocal_cauchy(m: Measure, z):
    """F(z) = 1/G(z); maps the upper half-plane into itself with Im F >= Im z."""
    return 1.0 / cauchy(m, z)


# -- boundary-value inversion ---------------------------------------------

@dataclass(frozen=True)
class InversionSchedule:
    """Decreasing ladder of imaginary offsets used for extrapolation to 0."""

    heights: Tuple[float, ...]

    def __post_init__(self):
        h = tuple(float(v) for v in self.heights)
        object.__setattr__(self, "heights", h)
        if len(h) < 2:
            raise InvalidArgumentError("schedule needs at least two heights")
        if any(b >= a for a, b in zip(h, h[1:])) or h[-1] <= 0.0:
            raise InvalidArgumentError("heights must be strictly decreasing and positive")
        if h[-1] < 1e-12:
            raise InvalidArgumentError("heights below 1e-12 lose all precision")

    @classmethod
    def geometric(cls, start: float = 1e-6, ratio: float = 0.5,
                  levels: int = 6) -> "InversionSchedule":
        if not (0.0 < ratio < 1.0):
            raise InvalidArgumentError("ratio must lie in (0, 1)")
        return cls(tuple(start * ratio ** k for k in range(levels)))

    def anchored(self, dist: np.ndarray, floor: float = 1e-9) -> np.ndarray:
        """Per-point ladder whose top is capped at dist/4 (extrapolation stays
        inside the local analyticity radius near support edges)."""
        dist = np.asarray(dist, dtype=float)
        start = np.minimum(self.heights[0], np.maximum(dist, 0.0) / 4.0)
        start = np.maximum(start, floor / (self.heights[-1] / self.heights[0]))
        ratios = np.asarray(self.heights) / self.heights[0]
        return np.maximum(ratios[:, None] * start[None, :], floor)


@dataclass(frozen=True)
class InversionResult:
    values: np.ndarray       # extrapolated density
    error: np.ndarray        # size of the last extrapolation correction
    raw_last: np.ndarray     # density at the smallest height, unextrapolated


def _neville_to_zero(eps: np.ndarray, table: np.ndarray):
    """Polynomial extrapolation of table (L, n) sampled at eps (L, n) to eps=0."""
    T = [table[k] for k in range(table.shape[0])]
    E = [eps[k] for k in range(eps.shape[0])]
    prev_top = T[0]
    for j in range(1, len(T)):
        before = T[0]
        for i in range(len(T) - j):
            T[i] = (E[i + j] * T[i] - E[i] * T[i + 1]) / (E[i + j] - E[i])
        prev_top = before
    # error estimate: change contributed by the final column
    return T[0], np.abs(T[0] - prev_top)


def stieltjes_invert(transform: Callable[[np.ndarray], np.ndarray], x,
                     schedule: Optional[InversionSchedule] = None,
                     heights: Optional[np.ndarray] = None,
                     tol_density: float = 1e-8) -> InversionResult:
    """Recover a density on a real grid from a Cauchy-transform callable.

    Samples -Im transform(x + i*eps)/pi on a decreasing ladder of eps and
    extrapolates polynomially to eps = 0.  Small negative values within the
    extrapolation noise floor are clamped to zero; distinctly negative values
    raise InversionError (they signal a wrong branch or a bad transform).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if heights is None:
        schedule = schedule or InversionSchedule.geometric()
        H = np.asarray(schedule.heights)[:, None] * np.ones((1, x.size))
    else:
        H = np.asarray(heights, dtype=float)
        if H.ndim == 1:
            H = H[:, None] * np.ones((1, x.size))
    P = np.empty_like(H)
    for k in range(H.shape[0]):
        P[k] = -np.imag(transform(x + 1j * H[k])) / np.pi
    values, err = _neville_to_zero(H, P)
    floor = np.maximum(tol_density, 3.0 * err)
    bad = values < -floor
    if np.any(bad):
        i = int(np.argmin(values))
        raise InversionError(
            "extrapolated density %.3g < 0 at x=%.6g" % (values[i], x[i]),
            x=float(x[i]))
    return InversionResult(np.maximum(values, 0.0), err, P[-1])


# -- companion recovery -----------------------------------------------------

def _companion_of_atomic(mu: Measure) -> Measure:
    """Exact companion when mu is purely atomic: G_nu = z - 1/G_mu is rational
    with one simple pole strictly between consecutive atoms of mu."""
    xs = np.array([a.x for a in mu.atoms])
    ws = np.array([a.w for a in mu.atoms])

    def g(x):
        return float(np.sum(ws / (x - xs)))

    def gprime(x):
        return float(-np.sum(ws / (x - xs) ** 2))

    roots = []
    for lo, hi in zip(xs, xs[1:]):
        gap = hi - lo
        d = 1e-9 * gap
        while g(lo + d) < 0 or g(hi - d) > 0:
            d *= 0.5
            if d < 1e-15 * gap:
                raise CompanionRecoveryError(
                    "cannot bracket reciprocal pole in (%g, %g)" % (lo, hi))
        roots.append(brentq(g, lo + d, hi - d, xtol=1e-15, rtol=8.9e-16))
    atoms = tuple(Atom(r, -1.0 / gprime(r)) for r in roots)
    mass = sum(a.w for a in atoms)
    if abs(mass - 1.0) > 1e-10:
        raise CompanionRecoveryError(
            "atomic companion mass %.12g differs from 1" % mass)
    return Measure(atoms, None)


def _bisect_to_threshold(f: Callable[[float], float], inner: float,
                         outer: float, tau: float, xtol: float = 1e-12) -> float:
    """Point between inner (f > tau) and outer (f <= tau) where f crosses tau."""
    fi, fo = f(inner), f(outer)
    if fi <= tau:
        return inner
    if fo > tau:
        return outer
    lo, hi = inner, outer
    while abs(hi - lo) > xtol:
        mid = 0.5 * (lo + hi)
        if f(mid) > tau:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


_EDGE_LADDER = (1e-7, 1e-9, 1e-11)


def find_support_interval(boundary_density: Callable[[np.ndarray, float], np.ndarray],
                          scan_lo: float, scan_hi: float, tau: float = 1e-7,
                          scan_points: int = 2001) -> Optional[Tuple[float, float]]:
    """Outer interval where the boundary density exceeds tau.

    boundary_density(x, eps) must return -Im G(x + i*eps)/pi.  Both the scan
    and the edge bisection use the minimum over a ladder of eps values: at a
    fixed eps the off-support tail decays only like eps/dist^k (k up to 3/2
    near a singular edge), which would inflate the detected support by as
    much as ~0.2; the ladder minimum kills the tail while leaving on-support
    values intact.
    """
    grid = np.linspace(scan_lo, scan_hi, scan_points)
    vals = np.min([np.asarray(boundary_density(grid, e)) for e in _EDGE_LADDER],
                  axis=0)
    above = np.nonzero(vals > tau)[0]
    if above.size == 0:
        return None
    i0, i1 = above[0], above[-1]

    def f(x: float) -> float:
        pt = np.array([x])
        return min(float(boundary_density(pt, e)[0]) for e in _EDGE_LADDER)

    left = grid[i0] if i0 == 0 else _bisect_to_threshold(f, grid[i0], grid[i0 - 1], tau)
    right = grid[i1] if i1 == len(grid) - 1 else _bisect_to_threshold(f, grid[i1], grid[i1 + 1], tau)
    return float(left), float(right)


def _scan_companion_atoms(g_nu: Callable[[np.ndarray], np.ndarray],
                          scan_lo: float, scan_hi: float) -> Tuple[Tuple[float, float], ...]:
    eps = _ATOM_SCAN_EPS
    grid = np.linspace(scan_lo, scan_hi, 4001)
    score = eps * np.abs(g_nu(grid + 1j * eps))
    found = []
    idx = np.nonzero((score > _ATOM_SCAN_THRESHOLD)
                     & (score >= np.roll(score, 1))
                     & (score >= np.roll(score, -1)))[0]
    for i in idx:
        lo = grid[max(i - 2, 0)]
        hi = grid[min(i + 2, grid.size - 1)]
        res = minimize_scalar(lambda x: -eps * abs(complex(g_nu(np.array([x + 1j * eps]))[0])),
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13})
        r = float(res.x)

        def mass_at(e):
            return float(-e * np.imag(g_nu(np.array([r + 1j * e]))[0]))

        w = 2.0 * mass_at(eps / 2.0) - mass_at(eps)  # kills the O(eps) term
        if w > 1e-8:
            found.append((r, w))
    merged = []
    for r, w in sorted(found):
        if merged and abs(r - merged[-1][0]) < 1e-8:
            continue
        merged.append((r, w))
    return tuple(merged)


def companion_measure(mu: Measure, tau: float = 1e-7,
                      grid_points: int = 801) -> Measure:
    """Recover the measure nu with 1/G_mu(z) = z - G_nu(z).

    Requires mu standardized (mean 0, variance 1); nu then has total mass 1
    and mean equal to the third moment of mu.  Purely atomic mu is handled in
    closed form; otherwise atoms of nu are detected by a near-axis sweep and
    the continuous part is recovered by extrapolated boundary inversion.
    """
    if not mu.is_standardized(1e-6):
        raise InvalidArgumentError(
            "companion recovery requires a standardized measure")
    if mu.ac is None:
        return _companion_of_atomic(mu)

    def g_nu(z):
        return np.asarray(z, dtype=complex) - 1.0 / cauchy(mu, z)

    lo, hi = mu.support()
    scan_lo, scan_hi = lo - 4.0, hi + 4.0
    atom_list = _scan_companion_atoms(g_nu, scan_lo, scan_hi)

    def g_ac(z):
        out = g_nu(z)
        for r, w in atom_list:
            out = out - w / (z - r)
        return out

    def boundary_density(x, eps):
        return -np.imag(g_ac(x + 1j * eps)) / np.pi + 0.0 * x

    interval = find_support_interval(boundary_density, scan_lo, scan_hi,
                                     tau=10.0 * tau)
    atom_mass = sum(w for _, w in atom_list)
    if interval is None:
        if abs(atom_mass - 1.0) > _COMPANION_MASS_TOL:
            raise CompanionRecoveryError(
                "companion atoms carry mass %.9g but no continuous part found"
                % atom_mass)
        total = atom_mass
        atoms = tuple(Atom(r, w / total) for r, w in atom_list)
        return Measure(atoms, None)

    a, b = interval
    k = np.arange(grid_points)
    x = np.sort(0.5 * (a + b) - 0.5 * (b - a) * np.cos(np.pi * (k + 0.5) / grid_points))
    dist = np.minimum(x - a, b - x)
    sched = InversionSchedule.geometric(start=1e-5, ratio=0.5, levels=8)
    inv = stieltjes_invert(g_ac, x, heights=sched.anchored(dist))
    tab = build_table(x, inv.values, support=(a, b), edge_orders="fit",
                      expected_mass=None)
    mass = tab.mass()
    if abs(atom_mass + mass - 1.0) > _COMPANION_MASS_TOL:
        raise CompanionRecoveryError(
            "companion mass %.9g (atoms %.3g + table %.9g) differs from 1"
            % (atom_mass + mass, atom_mass, mass))
    tab = DensityTable(tab.grid, tab.values, tab.support, tab.edge_orders,
                       expected_mass=mass)
    return Measure(tuple(Atom(r, w) for r, w in atom_list), tab)
