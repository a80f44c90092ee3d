"""Probability measures on the real line and the shared quadrature engine.

A measure is a finite list of atoms plus at most one absolutely continuous
component.  The ac component is either a named family (semicircle, arcsine,
uniform) with closed-form density, or a tabulated density on a compact
interval.  Tabulated densities carry endpoint-exponent annotations so that
integration can apply the matching substitution at soft or singular edges.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate as _sciint
from scipy.interpolate import CubicSpline

from .errors import (
    DegenerateMeasureError,
    DivergenceError,
    InvalidArgumentError,
    InvalidSpecError,
    QuadratureError,
)

# Default tolerances.  All are overridable through function arguments.
TOL_MASS = 1e-8          # mass gate for exactly representable measures
TOL_MOMENT = 1e-8        # mean gate; variance gate is 10x this
TOL_QUAD = 1e-10         # absolute quadrature target
TABLE_MASS_TOL = 1e-5    # refined mass gate for tabulated components
TRAPEZOID_MASS_TOL = 2e-3  # coarse trapezoid sanity gate for tables

_EDGE_SNAP = (-0.5, 0.0, 0.5, 1.0, 1.5)
_ATOM_SEP = 1e-12        # minimum distance between distinct atom locations


@lru_cache(maxsize=32)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gauss_theta_nodes(a: float, b: float, n: int):
    """Gauss-Legendre nodes for integrals over [a, b] in the angle variable.

    With x = c + r*cos(theta) the integral of f(x) p(x) dx becomes
    int f(x(theta)) p(x(theta)) r sin(theta) dtheta, whose integrand stays
    bounded for endpoint exponents >= -1/2.  Returns (x_nodes, jacobians)
    where jacobians = r*sin(theta)*w; multiply by density values to get
    plain quadrature weights against dx.
    """
    c, r = 0.5 * (a + b), 0.5 * (b - a)
    s, w = _leggauss(n)
    theta = 0.5 * np.pi * (s + 1.0)
    x = c + r * np.cos(theta)
    jac = r * np.sin(theta) * (0.5 * np.pi * w)
    order = np.argsort(x)
    return x[order], jac[order]


def fit_edge_order(dist: np.ndarray, values: np.ndarray) -> Optional[float]:
    """Least-squares exponent of values ~ C * dist**alpha, or None if unusable."""
    m = (dist > 0) & (values > 0) & np.isfinite(values)
    if np.count_nonzero(m) < 4:
        return None
    ld, lv = np.log(dist[m]), np.log(values[m])
    A = np.vstack([ld, np.ones_like(ld)]).T
    sol, *_ = np.linalg.lstsq(A, lv, rcond=None)
    return float(sol[0])


def _snap_edge_order(alpha: Optional[float]) -> Optional[float]:
    if alpha is None:
        return None
    for target in _EDGE_SNAP:
        if abs(alpha - target) < 0.22:
            return target
    if alpha > 1.75:
        return alpha  # smooth high-order vanishing, keep raw fit
    return alpha


@dataclass(frozen=True)
class Atom:
    x: float
    w: float


@dataclass(frozen=True, eq=False)
class DensityTable:
    """Tabulated density on a compact interval.

    grid         strictly increasing sample points inside [support]
    values       nonnegative density samples
    support      (a, b); may extend slightly past the grid when an edge
                 exponent is negative (the density diverges at that edge)
    edge_orders  (alpha_left, alpha_right): density ~ C*dist**alpha near the
                 matching endpoint; None means unannotated
    expected_mass  target total mass, or None to skip the mass gates
    """

    grid: np.ndarray
    values: np.ndarray
    support: Tuple[float, float]
    edge_orders: Tuple[Optional[float], Optional[float]] = (None, None)
    expected_mass: Optional[float] = 1.0

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise InvalidSpecError("table grid and values must be equal-length 1d arrays")
        if not np.all(np.isfinite(grid)) or not np.all(np.isfinite(values)):
            raise InvalidSpecError("table entries must be finite")
        if np.any(np.diff(grid) <= 0):
            raise InvalidSpecError("table grid must be strictly increasing")
        if np.any(values < 0):
            raise InvalidSpecError("table density values must be nonnegative")
        a, b = self.support
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise InvalidSpecError("table support must be a finite interval")
        if grid[0] < a - 1e-12 or grid[-1] > b + 1e-12:
            raise InvalidSpecError("table grid must lie inside its support")
        for alpha in self.edge_orders:
            if alpha is not None and alpha <= -1.0:
                raise DivergenceError("endpoint exponent <= -1 is not integrable")
        if self.expected_mass is not None:
            trap = float(np.trapezoid(values, grid))
            slack = TRAPEZOID_MASS_TOL + self._edge_mass_allowance()
            if any(alpha is not None and alpha < 0 for alpha in self.edge_orders):
                slack += 0.05  # trapezoid is biased near a diverging edge
            if abs(trap - self.expected_mass) > slack:
                raise InvalidSpecError(
                    "table trapezoid mass %.6g is far from expected %.6g"
                    % (trap, self.expected_mass))
            mass = self.mass()
            if abs(mass - self.expected_mass) > TABLE_MASS_TOL * max(1.0, abs(self.expected_mass)):
                raise InvalidSpecError(
                    "table mass %.10g deviates from expected %.10g beyond %.1e"
                    % (mass, self.expected_mass, TABLE_MASS_TOL))

    def _edge_mass_allowance(self) -> float:
        # Trapezoid misses mass near a diverging endpoint; widen the sanity
        # gate in proportion to the unresolved edge integral.
        allow = 0.0
        a, b = self.support
        for side, alpha in zip((0, 1), self.edge_orders):
            if alpha is not None and alpha < 0:
                d = (self.grid[0] - a) if side == 0 else (b - self.grid[-1])
                edge_val = self.values[0] if side == 0 else self.values[-1]
                allow += 2.0 * edge_val * max(d, 0.0) / (1.0 + alpha)
        return allow

    # -- evaluation -----------------------------------------------------

    def _edge_factor(self, x: np.ndarray) -> np.ndarray:
        a, b = self.support
        alpha_l, alpha_r = self.edge_orders
        phi = np.ones_like(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            if alpha_l:
                phi = phi * np.maximum(x - a, 0.0) ** alpha_l
            if alpha_r:
                phi = phi * np.maximum(b - x, 0.0) ** alpha_r
        return phi

    def _reduced_spline(self):
        cached = self.__dict__.get("_spline_cache")
        if cached is not None:
            return cached
        phi = self._edge_factor(self.grid)
        keep = np.isfinite(phi) & (phi > 0)
        xs, qs = self.grid[keep], self.values[keep] / phi[keep]
        if xs.size >= 8:
            spline = CubicSpline(xs, qs, bc_type="not-a-knot", extrapolate=True)
        else:
            spline = lambda t: np.interp(t, xs, qs)  # degenerate small table
        object.__setattr__(self, "_spline_cache", spline)
        return spline

    def density(self, x) -> np.ndarray:
        """Interpolated density, zero outside the support."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        a, b = self.support
        inside = (x >= a) & (x <= b)
        if np.any(inside):
            xi = x[inside]
            q = np.asarray(self._reduced_spline()(xi), dtype=float)
            out[inside] = np.maximum(q * self._edge_factor(xi), 0.0)
        return out

    # -- integration ----------------------------------------------------

    def quad_nodes(self, n: int = 2048):
        """Quadrature nodes (x, w) with sum w*f(x) ~ int f(x) p(x) dx."""
        x, jac = gauss_theta_nodes(self.support[0], self.support[1], n)
        return x, jac * self.density(x)

    def mass(self) -> float:
        x, w = self.quad_nodes(4096)
        return float(np.sum(w))

    def moments(self) -> Tuple[float, float, float]:
        """(mass, mean, variance) of the tabulated component alone."""
        x, w = self.quad_nodes(4096)
        m0 = float(np.sum(w))
        m1 = float(np.sum(w * x))
        m2 = float(np.sum(w * x * x))
        if m0 <= 0:
            return m0, 0.0, 0.0
        mean = m1 / m0
        return m0, mean, m2 / m0 - mean ** 2

    # -- transforms of the table as a set -------------------------------

    def dilated(self, a: float) -> "DensityTable":
        if not (a > 0):
            raise InvalidArgumentError("dilation factor must be positive")
        return DensityTable(self.grid * a, self.values / a,
                            (self.support[0] * a, self.support[1] * a),
                            self.edge_orders, self.expected_mass)

    def translated(self, c: float) -> "DensityTable":
        return DensityTable(self.grid + c, self.values,
                            (self.support[0] + c, self.support[1] + c),
                            self.edge_orders, self.expected_mass)


def build_table(grid, values, support=None, edge_orders="fit",
                expected_mass: Optional[float] = 1.0) -> DensityTable:
    """Construct a DensityTable, fitting endpoint exponents when requested."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if support is None:
        support = (float(grid[0]), float(grid[-1]))
    if edge_orders == "fit":
        k = min(10, grid.size // 4)
        left = _snap_edge_order(fit_edge_order(grid[:k] - support[0], values[:k]))
        right = _snap_edge_order(fit_edge_order(support[1] - grid[-k:], values[-k:]))
        edge_orders = (left, right)
    return DensityTable(grid, values, support, tuple(edge_orders), expected_mass)


# -- named families ------------------------------------------------------

@dataclass(frozen=True)
class SemicircleFamily:
    """Semicircle distribution with given variance, optionally off-center."""

    variance: float
    center: float = 0.0

    def __post_init__(self):
        if not (self.variance > 0 and np.isfinite(self.variance)):
            raise InvalidSpecError("semicircle variance must be positive and finite")

    @property
    def support(self) -> Tuple[float, float]:
        r = 2.0 * math.sqrt(self.variance)
        return (self.center - r, self.center + r)

    @property
    def edge_orders(self):
        return (0.5, 0.5)

    mass = 1.0

    @property
    def mean(self):
        return self.center

    def density(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = self.variance
        y = x - self.center
        out = np.zeros_like(y)
        m = np.abs(y) <= 2.0 * math.sqrt(t)
        out[m] = np.sqrt(np.maximum(4.0 * t - y[m] ** 2, 0.0)) / (2.0 * np.pi * t)
        return out

    def quad_nodes(self, n: int = 2048):
        a, b = self.support
        x, jac = gauss_theta_nodes(a, b, n)
        return x, jac * self.density(x)

    def dilated(self, a: float) -> "SemicircleFamily":
        return SemicircleFamily(self.variance * a * a, self.center * a)

    def translated(self, c: float) -> "SemicircleFamily":
        return SemicircleFamily(self.variance, self.center + c)

    def to_table(self, n: int = 2001) -> DensityTable:
        a, b = self.support
        grid = _chebyshev_extrema(a, b, n)
        return DensityTable(grid, self.density(grid), (a, b), (0.5, 0.5), 1.0)


@dataclass(frozen=True)
class ArcsineFamily:
    """Arcsine distribution on [a, b]: density 1/(pi sqrt((x-a)(b-x)))."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise InvalidSpecError("arcsine interval must be finite with a < b")

    @property
    def support(self):
        return (self.a, self.b)

    @property
    def edge_orders(self):
        return (-0.5, -0.5)

    mass = 1.0

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)

    def density(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        m = (x > self.a) & (x < self.b)
        out[m] = 1.0 / (np.pi * np.sqrt((x[m] - self.a) * (self.b - x[m])))
        return out

    def quad_nodes(self, n: int = 2048):
        x, jac = gauss_theta_nodes(self.a, self.b, n)
        return x, jac * self.density(x)

    def dilated(self, s: float) -> "ArcsineFamily":
        return ArcsineFamily(self.a * s, self.b * s)

    def translated(self, c: float) -> "ArcsineFamily":
        return ArcsineFamily(self.a + c, self.b + c)

    def to_table(self, n: int = 2001) -> DensityTable:
        # exclude the exact endpoints where the density diverges
        c, r = 0.5 * (self.a + self.b), 0.5 * (self.b - self.a)
        theta = (np.arange(n) + 0.5) * np.pi / n
        grid = np.sort(c + r * np.cos(theta))
        return DensityTable(grid, self.density(grid), (self.a, self.b),
                            (-0.5, -0.5), 1.0)


@dataclass(frozen=True)
class UniformFamily:
    """Uniform distribution on [a, b]."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise InvalidSpecError("uniform interval must be finite with a < b")

    @property
    def support(self):
        return (self.a, self.b)

    @property
    def edge_orders(self):
        return (0.0, 0.0)

    mass = 1.0

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)

    def density(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        out[(x >= self.a) & (x <= self.b)] = 1.0 / (self.b - self.a)
        return out

    def quad_nodes(self, n: int = 2048):
        x, jac = gauss_theta_nodes(self.a, self.b, n)
        return x, jac * self.density(x)

    def dilated(self, s: float) -> "UniformFamily":
        return UniformFamily(self.a * s, self.b * s)

    def translated(self, c: float) -> "UniformFamily":
        return UniformFamily(self.a + c, self.b + c)

    def to_table(self, n: int = 2001) -> DensityTable:
        grid = np.linspace(self.a, self.b, n)
        return DensityTable(grid, self.density(grid), (self.a, self.b),
                            (0.0, 0.0), 1.0)


AcPart = Union[SemicircleFamily, ArcsineFamily, UniformFamily, DensityTable]


def _chebyshev_extrema(a: float, b: float, n: int) -> np.ndarray:
    k = np.arange(n)
    return np.sort(0.5 * (a + b) - 0.5 * (b - a) * np.cos(np.pi * k / (n - 1)))


def ac_moments(ac: AcPart) -> Tuple[float, float, float]:
    """(mass, mean, variance) of an ac component."""
    if isinstance(ac, SemicircleFamily):
        return 1.0, ac.center, ac.variance
    if isinstance(ac, ArcsineFamily):
        return 1.0, ac.mean, ((ac.b - ac.a) / 2.0) ** 2 / 2.0
    if isinstance(ac, UniformFamily):
        return 1.0, ac.mean, (ac.b - ac.a) ** 2 / 12.0
    return ac.moments()


# -- measures -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Measure:
    """Finite atoms plus at most one absolutely continuous component."""

    atoms: Tuple[Atom, ...] = ()
    ac: Optional[AcPart] = None

    def __post_init__(self):
        atoms = tuple(sorted(self.atoms, key=lambda a: a.x))
        object.__setattr__(self, "atoms", atoms)
        for a in atoms:
            if not (np.isfinite(a.x) and np.isfinite(a.w)):
                raise InvalidSpecError("atom entries must be finite")
            if not (0.0 < a.w <= 1.0 + 1e-12):
                raise InvalidSpecError("atom weights must lie in (0, 1]")
        xs = [a.x for a in atoms]
        if any(x2 - x1 < _ATOM_SEP for x1, x2 in zip(xs, xs[1:])):
            raise InvalidSpecError("atom locations must be strictly distinct")
        if self.ac is None and not atoms:
            raise InvalidSpecError("measure needs at least one atom or an ac part")

    @property
    def atom_mass(self) -> float:
        return float(sum(a.w for a in self.atoms))

    @property
    def ac_mass(self) -> float:
        if self.ac is None:
            return 0.0
        if isinstance(self.ac, DensityTable):
            return self.ac.expected_mass if self.ac.expected_mass is not None \
                else self.ac.mass()
        return 1.0

    def support(self) -> Tuple[float, float]:
        lo, hi = math.inf, -math.inf
        for a in self.atoms:
            lo, hi = min(lo, a.x), max(hi, a.x)
        if self.ac is not None:
            s = self.ac.support
            lo, hi = min(lo, s[0]), max(hi, s[1])
        return lo, hi

    def mean(self) -> float:
        m = sum(a.w * a.x for a in self.atoms)
        if self.ac is not None:
            mass, mu, _ = ac_moments(self.ac)
            m += mass * mu
        return float(m)

    def variance(self) -> float:
        e2 = sum(a.w * a.x ** 2 for a in self.atoms)
        if self.ac is not None:
            mass, mu, var = ac_moments(self.ac)
            e2 += mass * (var + mu ** 2)
        return float(e2 - self.mean() ** 2)

    def is_standardized(self, tol: float = 1e-7) -> bool:
        return abs(self.mean()) <= tol and abs(self.variance() - 1.0) <= 10 * tol


def _check_mass(m: Measure, tol: float) -> None:
    total = m.atom_mass + (0.0 if m.ac is None else
                           (m.ac.mass() if isinstance(m.ac, DensityTable) else 1.0))
    if abs(total - 1.0) > tol:
        raise InvalidSpecError(
            "measure mass %.12g deviates from 1 beyond %.1e "
            "(mass is checked, never silently renormalized)" % (total, tol))


_SPEC_KEYS = {"atoms", "density", "standardize"}
_FAMILY_PARAMS = {
    "semicircle": {"variance", "center"},
    "arcsine": {"a", "b"},
    "uniform": {"a", "b"},
}


def _family_from_spec(d: dict) -> AcPart:
    kind = d.get("family")
    params = d.get("params", {})
    if kind not in _FAMILY_PARAMS:
        raise InvalidSpecError("unknown density family %r" % (kind,))
    if not isinstance(params, dict):
        raise InvalidSpecError("density params must be an object")
    unknown = set(params) - _FAMILY_PARAMS[kind]
    if unknown:
        raise InvalidSpecError("unknown %s params: %s" % (kind, sorted(unknown)))
    try:
        if kind == "semicircle":
            return SemicircleFamily(float(params["variance"]),
                                    float(params.get("center", 0.0)))
        if kind == "arcsine":
            return ArcsineFamily(float(params["a"]), float(params["b"]))
        return UniformFamily(float(params["a"]), float(params["b"]))
    except KeyError as e:
        raise InvalidSpecError("missing density param %s" % (e,)) from None


def make_measure(spec: dict, mass_tol: float = TOL_MASS) -> Measure:
    """Build a validated Measure from a plain-dict specification.

    Schema: {"atoms": [{"x": f, "w": f}, ...],
             "density": {"family": ..., "params": {...}} or {"table": [[x, p], ...]},
             "standardize": bool}
    All fields optional but at least one component required.  Unknown fields
    are rejected.  Mass is checked against 1, never renormalized.
    """
    if not isinstance(spec, dict):
        raise InvalidSpecError("measure spec must be an object")
    unknown = set(spec) - _SPEC_KEYS
    if unknown:
        raise InvalidSpecError("unknown measure spec fields: %s" % sorted(unknown))
    atoms = []
    for entry in spec.get("atoms", []):
        if not isinstance(entry, dict) or set(entry) != {"x", "w"}:
            raise InvalidSpecError("each atom must be an object with exactly x and w")
        atoms.append(Atom(float(entry["x"]), float(entry["w"])))
    ac = None
    dens = spec.get("density")
    if dens is not None:
        if not isinstance(dens, dict):
            raise InvalidSpecError("density must be an object")
        if "family" in dens:
            unknown = set(dens) - {"family", "params"}
            if unknown:
                raise InvalidSpecError("unknown density fields: %s" % sorted(unknown))
            ac = _family_from_spec(dens)
        elif "table" in dens:
            unknown = set(dens) - {"table"}
            if unknown:
                raise InvalidSpecError("unknown density fields: %s" % sorted(unknown))
            rows = np.asarray(dens["table"], dtype=float)
            if rows.ndim != 2 or rows.shape[1] != 2:
                raise InvalidSpecError("table must be a list of [x, p] pairs")
            atom_mass = sum(a.w for a in atoms)
            ac = build_table(rows[:, 0], rows[:, 1],
                             expected_mass=1.0 - atom_mass)
        else:
            raise InvalidSpecError("density needs either a family or a table")
    m = Measure(tuple(atoms), ac)
    if isinstance(ac, DensityTable):
        _check_mass(m, max(mass_tol, TABLE_MASS_TOL))
    else:
        _check_mass(m, mass_tol)
    if spec.get("standardize", False):
        m = standardize(m)
    return m


def measure_from_json(text_or_path: str, mass_tol: float = TOL_MASS) -> Measure:
    """Load a measure spec from a JSON string or a path to a JSON file."""
    text = text_or_path
    if not text_or_path.lstrip().startswith("{"):
        try:
            with open(text_or_path, "r") as fh:
                text = fh.read()
        except OSError as e:
            raise InvalidSpecError("cannot read measure file: %s" % e) from None
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidSpecError("invalid JSON: %s" % e) from None
    return make_measure(spec, mass_tol=mass_tol)


# -- operations ------------------------------------------------------------

def moment(m: Measure, k: int) -> float:
    """First moment (k=1) or centered second moment (k=2)."""
    if k == 1:
        return m.mean()
    if k == 2:
        return m.variance()
    raise InvalidArgumentError("moment order must be 1 or 2")


def translate(m: Measure, c: float) -> Measure:
    atoms = tuple(Atom(a.x + c, a.w) for a in m.atoms)
    ac = None if m.ac is None else m.ac.translated(c)
    return Measure(atoms, ac)


def dilate(m: Measure, a: float) -> Measure:
    """Pushforward under x -> a*x (a > 0).  Variance scales by a**2."""
    if not (np.isfinite(a) and a > 0):
        raise InvalidArgumentError("dilation factor must be positive and finite")
    atoms = tuple(Atom(at.x * a, at.w) for at in m.atoms)
    ac = None if m.ac is None else m.ac.dilated(a)
    return Measure(atoms, ac)


def standardize(m: Measure) -> Measure:
    """Translate to mean zero, then dilate to unit variance."""
    mu = m.mean()
    var = m.variance()
    if not np.isfinite(var) or var <= 1e-14:
        raise DegenerateMeasureError("cannot standardize a point mass")
    if abs(mu) <= 1e-14 and abs(var - 1.0) <= 1e-14:
        return m
    return dilate(translate(m, -mu), 1.0 / math.sqrt(var))


def _quad_panel(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                tol: float) -> Tuple[float, float]:
    # Substitute s = sqrt(x - end) at both ends; absorbs any integrable
    # algebraic endpoint behavior with exponent > -1.
    mid = 0.5 * (lo + hi)
    total, err = 0.0, 0.0
    for left in (True, False):
        end = lo if left else hi
        width = abs(mid - end)
        smax = math.sqrt(width)

        def g(s, end=end, left=left):
            x = end + s * s if left else end - s * s
            return f(x) * 2.0 * s

        val, e = _sciint.quad(g, 0.0, smax, epsabs=0.5 * tol, epsrel=1e-12,
                              limit=200)
        total += val
        err += abs(e)
    return total, err


def integrate(m: Measure, kernel: Callable, singular_points: Sequence[float] = (),
              tol: float = TOL_QUAD) -> float:
    """Integral of kernel against the measure.

    The kernel must be finite on the support except at declared singular
    points; an undeclared singularity raises QuadratureError.  Atom
    contributions are summed in ascending location order.
    """
    def probe(x: float):
        try:
            v = kernel(x)
        except (ZeroDivisionError, FloatingPointError, OverflowError):
            return math.nan
        return v

    total = 0.0
    is_complex = False
    for a in m.atoms:  # atoms are kept sorted ascending
        val = probe(a.x)
        if not np.all(np.isfinite([np.real(val), np.imag(val)])):
            raise QuadratureError("kernel not finite at atom x=%g" % a.x)
        is_complex = is_complex or bool(np.iscomplexobj(val))
        total += a.w * val
    if m.ac is None:
        return complex(total) if is_complex else float(total)

    lo, hi = m.ac.support
    dens = m.ac.density
    singular = sorted(float(s) for s in singular_points)
    for end in (lo, hi):
        val = probe(end)
        if not np.all(np.isfinite([np.real(val), np.imag(val)])) and \
                not any(abs(end - s) < 1e-12 for s in singular):
            raise QuadratureError(
                "kernel singular at support endpoint x=%g; declare it" % end)

    breaks = [lo] + [s for s in singular if lo < s < hi] + [hi]

    def run(fn) -> float:
        out, err = 0.0, 0.0
        for p_lo, p_hi in zip(breaks, breaks[1:]):
            v, e = _quad_panel(fn, p_lo, p_hi, tol)
            out += v
            err += e
        if not np.isfinite(out) or err > max(tol * 10.0, 1e-12 * abs(out)):
            raise QuadratureError("quadrature residual %.3g exceeds tolerance"
                                  % err, residual=err)
        return out

    probe = kernel(0.5 * (lo + hi))
    if np.iscomplexobj(probe):
        re = run(lambda x: dens(x)[0] * np.real(kernel(x)))
        im = run(lambda x: dens(x)[0] * np.imag(kernel(x)))
        return complex(total) + complex(re, im)
    ac_val = run(lambda x: dens(x)[0] * kernel(x))
    result = total + ac_val
    return complex(result) if is_complex else float(result)
