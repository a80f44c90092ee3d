"""Shared fixtures: seed measures, closed-form density oracles, and frozen
numerical pins.

The oracles below are independent closed forms (arcsine, Kesten-type
resolvent quotient, shifted-semicircle companion) used to judge the two
computational routes.  The pins are functional values frozen from runs of
the same quadrature machinery applied to the *closed-form* oracle tables,
so a regression in either the density construction or the functional
integrators moves a pinned value.
"""

import json
import math

import numpy as np
import pytest

from freeclt import make_measure
from freeclt.transforms import semicircle_cauchy

SQRT2 = math.sqrt(2.0)
LADDER = (4, 8, 16, 32, 64)


# -- seed measures -------------------------------------------------------------

@pytest.fixture(scope="session")
def bernoulli():
    """Symmetric two-atom seed at +/-1 (mean 0, variance 1)."""
    return make_measure(
        {"atoms": [{"x": -1.0, "w": 0.5}, {"x": 1.0, "w": 0.5}]})


@pytest.fixture(scope="session")
def asym():
    """Asymmetric two-atom seed at -sqrt(2) (w=1/3), 1/sqrt(2) (w=2/3)."""
    return make_measure(
        {"atoms": [{"x": -SQRT2, "w": 1.0 / 3.0},
                   {"x": 1.0 / SQRT2, "w": 2.0 / 3.0}]})


@pytest.fixture(scope="session")
def semicircle():
    return make_measure(
        {"density": {"family": "semicircle", "params": {"variance": 1.0}}})


BERNOULLI_SPEC = {"atoms": [{"x": -1.0, "w": 0.5}, {"x": 1.0, "w": 0.5}]}
ASYM_SPEC = {"atoms": [{"x": -SQRT2, "w": 1.0 / 3.0},
                       {"x": 1.0 / SQRT2, "w": 2.0 / 3.0}]}
SEMICIRCLE_SPEC = {"density": {"family": "semicircle",
                               "params": {"variance": 1.0}}}


@pytest.fixture()
def measure_file_factory(tmp_path):
    def write(spec, name="measure.json"):
        path = tmp_path / name
        path.write_text(json.dumps(spec))
        return str(path)
    return write


# -- closed-form density oracles -----------------------------------------------

def semicircle_density(x, variance=1.0):
    """sqrt(4 v - x^2) / (2 pi v) on [-2 sqrt(v), 2 sqrt(v)]."""
    x = np.asarray(x, dtype=float)
    rad = 4.0 * variance - x * x
    return np.where(rad > 0.0, np.sqrt(np.maximum(rad, 0.0))
                    / (2.0 * np.pi * variance), 0.0)


def arcsine_density(x):
    """1 / (pi sqrt(2 - x^2)) on (-sqrt(2), sqrt(2)): the normalized second
    power of the symmetric two-atom law."""
    x = np.asarray(x, dtype=float)
    rad = 2.0 - x * x
    out = np.zeros_like(x)
    inside = rad > 0.0
    out[inside] = 1.0 / (np.pi * np.sqrt(rad[inside]))
    return out


def kesten_density(x, m):
    """Closed form for the normalized m-th power of the symmetric two-atom
    law, m >= 2: with t = (m-1)/m,

        p(x) = 2 t sqrt(4t - x^2) / (pi [x^2 (2t-1)^2 + 4t - x^2])

    on |x| <= 2 sqrt(t).  Derivation: the companion of the seed is a point
    mass at 0; convolving its 1/sqrt(m) dilation (still a point mass at 0)
    with the semicircle law of variance t gives a Cauchy transform g
    solving t g^2 - z g + 1 = 0 (upper branch), and the power's density is
    the boundary value of -Im(1/(z - g))/pi, which simplifies to the
    quotient above.
    """
    x = np.asarray(x, dtype=float)
    t = (m - 1.0) / m
    rad = 4.0 * t - x * x
    out = np.zeros_like(x)
    inside = rad > 0.0
    xx = x[inside]
    out[inside] = (2.0 * t * np.sqrt(rad[inside])
                   / (np.pi * (xx * xx * (2.0 * t - 1.0) ** 2
                               + 4.0 * t - xx * xx)))
    return out


def asym_power_density(x, m):
    """Closed form for the absolutely continuous part of the normalized m-th
    power of the asymmetric two-atom seed.

    The seed's companion is a point mass at -1/sqrt(2); after the 1/sqrt(m)
    dilation it sits at c = -1/sqrt(2m), so the power's reciprocal Cauchy
    transform is F(x) = x - G(x - c) with G the Cauchy transform of the
    semicircle law of variance t = (m-1)/m, and the density is
    -Im(1/F)/pi on the boundary.
    """
    x = np.asarray(x, dtype=float)
    t = (m - 1.0) / m
    c = -1.0 / math.sqrt(2.0 * m)
    g = semicircle_cauchy(t, x.astype(complex) + 0.0j - c)
    f = x - g
    with np.errstate(divide="ignore", invalid="ignore"):
        p = -np.imag(1.0 / f) / np.pi
    return np.where(np.isfinite(p) & (p > 0.0), p, 0.0)


def kesten_fisher(m):
    """(4 pi^2 / 3) * integral of the cubed m-th power density, in closed
    form: (m-1)^2 / (m (m-2)) for m > 2, divergent at m = 2."""
    if m <= 2:
        return math.inf
    return (m - 1.0) ** 2 / (m * (m - 2.0))


# -- frozen pins ---------------------------------------------------------------
# Values frozen from the quadrature machinery applied to closed-form oracle
# tables of the two-atom ladders.  Six-decimal entries are pinned to 1.5e-6,
# ten-decimal entries to 1e-8.

BERNOULLI_PINS = {
    4: {"sup": 1.0 / (2.0 * math.pi), "l1": 0.212230, "l06": 0.476552,
        "l2": 0.130682, "chi": 1.4073144612, "phi": 1.125},
    8: {"sup": 1.0 / (math.pi * math.sqrt(8.0)), "l1": 0.091033,
        "l06": 0.202633, "l2": 0.059538, "chi": 1.4165992520,
        "phi": kesten_fisher(8)},
    16: {"sup": 1.0 / (4.0 * math.pi), "l1": 0.042454, "l06": 0.093486,
         "l2": 0.029888, "chi": 1.4184061054, "phi": kesten_fisher(16)},
    32: {"sup": 1.0 / (math.pi * math.sqrt(32.0)), "l1": 0.020538,
         "l06": 0.044859, "l2": 0.015504, "chi": 1.4188111695,
         "phi": kesten_fisher(32)},
    64: {"sup": 1.0 / (8.0 * math.pi), "l1": 0.010105, "l06": 0.021945,
         "l2": 0.008136, "chi": 1.4189073671, "phi": kesten_fisher(64)},
}

ASYM_PINS = {
    4: {"sup": 0.511772, "l1": 0.359717, "l06": 0.764053, "l2": 0.261318,
        "chi": 1.37069187, "phi": 1.80000000},
    8: {"sup": 0.186484, "l1": 0.201725, "l06": 0.449596, "l2": 0.130282,
        "chi": 1.40343951, "phi": 1.13076923},
    16: {"sup": 0.151273, "l1": 0.126580, "l06": 0.284650, "l2": 0.082367,
         "chi": 1.41259001, "phi": 1.04442971},
    32: {"sup": 0.123435, "l1": 0.084367, "l06": 0.189335, "l2": 0.056342,
         "chi": 1.41605499, "phi": 1.01858395},
    64: {"sup": 0.101344, "l1": 0.057933, "l06": 0.129209, "l2": 0.039965,
         "chi": 1.41755953, "phi": 1.00851639},
}

# Entropy closed forms: the double log-energy of the arcsine law on
# [-sqrt(2), sqrt(2)] is log(capacity) = -log(2)/2, and of the uniform law
# on [-a, a] is log(2a) - 3/2.
CHI_ARCSINE = 0.75 + 0.5 * math.log(math.pi)
CHI_UNIFORM_STD = (math.log(2.0 * math.sqrt(3.0)) - 1.5
                   + 0.75 + 0.5 * math.log(2.0 * math.pi))
PHI_UNIFORM_STD = math.pi ** 2 / 9.0
