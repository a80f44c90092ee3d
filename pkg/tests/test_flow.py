"""Unit tests for the flow parametrization of semicircle convolution."""

import math

import numpy as np
import pytest

from freeclt import (
    FlowKernel,
    InvalidArgumentError,
    flow_cauchy,
    flow_curve,
    flow_density,
    flow_invert_psi,
    flow_map,
    flow_psi,
    flow_region,
    flow_v,
    make_measure,
    psi_derivative,
    region_integral,
)

from conftest import semicircle_density


@pytest.fixture(scope="module")
def delta0():
    return make_measure({"atoms": [{"x": 0.0, "w": 1.0}]})


@pytest.fixture(scope="module")
def two_atoms():
    return make_measure(
        {"atoms": [{"x": -1.0, "w": 0.5}, {"x": 1.0, "w": 0.5}]})


class TestPointMassClosedForm:
    """With a point mass at 0 all flow quantities are elementary:
    v(u) = sqrt(t - u^2), psi(u) = 2u, and the convolution is the
    semicircle law of variance t."""

    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
    def test_height_and_image(self, delta0, t):
        kernel = FlowKernel(delta0, t)
        u = np.linspace(-0.99, 0.99, 401) * math.sqrt(t)
        v, psi = flow_map(kernel, u)
        assert np.max(np.abs(v - np.sqrt(t - u * u))) < 1e-13
        assert np.max(np.abs(psi - 2.0 * u)) < 1e-13

    def test_region_is_centered_disk_diameter(self, delta0):
        (g, h), = flow_region(FlowKernel(delta0, 1.0))
        assert g == pytest.approx(-1.0, abs=1e-12)
        assert h == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
    def test_density_is_semicircle(self, delta0, t):
        _, tab = flow_density(delta0, t)
        x = np.linspace(-2.0 * math.sqrt(t), 2.0 * math.sqrt(t), 1001)
        assert np.max(np.abs(tab.density(x)
                             - semicircle_density(x, variance=t))) < 1e-10

    def test_cauchy_is_semicircle_branch(self, delta0):
        kernel = FlowKernel(delta0, 1.0)
        x = np.linspace(-1.9, 1.9, 41)
        g = flow_cauchy(kernel, x)
        expect = (x - 1j * np.sqrt(4.0 - x * x)) / 2.0
        assert np.max(np.abs(g - expect)) < 1e-12


class TestHeightFunction:
    def test_threshold_identity_inside_region(self, two_atoms):
        kernel = FlowKernel(two_atoms, 0.7)
        for g, h in flow_region(kernel):
            u = np.linspace(g, h, 101)[1:-1]
            v = flow_v(kernel, u)
            assert np.all(v > 0.0)
            residual = kernel.integral_I(u, v) - 1.0 / 0.7
            assert np.max(np.abs(residual)) < 1e-10

    def test_zero_outside_region(self, two_atoms):
        kernel = FlowKernel(two_atoms, 0.2)
        regions = flow_region(kernel)
        hull = (regions[0][0], regions[-1][1])
        u = np.array([hull[0] - 0.5, hull[1] + 0.5])
        assert np.all(flow_v(kernel, u) == 0.0)

    def test_height_bounded_by_sqrt_t(self, two_atoms):
        for t in (0.3, 1.0, 4.0):
            kernel = FlowKernel(two_atoms, t)
            u = np.linspace(-3.0, 3.0, 301)
            assert np.max(flow_v(kernel, u)) <= math.sqrt(t) * (1 + 1e-12)

    def test_rejects_nonpositive_time(self, two_atoms):
        with pytest.raises(InvalidArgumentError):
            FlowKernel(two_atoms, 0.0)
        with pytest.raises(InvalidArgumentError):
            FlowKernel(two_atoms, -1.0)


class TestImageMap:
    def test_psi_strictly_increasing_on_curve(self, two_atoms):
        kernel = FlowKernel(two_atoms, 0.9)
        curve = flow_curve(kernel)
        assert np.all(np.diff(curve.psi) > 0.0) or all(
            np.all(np.diff(curve.psi[curve.region_index == k]) > 0.0)
            for k in range(len(curve.regions)))

    def test_psi_derivative_matches_finite_difference(self, two_atoms):
        kernel = FlowKernel(two_atoms, 0.9)
        (g, h) = flow_region(kernel)[0]
        u = np.linspace(g, h, 41)[5:-5]
        v = flow_v(kernel, u)
        step = 1e-6
        num = (flow_psi(kernel, u + step, flow_v(kernel, u + step))
               - flow_psi(kernel, u - step, flow_v(kernel, u - step))) \
            / (2.0 * step)
        assert np.max(np.abs(psi_derivative(kernel, u, v) - num)) < 1e-5

    def test_invert_round_trip(self, two_atoms):
        kernel = FlowKernel(two_atoms, 1.3)
        (g, h), = flow_region(kernel)
        u = np.linspace(g, h, 101)[1:-1]
        _, psi = flow_map(kernel, u)
        u_back = flow_invert_psi(kernel, psi)
        assert np.max(np.abs(u_back - u)) < 1e-10

    def test_modulus_bound_along_curve(self, two_atoms):
        for t in (0.5, 1.0, 2.0):
            kernel = FlowKernel(two_atoms, t)
            curve = flow_curve(kernel)
            g = curve.j_values() - 1j * curve.v / t
            assert np.max(np.abs(g)) <= 1.0 / math.sqrt(t) + 1e-10


class TestRegionsAndMass:
    def test_two_regions_at_small_time(self, two_atoms):
        regions = flow_region(FlowKernel(two_atoms, 0.2))
        assert len(regions) == 2
        # regions bracket the atoms at -1 and 1
        assert regions[0][0] < -1.0 < regions[0][1]
        assert regions[1][0] < 1.0 < regions[1][1]

    def test_single_region_at_large_time(self, two_atoms):
        assert len(flow_region(FlowKernel(two_atoms, 2.0))) == 1

    def test_split_support_mass_adds_to_one(self, two_atoms):
        curve, tables = flow_density(two_atoms, 0.2)
        assert isinstance(tables, tuple) and len(tables) == 2
        assert sum(tab.mass() for tab in tables) == pytest.approx(
            1.0, abs=1e-8)

    def test_region_integral_recovers_mass(self, delta0):
        kernel = FlowKernel(delta0, 1.0)
        region, = flow_region(kernel)

        def mass_integrand(u):
            v = flow_v(kernel, u)
            return v / (math.pi * kernel.t) * psi_derivative(kernel, u, v)

        assert region_integral(kernel, region, mass_integrand) \
            == pytest.approx(1.0, abs=1e-10)
