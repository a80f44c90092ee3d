"""Unit tests for distances, entropy, Fisher information, and reports.

Functional values are checked against closed forms where they exist
(semicircle, arcsine, uniform, the Kesten-type Fisher formula) and against
frozen pins computed from closed-form oracle tables otherwise.
"""

import math

import numpy as np
import pytest

from freeclt import (
    CHI_SEMICIRCLE,
    ArcsineFamily,
    ExtendedReal,
    InvalidArgumentError,
    SemicircleFamily,
    UniformFamily,
    build_table,
    clt_density_flow,
    convergence_report,
    free_entropy,
    free_fisher,
    log_sobolev_gap,
    lp_distance,
    report_row,
    sup_distance,
)

from conftest import (
    BERNOULLI_PINS,
    CHI_ARCSINE,
    CHI_UNIFORM_STD,
    PHI_UNIFORM_STD,
    SQRT2,
    kesten_density,
    kesten_fisher,
)


def kesten_table(m, points=3001):
    """Closed-form oracle table for the normalized m-th two-atom power."""
    t = (m - 1.0) / m
    edge = 2.0 * math.sqrt(t)
    x = np.linspace(-edge, edge, points)
    return build_table(x, kesten_density(x, m), support=(-edge, edge),
                       edge_orders=(0.5, 0.5), expected_mass=1.0)


@pytest.fixture(scope="module")
def semicircle_table():
    return SemicircleFamily(1.0).to_table(3001)


@pytest.fixture(scope="module")
def arcsine_table():
    return ArcsineFamily(-SQRT2, SQRT2).to_table(3001)


@pytest.fixture(scope="module")
def uniform_table():
    return UniformFamily(-math.sqrt(3.0), math.sqrt(3.0)).to_table(3001)


class TestSupDistance:
    def test_distance_to_itself_vanishes(self, semicircle_table):
        assert sup_distance(semicircle_table) < 1e-10

    @pytest.mark.parametrize("m", [4, 16, 64])
    def test_kesten_closed_form(self, m):
        # the supremum sits at the power's support edge 2 sqrt(t), where its
        # density vanishes and the semicircle density equals 1/(pi sqrt(m))
        val = sup_distance(kesten_table(m))
        assert val == pytest.approx(1.0 / (math.pi * math.sqrt(m)),
                                    abs=1e-10)

    def test_flag_reports_singular_edges(self, arcsine_table,
                                         semicircle_table):
        _, flagged = sup_distance(arcsine_table, flagged=True)
        assert flagged is True
        _, flagged = sup_distance(semicircle_table, flagged=True)
        assert flagged is False


class TestLpDistance:
    def test_rejects_small_exponent(self, semicircle_table):
        with pytest.raises(InvalidArgumentError):
            lp_distance(semicircle_table, 0.5)

    def test_distance_to_itself_vanishes(self, semicircle_table):
        assert lp_distance(semicircle_table, 1.0) < 1e-8

    @pytest.mark.parametrize("m,key,p", [
        (4, "l1", 1.0), (4, "l06", 0.6), (4, "l2", 2.0),
        (16, "l1", 1.0), (16, "l06", 0.6), (16, "l2", 2.0),
        (64, "l1", 1.0), (64, "l06", 0.6), (64, "l2", 2.0),
    ])
    def test_kesten_pins(self, m, key, p):
        assert lp_distance(kesten_table(m), p) == pytest.approx(
            BERNOULLI_PINS[m][key], abs=1.5e-6)

    def test_divergence_probe_on_singular_edge(self, arcsine_table):
        # the arcsine edge exponent is -1/2, so |diff|^2 ~ d^-1 diverges
        assert lp_distance(arcsine_table, 2.0) == math.inf
        # while p = 1 and p = 0.6 are integrable
        assert math.isfinite(lp_distance(arcsine_table, 1.0))
        assert math.isfinite(lp_distance(arcsine_table, 0.6))


class TestFreeEntropy:
    def test_semicircle_attains_maximum(self, semicircle_table):
        chi = free_entropy(semicircle_table)
        assert chi.finite
        assert chi.value == pytest.approx(CHI_SEMICIRCLE, abs=1e-8)

    def test_arcsine_closed_form(self, arcsine_table):
        assert free_entropy(arcsine_table).value == pytest.approx(
            CHI_ARCSINE, abs=1e-8)

    def test_uniform_closed_form(self, uniform_table):
        assert free_entropy(uniform_table).value == pytest.approx(
            CHI_UNIFORM_STD, abs=1e-8)

    @pytest.mark.parametrize("m", [4, 16, 64])
    def test_kesten_pins(self, m):
        assert free_entropy(kesten_table(m)).value == pytest.approx(
            BERNOULLI_PINS[m]["chi"], abs=1e-8)

    def test_dilation_law(self, semicircle_table):
        base = free_entropy(semicircle_table).value
        for a in (0.5, 2.0):
            moved = free_entropy(semicircle_table.dilated(a)).value
            assert moved - base == pytest.approx(math.log(a), abs=1e-8)

    def test_piecewise_linear_cross_check(self, semicircle_table,
                                          uniform_table):
        # the exact-cell piecewise-linear energy agrees to its
        # interpolation bias (~1e-5 at square-root edges, better inside)
        sub = free_entropy(semicircle_table).value
        lin = free_entropy(semicircle_table, method="piecewise_linear").value
        assert lin == pytest.approx(sub, abs=5e-5)
        sub_u = free_entropy(uniform_table).value
        lin_u = free_entropy(uniform_table, method="piecewise_linear").value
        assert lin_u == pytest.approx(sub_u, abs=5e-5)

    def test_piecewise_linear_rejects_singular_edges(self, arcsine_table):
        with pytest.raises(InvalidArgumentError):
            free_entropy(arcsine_table, method="piecewise_linear")

    def test_unknown_method_rejected(self, semicircle_table):
        with pytest.raises(InvalidArgumentError):
            free_entropy(semicircle_table, method="laplace")


class TestFreeFisher:
    def test_semicircle_is_unit(self, semicircle_table):
        phi = free_fisher(semicircle_table)
        assert phi.finite
        assert phi.value == pytest.approx(1.0, abs=1e-9)

    def test_uniform_closed_form(self, uniform_table):
        assert free_fisher(uniform_table).value == pytest.approx(
            PHI_UNIFORM_STD, abs=1e-9)

    @pytest.mark.parametrize("m", [3, 4, 16, 64])
    def test_kesten_closed_form(self, m):
        assert free_fisher(kesten_table(m)).value == pytest.approx(
            kesten_fisher(m), abs=1e-8)

    def test_divergent_for_singular_edges(self, arcsine_table):
        phi = free_fisher(arcsine_table)
        assert isinstance(phi, ExtendedReal)
        assert phi.divergent and phi.value == math.inf
        assert phi.diagnosis is not None
        assert float(phi) == math.inf


class TestLogSobolevGap:
    def test_semicircle_gap_vanishes(self, semicircle_table):
        gap = log_sobolev_gap(semicircle_table)
        assert abs(gap.value) < 1e-8

    @pytest.mark.parametrize("m", [4, 16, 64])
    def test_kesten_gap_positive_and_pinned(self, m):
        gap = log_sobolev_gap(kesten_table(m)).value
        expect = BERNOULLI_PINS[m]["chi"] - 0.5 * math.log(
            2.0 * math.pi * math.e / BERNOULLI_PINS[m]["phi"])
        assert gap == pytest.approx(expect, abs=1e-7)
        assert gap > 0.0

    def test_vacuous_when_fisher_diverges(self, arcsine_table):
        gap = log_sobolev_gap(arcsine_table)
        assert gap.divergent


class TestReports:
    def test_report_row_contents(self, bernoulli):
        dens = clt_density_flow(bernoulli, 4)
        row = report_row(bernoulli, 4, (1.0,), dens=dens)
        assert row["n"] == 4
        assert set(row) == {"n", "sup_dist", "lp", "chi", "phi", "gap",
                            "flags"}
        assert row["sup_dist"] == pytest.approx(BERNOULLI_PINS[4]["sup"],
                                                abs=1e-8)
        assert row["lp"]["1.0"] == pytest.approx(BERNOULLI_PINS[4]["l1"],
                                                 abs=1.5e-6)
        assert row["flags"] == []

    def test_convergence_report_flags_divergence(self, bernoulli):
        rep = convergence_report(bernoulli, (2, 4), p_list=(1.0, 2.0))
        rows = rep.to_dict()["rows"]
        assert [r["n"] for r in rows] == [2, 4]
        first = rows[0]
        assert "phi_divergent" in first["flags"]
        assert "gap_vacuous" in first["flags"]
        assert "lp_divergent" in first["flags"]
        assert first["lp"]["2.0"] == math.inf
        assert math.isfinite(first["lp"]["1.0"])
        assert rows[1]["flags"] == []

    def test_report_argument_domain(self, bernoulli):
        with pytest.raises(InvalidArgumentError):
            convergence_report(bernoulli, (1, 4))
        with pytest.raises(InvalidArgumentError):
            convergence_report(bernoulli, (2, 4), p_list=(0.4,))
