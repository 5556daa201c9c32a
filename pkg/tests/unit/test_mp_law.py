"""
Unit Tests for the Marchenko-Pastur Law

Tests for the density, distribution function, quantiles, Stieltjes transform
and the principal-value edge integrals.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad


class TestModel:
    """Tests for MPModel"""

    def test_edges(self, mp_model):
        assert mp_model.a == pytest.approx(0.25)
        assert mp_model.b == pytest.approx(2.25)
        assert not mp_model.hard_edge

    def test_from_shape(self):
        from src.mp_law import MPModel

        assert MPModel.from_shape(300, 400).y == 0.75
        assert MPModel.from_shape(5, 5).hard_edge

    @pytest.mark.parametrize("y", [0.0, -0.1, 1.5, float("nan")])
    def test_invalid_ratio(self, y):
        from src.exceptions import DomainError
        from src.mp_law import MPModel

        with pytest.raises(DomainError):
            MPModel(y)


class TestDensity:
    """Tests for density"""

    def test_square_case_value(self):
        """y = 1, x = 2: sqrt(2 * 2) / (2 pi * 2) = 1 / (2 pi)"""
        from src.mp_law import MPModel, density

        assert density(MPModel(1.0), 2.0) == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-14)

    def test_interior_value(self, mp_model):
        from src.mp_law import density

        assert density(mp_model, 1.0) == pytest.approx(math.sqrt(15.0) / (2.0 * math.pi), rel=1e-14)

    def test_zero_outside_support(self, mp_model):
        from src.mp_law import density

        values = density(mp_model, np.array([0.0, 0.2, 2.3, 10.0]))

        assert np.all(values == 0.0)

    def test_zero_at_soft_edges(self, mp_model):
        from src.mp_law import density

        assert density(mp_model, mp_model.a) == 0.0
        assert density(mp_model, mp_model.b) == 0.0

    def test_hard_edge_singularity(self):
        from src.mp_law import MPModel, density

        assert density(MPModel(1.0), 0.0) == math.inf

    def test_vectorized_shape(self, mp_model):
        from src.mp_law import density

        assert density(mp_model, np.linspace(0.0, 3.0, 12).reshape(3, 4)).shape == (3, 4)


class TestCdfAndMoments:
    """Tests for cdf, moment and quantile"""

    @pytest.mark.parametrize("y", [0.1, 0.25, 0.75, 1.0])
    def test_total_mass(self, y):
        from src.mp_law import MPModel, moment

        assert moment(MPModel(y), 0) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("y", [0.25, 0.75, 1.0])
    def test_low_moments(self, y):
        """Means 1, 1 + y and 1 + 3y + y^2"""
        from src.mp_law import MPModel, moment

        model = MPModel(y)

        assert moment(model, 1) == pytest.approx(1.0, abs=1e-10)
        assert moment(model, 2) == pytest.approx(1.0 + y, abs=1e-10)
        assert moment(model, 3) == pytest.approx(1.0 + 3.0 * y + y * y, abs=1e-10)

    def test_cdf_against_direct_quadrature(self, mp_model):
        from src.mp_law import cdf, density

        for x in (0.4, 1.0, 1.9):
            direct, _ = quad(lambda t: density(mp_model, t), mp_model.a, x, epsabs=1e-13, limit=200)
            assert cdf(mp_model, x) == pytest.approx(direct, abs=1e-9)

    def test_cdf_clamps(self, mp_model):
        from src.mp_law import cdf

        assert cdf(mp_model, 0.0) == 0.0
        assert cdf(mp_model, mp_model.a) == 0.0
        assert cdf(mp_model, 5.0) == 1.0

    def test_cdf_monotone(self, mp_model):
        from src.mp_law import cdf_values

        values = cdf_values(mp_model, np.linspace(0.0, 2.5, 60))

        assert np.all(np.diff(values) >= -1e-14)

    def test_hard_edge_cdf(self):
        """F(x) near 0 behaves like 2 sqrt(x) / pi at y = 1"""
        from src.mp_law import MPModel, cdf

        x = 1e-8
        assert cdf(MPModel(1.0), x) == pytest.approx(2.0 * math.sqrt(x) / math.pi, rel=1e-3)

    def test_quantile_inverts_cdf(self, mp_model):
        from src.mp_law import cdf, quantile

        for q in (0.05, 0.5, 0.95):
            assert cdf(mp_model, quantile(mp_model, q)) == pytest.approx(q, abs=1e-10)

    def test_quantile_endpoints(self, mp_model):
        from src.mp_law import quantile

        assert quantile(mp_model, 0.0) == mp_model.a
        assert quantile(mp_model, 1.0) == mp_model.b

    def test_quantile_out_of_range(self, mp_model):
        from src.exceptions import DomainError
        from src.mp_law import quantile

        with pytest.raises(DomainError):
            quantile(mp_model, 1.5)

    def test_negative_moment_order(self, mp_model):
        from src.exceptions import DomainError
        from src.mp_law import moment

        with pytest.raises(DomainError):
            moment(mp_model, -1)


class TestStieltjes:
    """Tests for stieltjes and verify_functional_equation"""

    @pytest.mark.parametrize("z", [1 + 1j, 0.5 - 0.2j, -1.0, 5.0, 1e-3j, 2.25 + 1e-9j])
    def test_functional_equation(self, mp_model, z):
        from src.mp_law import verify_functional_equation

        assert verify_functional_equation(mp_model, z) < 1e-12

    def test_functional_equation_square(self):
        from src.mp_law import MPModel, verify_functional_equation

        assert verify_functional_equation(MPModel(1.0), -0.5 + 0.1j) < 1e-12

    def test_upper_half_plane(self, mp_model):
        """Im s > 0 whenever Im z > 0"""
        from src.mp_law import stieltjes

        for z in (0.1 + 0.01j, 1.0 + 0.001j, 3.0 + 2.0j, -2.0 + 0.5j):
            assert stieltjes(mp_model, z).imag > 0

    def test_decay_at_infinity(self, mp_model):
        """s(z) ~ -1/z"""
        from src.mp_law import stieltjes

        z = 1e6 + 1e6j
        assert stieltjes(mp_model, z) * z == pytest.approx(-1.0, abs=1e-5)

    def test_matches_integral(self, mp_model):
        """s(z) = integral of rho(x) / (x - z)"""
        from src.mp_law import density, stieltjes

        z = 1.0 + 0.5j

        def part(fn):
            value, _ = quad(lambda x: fn(density(mp_model, x) / (x - z)), mp_model.a, mp_model.b, limit=200)
            return value

        expected = part(lambda w: w.real) + 1j * part(lambda w: w.imag)

        assert abs(stieltjes(mp_model, z) - expected) < 1e-8

    def test_real_axis_outside_support(self, mp_model):
        """Real values left of a are positive and right of b negative"""
        from src.mp_law import stieltjes

        assert stieltjes(mp_model, 0.1).real > 0
        assert stieltjes(mp_model, 3.0).real < 0
        assert stieltjes(mp_model, 3.0).imag == 0.0

    def test_branch_cut(self, mp_model):
        from src.exceptions import BranchCutError
        from src.mp_law import stieltjes

        with pytest.raises(BranchCutError):
            stieltjes(mp_model, 1.0)


class TestPrincipalValue:
    """Tests for pv_edge_integral and pv_closed_form"""

    def test_lower_edge(self, mp_model):
        """At lambda = a both sides equal sqrt(y)"""
        from src.mp_law import pv_closed_form, pv_edge_integral

        assert pv_closed_form(mp_model, mp_model.a) == pytest.approx(0.5)
        assert pv_edge_integral(mp_model, mp_model.a) == pytest.approx(0.5, abs=1e-12)

    def test_upper_edge(self, mp_model):
        from src.mp_law import pv_closed_form, pv_edge_integral

        assert pv_closed_form(mp_model, mp_model.b) == pytest.approx(-0.5)
        assert pv_edge_integral(mp_model, mp_model.b) == pytest.approx(-0.5, abs=1e-12)

    @pytest.mark.parametrize("lam", [0.4, 1.0, 2.0])
    def test_interior_excision(self, mp_model, lam):
        from src.mp_law import pv_closed_form, pv_edge_integral

        assert pv_edge_integral(mp_model, lam) == pytest.approx(pv_closed_form(mp_model, lam), abs=1e-6)

    @pytest.mark.parametrize("lam", [0.4, 1.0, 2.0])
    def test_interior_cauchy_weight(self, mp_model, lam):
        from src.mp_law import pv_closed_form, pv_edge_integral

        assert pv_edge_integral(mp_model, lam, method="qawc") == pytest.approx(
            pv_closed_form(mp_model, lam), abs=1e-6
        )

    @pytest.mark.parametrize("lam", [0.1, 3.0, -1.0])
    def test_exterior(self, mp_model, lam):
        from src.mp_law import pv_closed_form, pv_edge_integral

        assert pv_edge_integral(mp_model, lam) == pytest.approx(pv_closed_form(mp_model, lam), abs=1e-10)

    def test_hard_edge_model(self):
        """y = 1: the lower edge sits at 0"""
        from src.mp_law import MPModel, pv_closed_form, pv_edge_integral

        model = MPModel(1.0)

        assert pv_edge_integral(model, 0.0) == pytest.approx(pv_closed_form(model, 0.0), abs=1e-12)
        assert pv_edge_integral(model, 1.0) == pytest.approx(0.5, abs=1e-6)

    def test_unknown_method(self, mp_model):
        from src.exceptions import DomainError
        from src.mp_law import pv_edge_integral

        with pytest.raises(DomainError):
            pv_edge_integral(mp_model, 1.0, method="trapezoid")
