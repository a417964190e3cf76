"""Tests for the cohomological-equation solver and its norm-loss bound."""

import math

import numpy as np
import pytest
from scipy import integrate

from kolmogorov_kam import cohomology as co
from kolmogorov_kam import diophantine as dp
from kolmogorov_kam import fourier_taylor as ft
from kolmogorov_kam.errors import ResonanceError
from kolmogorov_kam.fourier_taylor import FourierTaylorSeries as Series
from kolmogorov_kam.hamiltonians import GOLDEN_MEAN


@pytest.fixture(scope="module")
def golden():
    return dp.certify([1.0, GOLDEN_MEAN], tau=1.0, kmax=200)


class TestSolve:
    def test_zero(self):
        f = co.solve(Series.zeros(1, 3, 0), dp.certify([1.0]))
        assert f.is_zero()

    def test_cos_to_sin(self):
        f = co.solve(Series.cos_mode((1,), 1.0, 2, 0), dp.certify([1.0], 0.5, 50))
        expected = Series.sin_mode((1,), 1.0, 2, 0)
        assert np.abs(f.coeffs - expected.coeffs).max() < 1e-15

    def test_single_mode_divisor(self, golden):
        g = Series.cos_mode((1, -1), 1.0, 4, 0)
        f = co.solve(g, golden)
        th = ft.angle_grid(2, 32)
        expected = np.sin(th[:, 0] - th[:, 1]) / (1 - GOLDEN_MEAN)
        got = ft.evaluate_many(f, np.zeros_like(th), th)
        assert np.abs(got - expected).max() < 1e-14

    def test_exactness_and_zero_mean(self, golden):
        rng = np.random.default_rng(0)
        for K in (1, 5, 16):
            g = co.random_zero_mean(rng, 2, K, 2)
            f = co.solve(g, golden)
            res = ft.lie_derivative(f, golden.array) - g
            assert ft.strip_norm_majorant(res, (1.0, 1.0)) < 1e-12 * ft.strip_norm_majorant(g, (1.0, 1.0))
            assert ft.average(f).is_zero()

    def test_linearity(self, golden):
        rng = np.random.default_rng(1)
        g1 = co.random_zero_mean(rng, 2, 6)
        g2 = co.random_zero_mean(rng, 2, 6)
        a, b = 0.7, -2.5
        lhs = co.solve(a * g1 + b * g2, golden)
        rhs = a * co.solve(g1, golden) + b * co.solve(g2, golden)
        assert np.abs(lhs.coeffs - rhs.coeffs).max() < 1e-13 * np.abs(lhs.coeffs).max()

    def test_nonzero_mean_rejected(self, golden):
        with pytest.raises(ValueError):
            co.solve(Series.constant(1.0, 2, 1, 0), golden)

    def test_resonant_mode_named(self):
        omega = dp.FrequencyVector((1.0, 1.0))
        with pytest.raises(ResonanceError) as info:
            co.solve(Series.cos_mode((1, -1), 1.0, 2, 0), omega)
        assert tuple(info.value.k) in {(1, -1), (-1, 1)}


class TestLemmaBound:
    def test_integral_closed_form(self):
        assert co.lemma_integral(0.5, 1) == pytest.approx(math.sqrt(math.pi), rel=1e-14)

    @pytest.mark.parametrize("tau,d", [(0.5, 1), (1.0, 2), (2.0, 2)])
    def test_integral_against_quadrature(self, tau, d):
        # radial integral over sup-norm shells
        val, _ = integrate.quad(lambda s: d * 2 ** d * s ** (d - 1) * s ** tau * math.exp(-s), 0, np.inf)
        assert co.lemma_integral(tau, d) == pytest.approx(val, rel=1e-10)

    def test_homogeneity(self):
        tau, d = 1.0, 2
        ratio = co.lemma_bound(0.4, 0.6, tau, d) / co.lemma_bound(0.2, 0.6, tau, d)
        assert ratio == pytest.approx(2.0 ** -(tau + d))

    def test_linear_in_inverse_c(self):
        assert co.lemma_bound(0.3, 2.0, 1.0, 2) == pytest.approx(0.5 * co.lemma_bound(0.3, 1.0, 1.0, 2))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            co.lemma_bound(0.0, 1.0, 1.0, 1)
        with pytest.raises(ValueError):
            co.lemma_bound(0.1, 0.0, 1.0, 1)

    def test_empirical_bound(self, golden):
        rng = np.random.default_rng(2)
        cert = golden.certificate
        for _ in range(20):
            g = co.random_zero_mean(rng, 2, 12)
            f = co.solve(g, golden)
            gn = ft.strip_norm_majorant(g, (1.0, 1.0))
            for delta in (0.1, 0.2, 0.4):
                ratio = ft.strip_norm_majorant(f, (1.0, 1.0 - delta)) / gn
                assert ratio <= co.lemma_bound(delta, cert.c, cert.tau, 2)


def test_selftest_small():
    out = co.selftest(seed=3, count=10)
    assert out["passed"]
    assert out["lemma_violations"] == 0
