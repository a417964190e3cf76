"""Tests for the finite-depth Diophantine scan."""

import math

import numpy as np
import pytest

from kolmogorov_kam import diophantine as dp
from kolmogorov_kam.errors import ResonanceError
from kolmogorov_kam.hamiltonians import GOLDEN_MEAN

# Exhaustive scan of (1, golden) with tau = 1 over |k|_inf <= 200.
GOLDEN_C_HAT = 0.6180339887498949


class TestWorstResonance:
    def test_exact_resonance(self):
        res = dp.worst_resonance([1.0, 1.0], tau=2.0, kmax=5)
        assert res.c_hat == 0.0
        assert res.k_star == (1, -1)

    def test_one_dimensional(self):
        res = dp.worst_resonance([1.0], tau=0.5, kmax=100)
        assert res.c_hat == pytest.approx(1.0)
        assert res.k_star == (1,)

    def test_golden_reference(self):
        res = dp.worst_resonance([1.0, GOLDEN_MEAN], tau=1.0, kmax=200)
        assert res.c_hat == pytest.approx(GOLDEN_C_HAT, rel=1e-12)
        assert res.k_star == (1, -1)

    @pytest.mark.parametrize("lam", [0.5, 3.0, -2.0])
    def test_scaling(self, lam):
        w = np.array([1.0, math.sqrt(2.0)])
        a = dp.worst_resonance(w, kmax=40)
        b = dp.worst_resonance(lam * w, kmax=40)
        assert b.c_hat == pytest.approx(abs(lam) * a.c_hat, rel=1e-12)
        assert b.k_star == a.k_star

    def test_monotone_in_depth(self):
        w = [1.0, math.pi, math.e]
        values = [dp.worst_resonance(w, kmax=k).c_hat for k in (1, 2, 4, 8, 12)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_canonical_half_space(self):
        res = dp.worst_resonance([GOLDEN_MEAN, 1.0], tau=1.0, kmax=50)
        first = next(x for x in res.k_star if x != 0)
        assert first > 0

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            dp.worst_resonance([0.0, 0.0])
        with pytest.raises(ValueError):
            dp.worst_resonance([1.0], kmax=0)
        with pytest.raises(ValueError):
            dp.worst_resonance([np.nan])


class TestCertify:
    def test_golden(self):
        omega = dp.certify([1.0, GOLDEN_MEAN], tau=1.0, kmax=200)
        assert omega.certificate.c == pytest.approx(GOLDEN_C_HAT, rel=1e-12)
        assert omega.certificate.scan_depth == 200
        assert omega.dim == 2

    def test_resonant(self):
        with pytest.raises(ResonanceError) as info:
            dp.certify([1.0, 1.0])
        assert info.value.code == "resonant"
        assert tuple(info.value.k) == (1, -1)

    def test_one_dimensional(self):
        omega = dp.certify([2.0], tau=0.5, kmax=50)
        assert omega.certificate.c == pytest.approx(2.0)

    def test_default_tau_is_dimension(self):
        assert dp.certify([1.0, GOLDEN_MEAN], kmax=20).certificate.tau == 2.0

    def test_violated_certificate_rejected(self):
        cert = dp.DiophantineCertificate(1.0, 1.0, 50)
        with pytest.raises(ValueError):
            dp.FrequencyVector((1.0, GOLDEN_MEAN), cert)

    def test_tau_below_limit_rejected(self):
        cert = dp.DiophantineCertificate(0.1, 0.5, 10)
        with pytest.raises(ValueError):
            dp.FrequencyVector((1.0, GOLDEN_MEAN), cert)
