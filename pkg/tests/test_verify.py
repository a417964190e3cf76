"""Tests for the pointwise and ODE oracles."""

import numpy as np
import pytest

from kolmogorov_kam import diophantine as dp
from kolmogorov_kam import fourier_taylor as ft
from kolmogorov_kam import iteration as it
from kolmogorov_kam import kolmogorov_step as ks
from kolmogorov_kam import verify
from kolmogorov_kam.errors import IntegratorError
from kolmogorov_kam.fourier_taylor import AnalyticityDomain, FourierTaylorSeries as Series

from conftest import pendulum_form, run_form

V = AnalyticityDomain(0.375, 0.375)


def bare_form(g, omega=1.0, K=4):
    d = g.dim
    S = [[Series.constant(float(i == j), d, K, 0) for j in range(d)] for i in range(d)]
    return ks.KolmogorovForm(0.0, dp.certify([omega]), S, 0.0, Series.zeros(d, K, g.taylor_degree),
                             g, AnalyticityDomain(1.0, 1.0))


class TestSymplecticCheck:
    def test_identity(self):
        cmap = it.ComposedMap.identity(2, 4, V)
        assert verify.symplectic_check(cmap, 2) < 1e-9

    def test_translation(self):
        def shift(R, phi):
            return R + np.array([0.3, -0.2]), phi + np.array([1.0, 0.5])
        assert verify.symplectic_check(shift, 2, domain=V) < 1e-9

    def test_detects_non_symplectic(self):
        def stretch(R, phi):
            return 2 * R, 2 * phi
        assert verify.symplectic_check(stretch, 1, domain=V) > 1

    def test_converged_map(self, pendulum_run):
        _, result, _ = pendulum_run
        assert verify.symplectic_check(result.map, 1) < 1e-8


class TestConjugacyResidual:
    def test_unperturbed_identity(self):
        form = pendulum_form(0.0)
        cmap = it.ComposedMap.identity(1, form.fourier_cutoff, V)
        res = verify.conjugacy_residual(form, cmap, form.omega.array)
        assert res.freq_err < 1e-10 and res.angle_dep_err == 0.0

    def test_finite_difference_order(self):
        g = Series.monomial((5,), 1, 4, 5, 1.0)
        form = bare_form(g)
        cmap = it.ComposedMap.identity(1, 4, V)
        coarse = verify.conjugacy_residual(form, cmap, [1.0], fd_step=0.1).freq_err
        fine = verify.conjugacy_residual(form, cmap, [1.0], fd_step=0.05).freq_err
        assert coarse > 0 and coarse / fine >= 3

    def test_converged_pendulum(self, pendulum_run):
        form, result, _ = pendulum_run
        res = verify.conjugacy_residual(form, result.map, form.omega.array)
        assert res.freq_err < 1e-8 and res.angle_dep_err < 1e-8

    def test_tracks_truncated_epsilon(self):
        form = pendulum_form()
        result, _ = run_form(form, max_steps=1)
        eps1 = result.records[-1].epsilon_n
        res = verify.conjugacy_residual(form, result.map, form.omega.array)
        assert 0.05 * eps1 < res.angle_dep_err <= eps1
        cmap = it.ComposedMap.identity(1, form.fourier_cutoff, result.map.domain)
        before = verify.conjugacy_residual(form, cmap, form.omega.array).angle_dep_err
        assert before > 1e3 * res.angle_dep_err


class TestFlow:
    def test_unperturbed_is_linear(self):
        form = pendulum_form(0.0)
        times, traj = verify.integrate(form, [0.0], [0.4], 10.0, 1e-3)
        assert np.abs(traj[:, 0]).max() == 0.0
        assert np.abs(traj[:, 1] - (0.4 + times)).max() < 1e-10
        cmap = it.ComposedMap.identity(1, form.fourier_cutoff, V)
        flow = verify.flow_invariance(form, cmap, [0.4], T=10.0)
        assert flow.max_distance == 0.0
        assert flow.frequency_rel_err < 1e-12

    def test_converged_pendulum(self, pendulum_run):
        form, result, _ = pendulum_run
        flow = verify.flow_invariance(form, result.map, [0.3], T=100.0, dt=1e-3)
        assert flow.max_distance < 1e-6
        assert flow.frequency_rel_err < 1e-6
        assert flow.angle_residual < 1e-12

    def test_blow_up(self):
        g = Series.cos_mode((1,), 1.0, 4, 3, m=(3,))
        form = bare_form(g)
        with pytest.raises(IntegratorError) as info:
            verify.integrate(form, [50.0], [1.0], 100.0, 1e-2)
        assert info.value.code == "integrator"


def test_oracles_do_not_compose_series(monkeypatch):
    def forbidden(*args, **kwargs):
        raise AssertionError("oracle used series composition")
    monkeypatch.setattr(ft, "compose_angle_many", forbidden)
    monkeypatch.setattr(ft, "compose_angle", forbidden)
    monkeypatch.setattr(ks, "pullback", forbidden)
    form = pendulum_form(0.0)
    cmap = it.ComposedMap.identity(1, form.fourier_cutoff, V)
    verify.conjugacy_residual(form, cmap, form.omega.array)
    verify.flow_invariance(form, cmap, [0.0], T=1.0)
    verify.symplectic_check(cmap, 1, samples=5)
