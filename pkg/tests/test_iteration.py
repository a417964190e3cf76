"""Tests for the schedule, hypothesis checks, composed maps and full runs."""

import math

import numpy as np
import pytest

from kolmogorov_kam import fourier_taylor as ft
from kolmogorov_kam import iteration as it
from kolmogorov_kam import kolmogorov_step as ks
from kolmogorov_kam.errors import DomainError

from conftest import golden_form, pendulum_form, run_form


def sup_log(x, C1, C2, n_max=60):
    """``max_n log(x^(2^n) C1^n C2^(n^2))``."""
    return max(2.0 ** n * math.log(x) + n * math.log(C1) + n * n * math.log(C2)
               for n in range(n_max + 1))


def sum_terms(x, C3, C4, n_max=60):
    return sum(math.exp(2.0 ** n * math.log(x) + n * math.log(C3) + n * n * math.log(C4))
               for n in range(n_max + 1))


class TestKappa:
    def test_unit_constants(self):
        assert it.kappa_threshold(1, 1, 0.5, 0.5, 1, 3) == pytest.approx(1.0)

    def test_e_case(self):
        k = it.kappa_threshold(math.e, 1, 0.5, 0.5, 1, 3)
        assert k == pytest.approx(math.exp(-1 / math.log(2)), rel=1e-14)
        assert k == pytest.approx(0.236290, abs=5e-7)
        assert sup_log(0.99 * k, math.e, 1) < 0

    def test_monotone_in_c1(self):
        values = [it.kappa_threshold(2, 1.5, 0.5, 0.5, c1, 3) for c1 in (1.0, 0.5, 0.1, 0.01)]
        assert all(b <= a for a, b in zip(values, values[1:]))
        assert values[-1] < values[1]

    def test_sum_branch(self):
        C3, C4, c2 = 3.0, 1.2, 0.05
        k = it.kappa_threshold(1e-3, 1e-3, C3, C4, 1e3, c2)
        assert sum_terms(0.99 * k, C3, C4) < c2

    def test_capped_at_one(self):
        assert it.kappa_threshold(0.5, 0.5, 0.1, 0.1, 5, 50) == 1.0

    def test_sum_branch_n0_term(self):
        # the n = 0 term is x itself, so kappa_2 <= c2 / 3 when it binds
        k = it.kappa_threshold(1e-3, 1e-3, 0.5, 0.5, 1e3, 0.9)
        assert k <= 0.3
        assert sum_terms(0.99 * k, 0.5, 0.5) < 0.9

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            it.kappa_threshold(0, 1, 1, 1, 1, 1)


@pytest.fixture(scope="module")
def pendulum_setup():
    form = pendulum_form()
    twist = ks.TwistData.from_form(form)
    return form, twist, it.IterationSchedule.for_form(form, twist)


class TestSchedule:
    def test_losses_sum_to_half(self, pendulum_setup):
        _, _, sched = pendulum_setup
        total = math.fsum(sched.delta(n) for n in range(1, 80))
        assert total == pytest.approx(sched.delta_base / 2, rel=1e-15)

    def test_domains_stay_above_half(self, pendulum_setup):
        _, _, sched = pendulum_setup
        for n in range(40):
            dom = sched.domain(n)
            assert dom.rho >= sched.rho0 / 2 and dom.delta_strip >= sched.delta0 / 2
            if n:
                prev = sched.domain(n - 1)
                assert dom.rho == pytest.approx(prev.rho - sched.delta(n))

    def test_nu_and_defaults(self, pendulum_setup):
        form, twist, sched = pendulum_setup
        assert sched.nu == 2 * (1 + 1 + 2)
        assert sched.eta0 == pytest.approx(twist.beta / 2)
        assert sched.stop_tol == pytest.approx(1e-13 * twist.gamma)
        assert sched.verification_domain.rho == pytest.approx(3 / 8)

    def test_kappa_positive_and_tiny(self, pendulum_setup):
        _, _, sched = pendulum_setup
        assert 0 < sched.kappa() < 1e-6


class TestHypotheses:
    def test_initial_pendulum(self, pendulum_setup):
        form, twist, sched = pendulum_setup
        hyp = it.check_hypotheses(form, twist, sched, 0)
        assert hyp.h1_ok and hyp.h2_ok
        assert hyp.details["eps_threshold"] == pytest.approx(
            (sched.delta_base / 3) ** sched.nu / sched.step_constant)

    def test_eta_at_beta_fails(self, pendulum_setup):
        form, twist, _ = pendulum_setup
        sched = it.IterationSchedule.for_form(form, twist, eta0=twist.beta)
        assert not it.check_hypotheses(form, twist, sched, 0).h1_ok

    def test_zero_epsilon_passes_h2(self):
        form = pendulum_form(0.0)
        twist = ks.TwistData.from_form(form)
        sched = it.IterationSchedule.for_form(form, twist)
        for n in range(5):
            assert it.check_hypotheses(form, twist, sched, n).h2_ok

    def test_large_epsilon_fails_h2(self):
        form = pendulum_form(1e-4)
        twist = ks.TwistData.from_form(form)
        sched = it.IterationSchedule.for_form(form, twist, step_constant=1e3)
        assert not it.check_hypotheses(form, twist, sched, 0).h2_ok


def translation_step(alpha, K=4):
    d = len(alpha)
    z = ft.FourierTaylorSeries.zeros(d, K, 0)
    dv = tuple(tuple(z for _ in range(d)) for _ in range(d))
    gen = ks.GeneratorSolution(z, np.asarray(alpha, dtype=float), (z,) * d, (z,) * d, dv, {})
    return ks.build_map(gen, ft.AnalyticityDomain(1.0, 1.0))


class TestComposedMap:
    def test_identity_step(self):
        V = ft.AnalyticityDomain(0.375, 0.375)
        cmap = it.ComposedMap.identity(2, 4, V)
        out = it.compose_step(cmap, translation_step([0.0, 0.0]))
        assert out.deviation() == 0.0
        assert out.deviations == (0.0,)

    def test_translations_add(self):
        V = ft.AnalyticityDomain(0.375, 0.375)
        cmap = it.ComposedMap.identity(2, 4, V)
        cmap = it.compose_step(cmap, translation_step([0.1, -0.2]))
        cmap = it.compose_step(cmap, translation_step([0.05, 0.3]))
        r, th = cmap.evaluate([[0.0, 0.0]], [[1.0, 2.0]])
        assert np.allclose(r, [[0.15, 0.1]], atol=1e-15)
        assert np.allclose(th, [[1.0, 2.0]])
        assert cmap.deviation() == pytest.approx(0.15)

    def test_pointwise_double_application(self):
        form = pendulum_form(1e-3)
        twist = ks.TwistData.from_form(form)
        sched = it.IterationSchedule.for_form(form, twist)
        cmap = it.ComposedMap.identity(1, form.fourier_cutoff, sched.verification_domain)
        steps = []
        for n in range(2):
            delta = sched.delta(n + 1)
            gen = ks.solve_generator(form, twist)
            step = ks.build_map(gen, form.domain.shrink(delta))
            res = ks.pullback(form, gen, delta, step=step)
            cmap = it.compose_step(cmap, step, reach=form.domain)
            steps.append(step)
            form = res.form
            twist = twist.remeasure(form)
        phi = ft.angle_grid(1, 64)
        R = np.full_like(phi, 0.2)
        r1, t1 = steps[1].inverse(R, phi)
        r0, t0 = steps[0].inverse(r1, t1)
        r, th = cmap.evaluate(R, phi)
        assert np.abs(r - r0).max() < 1e-11 and np.abs(th - t0).max() < 1e-11

    def test_domain_error(self):
        V = ft.AnalyticityDomain(0.375, 0.375)
        cmap = it.ComposedMap.identity(1, 4, V)
        with pytest.raises(DomainError) as info:
            it.compose_step(cmap, translation_step([0.5]), reach=ft.AnalyticityDomain(0.4, 0.4))
        assert info.value.code == "domain"

    def test_json_round_trip(self, pendulum_run):
        _, result, _ = pendulum_run
        back = it.ComposedMap.from_json(result.map.to_json())
        assert back.difference(result.map) == 0.0
        assert back.deviations == result.map.deviations


class TestRun:
    def test_unperturbed(self):
        form = pendulum_form(0.0)
        result, _ = run_form(form)
        assert result.converged and result.steps == 0
        assert result.final is form
        assert result.map.deviation() == 0.0

    def test_pendulum_converges(self, pendulum_run):
        form, result, sched = pendulum_run
        assert result.converged, result.status
        eps = result.epsilons()
        assert all(b < a for a, b in zip(eps, eps[1:]))
        assert eps[-1] < sched.stop_tol

    def test_quadratic_regression(self):
        result, _ = run_form(pendulum_form(), stop_tol=0.0, max_steps=4)
        slope, _ = it.quadratic_fit(result.epsilons())
        assert slope == pytest.approx(2.0, abs=0.1)

    def test_bookkeeping(self, pendulum_run, golden_run):
        for _, result, sched in (pendulum_run, golden_run):
            recs = result.records
            for prev, cur in zip(recs, recs[1:]):
                # S picks up S D + D^T S, twice the size of D
                assert cur.gamma_n <= prev.gamma_n + 2 * cur.epsilon_hat_n
                assert cur.eta_n <= prev.eta_n + 2 * cur.epsilon_hat_n
                assert cur.h1_ok and cur.h2_ok
                assert cur.step_ratio < sched.step_constant
            assert sum(result.map.deviations) <= sched.deviation_constant * recs[0].epsilon_n
            assert result.map.jacobian_deviation() < 0.5

    def test_hypothesis_failure_is_reported(self):
        form = pendulum_form(1e-4)
        twist = ks.TwistData.from_form(form)
        sched = it.IterationSchedule.for_form(form, twist, step_constant=1e3)
        with pytest.warns(it.KappaWarning):
            result = it.run(form, twist, sched)
        assert not result.converged
        assert result.status == "hypothesis"
        assert result.steps == 0
        assert not result.records[0].h2_ok

    @pytest.mark.filterwarnings("ignore::kolmogorov_kam.errors.AliasingWarning")
    def test_step_error_is_attached(self):
        form = pendulum_form(0.4)
        twist = ks.TwistData.from_form(form)
        sched = it.IterationSchedule.for_form(form, twist, step_constant=1e-12)
        with pytest.warns(it.KappaWarning):
            result = it.run(form, twist, sched)
        assert not result.converged
        assert result.status == result.error.code
        assert result.status in {"contraction", "step_size", "domain", "twist"}

    def test_on_record_callback(self):
        seen = []
        form = golden_form()
        twist = ks.TwistData.from_form(form)
        with pytest.warns(it.KappaWarning):
            result = it.run(form, twist, it.IterationSchedule.for_form(form, twist), seen.append)
        assert [r.n for r in seen] == [r.n for r in result.records]


def test_quadratic_fit_degenerate():
    assert all(math.isnan(x) for x in it.quadratic_fit([1e-3, 1e-6]))
    slope, intercept = it.quadratic_fit([1e-2, 1e-4, 1e-8, 1e-16])
    assert slope == pytest.approx(2.0) and intercept == pytest.approx(0.0, abs=1e-12)
