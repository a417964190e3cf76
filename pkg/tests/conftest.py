"""Shared builders and cached reference runs."""

import warnings

import numpy as np
import pytest

from kolmogorov_kam import diophantine as dp
from kolmogorov_kam import fourier_taylor as ft
from kolmogorov_kam import iteration as it
from kolmogorov_kam import kolmogorov_step as ks
from kolmogorov_kam.hamiltonians import GOLDEN_MEAN, golden2d, pendulum

K_REF = 16
M_REF = 4
PENDULUM_EPS = 1e-4
GOLDEN_EPS = 1e-5


def pendulum_form(eps=PENDULUM_EPS, K=K_REF, M=M_REF):
    omega = dp.certify([1.0])
    f0, f1 = pendulum(omega.array, K, M)
    return ks.KolmogorovForm.from_hamiltonian(f0, f1, eps, omega, ft.AnalyticityDomain(1.0, 1.0))


def golden_form(eps=GOLDEN_EPS, K=K_REF, M=M_REF):
    omega = dp.certify([1.0, GOLDEN_MEAN])
    f0, f1 = golden2d(omega.array, K, M)
    return ks.KolmogorovForm.from_hamiltonian(f0, f1, eps, omega, ft.AnalyticityDomain(1.0, 1.0))


def run_form(form, **schedule_kw):
    twist = ks.TwistData.from_form(form)
    schedule = it.IterationSchedule.for_form(form, twist, **schedule_kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", it.KappaWarning)
        result = it.run(form, twist, schedule)
    return result, schedule


def random_series(rng, dim, K, M, real=True, decay=0.7):
    """Random series with an ``exp(-decay |k|_1)`` envelope."""
    shape = (2 * K + 1,) * dim + (M + 1,) * dim
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    ks_ = np.meshgrid(*([np.arange(-K, K + 1)] * dim), indexing="ij")
    l1 = sum(np.abs(k) for k in ks_)
    c *= np.exp(-decay * l1).reshape(l1.shape + (1,) * dim)
    mexp = np.meshgrid(*([np.arange(M + 1)] * dim), indexing="ij")
    c *= (sum(mexp) <= M)
    f = ft.FourierTaylorSeries(c)
    return ft.hermitian_part(f) if real else f


@pytest.fixture(scope="session")
def pendulum_run():
    form = pendulum_form()
    result, schedule = run_form(form)
    return form, result, schedule


@pytest.fixture(scope="session")
def golden_run():
    form = golden_form()
    result, schedule = run_form(form)
    return form, result, schedule
