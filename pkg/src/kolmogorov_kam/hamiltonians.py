"""Closed-form Hamiltonians ``f0(r) + eps f1(r, theta)`` shipped with the CLI."""

import numpy as np

from .fourier_taylor import FourierTaylorSeries as Series


def _unit(i, d):
    e = [0] * d
    e[i] = 1
    return tuple(e)


def integrable_part(omega, hessian, K, M, cubic=None):
    """``omega . r + 1/2 r^T S r`` plus optional diagonal cubic terms ``c_i r_i^3``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    d = len(omega)
    S = np.asarray(hessian, dtype=float).reshape(d, d)
    zero = (0,) * d
    terms = {}
    for i in range(d):
        terms[(zero, _unit(i, d))] = omega[i]
    for i in range(d):
        for j in range(i, d):
            m = [0] * d
            m[i] += 1
            m[j] += 1
            coef = 0.5 * S[i, i] if i == j else S[i, j]
            if coef:
                terms[(zero, tuple(m))] = terms.get((zero, tuple(m)), 0.0) + coef
    if cubic is not None:
        for i, c in enumerate(np.atleast_1d(np.asarray(cubic, dtype=float))):
            if c:
                if M < 3:
                    raise ValueError("cubic terms need taylor_degree >= 3")
                terms[(zero, tuple(3 if j == i else 0 for j in range(d)))] = c
    return Series.from_terms(terms, d, K, M)


def pendulum(omega, K, M, hessian=1.0, cubic=0.0, amplitude=1.0):
    """``omega r + S r^2 / 2 + c r^3`` perturbed by ``amplitude * cos(theta)``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if len(omega) != 1:
        raise ValueError("pendulum needs a one-dimensional omega")
    f0 = integrable_part(omega, [[hessian]], K, M, [cubic])
    f1 = Series.cos_mode((1,), amplitude, K, M)
    return f0, f1


def golden2d(omega, K, M, hessian=None, amplitude=1.0):
    """``omega . r + |r|^2 / 2`` perturbed by ``amplitude * cos(theta_1 + theta_2)``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if len(omega) != 2:
        raise ValueError("golden2d needs a two-dimensional omega")
    S = np.eye(2) if hessian is None else np.asarray(hessian, dtype=float)
    f0 = integrable_part(omega, S, K, M)
    f1 = Series.cos_mode((1, 1), amplitude, K, M)
    return f0, f1


GOLDEN_MEAN = (1 + 5 ** 0.5) / 2

PRESETS = {"pendulum": pendulum, "golden2d": golden2d}
