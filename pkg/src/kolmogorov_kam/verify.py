"""Independent checks of a computed conjugacy.

Everything here works pointwise: the original Hamiltonian and the composed
map are evaluated at sample points, and the true flow is integrated with a
fixed-step RK4 scheme.  No series composition is used.
"""

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import fourier_taylor as ft
from .errors import IntegratorError

NEWTON_TOL = 1e-14
NEWTON_MAX_ITER = 30


def _term_arrays(f):
    """``(k, m, c)`` arrays of the nonzero terms of ``f``."""
    d = f.dim
    items = f.terms()
    ks = np.zeros((len(items), d), dtype=np.int64)
    ms = np.zeros((len(items), d), dtype=np.int64)
    cs = np.zeros(len(items), dtype=np.complex128)
    for t, ((k, m), c) in enumerate(items.items()):
        ks[t] = k
        ms[t] = m
        cs[t] = c
    return ks, ms, cs


def _stack_terms(series):
    parts = [_term_arrays(f) for f in series]
    offsets = np.zeros(len(parts) + 1, dtype=np.int64)
    for i, p in enumerate(parts):
        offsets[i + 1] = offsets[i] + len(p[2])
    d = series[0].dim
    ks = np.concatenate([p[0] for p in parts]) if offsets[-1] else np.zeros((0, d), np.int64)
    ms = np.concatenate([p[1] for p in parts]) if offsets[-1] else np.zeros((0, d), np.int64)
    cs = np.concatenate([p[2] for p in parts]) if offsets[-1] else np.zeros(0, np.complex128)
    return ks, ms, cs, offsets


@numba.njit(cache=True)
def _field(ks, ms, cs, offsets, y, out):
    """Real parts of the stacked series at the real point ``y = (r, theta)``."""
    d = ks.shape[1]
    for s in range(offsets.shape[0] - 1):
        acc = 0.0
        for t in range(offsets[s], offsets[s + 1]):
            phase = 0.0
            mon = 1.0
            for j in range(d):
                phase += ks[t, j] * y[d + j]
                mon *= y[j] ** ms[t, j]
            acc += mon * (cs[t].real * math.cos(phase) - cs[t].imag * math.sin(phase))
        out[s] = acc


@numba.njit(cache=True)
def _hamilton_rhs(ks, ms, cs, offsets, y, buf, dy):
    # series order: dH/dtheta_j then dH/dr_j
    d = ks.shape[1]
    _field(ks, ms, cs, offsets, y, buf)
    for j in range(d):
        dy[j] = -buf[j]
        dy[d + j] = buf[d + j]


@numba.njit(cache=True)
def _rk4(ks, ms, cs, offsets, y0, dt, nsteps):
    n = y0.shape[0]
    traj = np.empty((nsteps + 1, n))
    traj[0] = y0
    y = y0.copy()
    buf = np.empty(offsets.shape[0] - 1)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    for s in range(nsteps):
        _hamilton_rhs(ks, ms, cs, offsets, y, buf, k1)
        for i in range(n):
            tmp[i] = y[i] + 0.5 * dt * k1[i]
        _hamilton_rhs(ks, ms, cs, offsets, tmp, buf, k2)
        for i in range(n):
            tmp[i] = y[i] + 0.5 * dt * k2[i]
        _hamilton_rhs(ks, ms, cs, offsets, tmp, buf, k3)
        for i in range(n):
            tmp[i] = y[i] + dt * k3[i]
        _hamilton_rhs(ks, ms, cs, offsets, tmp, buf, k4)
        for i in range(n):
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not math.isfinite(y[i]):
                return traj[:s + 1], False
        traj[s + 1] = y
    return traj, True


@numba.njit(cache=True)
def _eval_angle_terms(ks, cs, offsets, theta, out):
    """Real parts of stacked angle-only series at many points; ``out`` is (n, s)."""
    npts, d = theta.shape
    for p in range(npts):
        for s in range(offsets.shape[0] - 1):
            acc = 0.0
            for t in range(offsets[s], offsets[s + 1]):
                phase = 0.0
                for j in range(d):
                    phase += ks[t, j] * theta[p, j]
                acc += cs[t].real * math.cos(phase) - cs[t].imag * math.sin(phase)
            out[p, s] = acc


def _angle_values(series, theta):
    ks, _, cs, offsets = _stack_terms(series)
    out = np.empty((len(theta), len(series)))
    _eval_angle_terms(ks, cs, offsets, np.ascontiguousarray(theta, dtype=float), out)
    return out


def _as_map(psi):
    """Callable ``(R, phi) -> (r, theta)`` for a composed map or a plain callable."""
    if hasattr(psi, "evaluate"):
        return psi.evaluate
    return psi


@dataclass(frozen=True)
class ConjugacyResidual:
    freq_err: float
    angle_dep_err: float


def _grid_points(dim, n):
    return ft.angle_grid(dim, n)


def conjugacy_residual(H, psi, omega, rho=None, points=None, fd_step=None):
    """Frequency and angle-dependence defects of ``H o psi`` at ``R = 0``.

    Parameters
    ----------
    H : KolmogorovForm
        The original Hamiltonian.
    psi : ComposedMap or callable
        Map from normalized ``(R, phi)`` to original ``(r, theta)``.
    omega : array_like
    rho : float, optional
        Action scale for the finite-difference step ``1e-5 rho``; defaults to
        the radius of ``psi.domain``.
    points : int, optional
        Grid points per angle (64 in one dimension, 32 otherwise).
    fd_step : float, optional
        Overrides ``1e-5 rho``.

    Returns
    -------
    ConjugacyResidual
        ``freq_err = max |d(H o psi)/dR (0, phi) - omega|`` (central
        differences with one Richardson extrapolation) and ``angle_dep_err``,
        the spread of ``H o psi (0, phi)`` over the grid.
    """
    omega = np.asarray(omega, dtype=float)
    d = len(omega)
    if rho is None:
        rho = psi.domain.rho
    if points is None:
        points = 64 if d == 1 else 32
    h = 1e-5 * rho if fd_step is None else fd_step
    series = H.hamiltonian()
    fmap = _as_map(psi)
    phi = _grid_points(d, points)

    def value(R):
        r, theta = fmap(R, phi)
        return ft.evaluate_many(series, r, theta).real

    base = value(np.zeros_like(phi))
    freq = np.empty((len(phi), d))
    for j in range(d):
        e = np.zeros_like(phi)
        e[:, j] = 1.0

        def central(step):
            return (value(step * e) - value(-step * e)) / (2 * step)

        freq[:, j] = (4 * central(h / 2) - central(h)) / 3
    freq_err = float(np.abs(freq - omega).max())
    return ConjugacyResidual(freq_err, float(base.max() - base.min()))


@dataclass(frozen=True)
class FlowResult:
    max_distance: float
    frequency: np.ndarray
    frequency_rel_err: float
    times: np.ndarray
    distances: np.ndarray
    angle_residual: float


def integrate(H, r0, theta0, T, dt):
    """RK4 trajectory of Hamilton's equations for the series of ``H``.

    Returns the times and an array of rows ``(r, theta)``.

    Raises
    ------
    IntegratorError
        If the state stops being finite.
    """
    series = H.hamiltonian()
    d = series.dim
    parts = ([ft.partial_theta(series, j) for j in range(d)]
             + [ft.partial_r(series, j) for j in range(d)])
    ks, ms, cs, offsets = _stack_terms(parts)
    nsteps = int(round(T / dt))
    y0 = np.concatenate([np.real(r0), np.real(theta0)]).astype(float)
    traj, ok = _rk4(ks, ms, cs, offsets, y0, float(dt), nsteps)
    if not ok:
        raise IntegratorError(f"trajectory blew up after {len(traj) - 1} steps")
    return dt * np.arange(len(traj)), traj


def _nearest_angles(W, theta, seed):
    """Solve ``phi + W(phi) = theta`` by Newton's method from ``seed``."""
    d = len(W)
    dW = [ft.partial_theta(W[i], j) for i in range(d) for j in range(d)]
    phi = np.array(seed, dtype=float)
    for _ in range(NEWTON_MAX_ITER):
        F = phi + _angle_values(W, phi) - theta
        if np.abs(F).max() < NEWTON_TOL:
            break
        J = _angle_values(dW, phi).reshape(-1, d, d) + np.eye(d)
        phi = phi - np.linalg.solve(J, F[..., None])[..., 0]
    F = phi + _angle_values(W, phi) - theta
    return phi, float(np.abs(F).max())


def flow_invariance(H, psi, theta0, T=100.0, dt=1e-3, omega=None):
    """Distance from the true trajectory to the computed torus ``psi(0, .)``.

    The trajectory starts at ``psi(0, theta0)``.  At every step the angle
    parameter ``phi`` with ``phi + W(phi) = theta(t)`` is found by Newton's
    method seeded at ``theta0 + omega t``; the distance is the action gap
    ``|r(t) - A(phi)|``.  The rotation vector is the least-squares slope of
    ``phi(t)``.

    Parameters
    ----------
    H : KolmogorovForm
        The original Hamiltonian.
    psi : ComposedMap
    theta0 : array_like
    T, dt : float
        Horizon and fixed RK4 step.
    omega : array_like, optional
        Defaults to ``H.omega``.
    """
    d = H.dim
    omega = H.omega.array if omega is None else np.asarray(omega, dtype=float)
    theta0 = np.asarray(theta0, dtype=float).reshape(d)
    r0, th0 = psi.evaluate(np.zeros((1, d)), theta0.reshape(1, d))
    times, traj = integrate(H, r0[0].real, th0[0].real, T, dt)
    r, theta = traj[:, :d], traj[:, d:]
    seed = theta0 + np.outer(times, omega)
    phi, angle_res = _nearest_angles(list(psi.W), theta, seed)
    A = _angle_values(list(psi.A), phi)
    dist = np.sqrt(((r - A) ** 2).sum(axis=1))
    X = np.column_stack([times, np.ones_like(times)])
    coef, *_ = np.linalg.lstsq(X, phi, rcond=None)
    freq = coef[0]
    rel = float(np.abs(freq - omega).max() / np.abs(omega).max())
    return FlowResult(float(dist.max()), freq, rel, times, dist, angle_res)


def symplectic_check(psi, dim, samples=100, domain=None, seed=0, step=1e-6):
    """Max entry of ``J^T Omega J - Omega`` at random real points.

    ``J`` is the central finite-difference Jacobian of ``psi`` with
    coordinates ordered (angles, actions) and
    ``Omega = [[0, I], [-I, 0]]``.

    Parameters
    ----------
    psi : ComposedMap or callable
        ``(action, angle) -> (action, angle)`` on arrays of shape ``(n, d)``.
    dim : int
    samples : int
    domain : AnalyticityDomain, optional
        Actions are drawn from ``[-rho, rho]^d``; defaults to ``psi.domain``
        or ``rho = 0.1``.
    """
    fmap = _as_map(psi)
    if domain is None:
        domain = getattr(psi, "domain", None)
    rho = 0.1 if domain is None else domain.rho
    rng = np.random.default_rng(seed)
    d = dim
    R = rng.uniform(-rho, rho, size=(samples, d))
    phi = rng.uniform(0, 2 * np.pi, size=(samples, d))

    def out(z):
        r, th = fmap(z[:, d:], z[:, :d])
        return np.concatenate([np.real(th), np.real(r)], axis=1)

    z = np.concatenate([phi, R], axis=1)
    J = np.empty((samples, 2 * d, 2 * d))
    for j in range(2 * d):
        e = np.zeros(2 * d)
        e[j] = step
        J[:, :, j] = (out(z + e) - out(z - e)) / (2 * step)
    Om = np.block([[np.zeros((d, d)), np.eye(d)], [-np.eye(d), np.zeros((d, d))]])
    defect = np.einsum("sji,jk,skl->sil", J, Om, J) - Om
    return float(np.abs(defect).max())
