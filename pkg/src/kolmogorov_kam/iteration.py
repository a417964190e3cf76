"""The quadratic scheme: schedule, hypothesis checks and composed maps.

Step ``n + 1`` loses ``delta_{n+1} = delta / 3^(n+1)`` of analyticity with
``delta = min(rho_0, Delta_0, 1)``, so the domains never shrink below half
their initial size.  The running composition of inverse step maps is stored
on the fixed verification domain ``(3 rho_0 / 8, 3 Delta_0 / 8)``.
"""

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fourier_taylor as ft
from .errors import DomainError, KAMError
from .kolmogorov_step import TwistData, build_map, pullback, solve_generator

Series = ft.FourierTaylorSeries

# Measured maxima on the pendulum and golden2d presets are 1.1e-8 and 0.75.
DEFAULT_STEP_CONSTANT = 1e-6
DEFAULT_DEVIATION_CONSTANT = 2.0
STOP_TOL_FACTOR = 1e-13
DEFAULT_MAX_STEPS = 8


class KappaWarning(RuntimeWarning):
    """The initial perturbation exceeds the bounding-lemma threshold."""


def kappa_threshold(C1, C2, C3, C4, c1, c2):
    """Admissible ``x`` bound of the bounding lemma.

    For ``x < kappa_1`` every term ``x^(2^n) C1^n C2^(n^2)`` is below ``c1``;
    for ``x < kappa_2`` the terms with ``(C3, C4)`` are below
    ``c2 / (3 * 2^(n + n^2))`` and so sum to less than ``c2``.  The second
    bound is the first one applied to ``(2 C3, 2 C4, c2 / 3)``.  Both are
    capped at one, since the argument needs ``x < 1``.

    Returns
    -------
    float
        ``min(kappa_1, kappa_2)``.
    """
    for name, val in (("C1", C1), ("C2", C2), ("C3", C3), ("C4", C4), ("c1", c1), ("c2", c2)):
        if not val > 0:
            raise ValueError(f"{name} must be positive")
    ln2 = math.log(2.0)
    k1 = math.exp(min(-2 * math.log(C2), -math.log(C1), math.log(c1), 0.0) / ln2)
    k2 = math.exp(min(-2 * math.log(2 * C4), -math.log(2 * C3), math.log(c2 / 3), 0.0) / ln2)
    return min(k1, k2)


@dataclass(frozen=True)
class IterationSchedule:
    """Analyticity-loss schedule and the scheme constants.

    Attributes
    ----------
    rho0, delta0 : float
        Initial domain.
    nu : float
        Loss exponent ``2 (d + tau + 2)``.
    step_constant : float
        ``C`` in ``eps_{n+1} <= C eps_n^2 / delta_{n+1}^(2 nu)`` and in the
        smallness hypothesis ``eps_n < delta_{n+1}^nu / C``.
    deviation_constant : float
        Bound on ``sum |psi_n - psi_{n-1}| / eps_0``.
    eta0 : float
        Allowed drift of ``S`` from ``S_hat``; must be below ``beta``.
    gamma0 : float
        Initial aggregate size.
    """

    rho0: float
    delta0: float
    nu: float
    step_constant: float
    deviation_constant: float
    eta0: float
    gamma0: float
    max_steps: int = DEFAULT_MAX_STEPS
    stop_tol: float = None

    def __post_init__(self):
        if self.stop_tol is None:
            object.__setattr__(self, "stop_tol", STOP_TOL_FACTOR * self.gamma0)

    @classmethod
    def for_form(cls, form, twist, step_constant=DEFAULT_STEP_CONSTANT,
                 deviation_constant=DEFAULT_DEVIATION_CONSTANT, eta0=None,
                 max_steps=DEFAULT_MAX_STEPS, stop_tol=None):
        cert = form.omega.certificate
        tau = form.dim if cert is None else cert.tau
        eta0 = 0.5 * twist.beta if eta0 is None else eta0
        return cls(form.domain.rho, form.domain.delta_strip, 2.0 * (form.dim + tau + 2),
                   step_constant, deviation_constant, eta0, twist.gamma, max_steps, stop_tol)

    @property
    def delta_base(self):
        return min(self.rho0, self.delta0, 1.0)

    def delta(self, n):
        """Loss ``delta_n`` paid by step ``n >= 1`` (``delta_0 = delta``)."""
        return self.delta_base / 3.0 ** n

    def domain(self, n):
        """``A_{rho_n, Delta_n}``."""
        lost = 0.5 * self.delta_base * (1.0 - 3.0 ** (-n))
        return ft.AnalyticityDomain(self.rho0 - lost, self.delta0 - lost)

    @property
    def verification_domain(self):
        return ft.AnalyticityDomain(3 * self.rho0 / 8, 3 * self.delta0 / 8)

    @property
    def h2_limit(self):
        return min(self.rho0 / 3, self.delta0 / 3, 1.0)

    def kappa(self):
        """Bounding-lemma threshold for the configured step constant."""
        C, nu, delta = self.step_constant, self.nu, self.delta_base
        C1 = C * delta ** (-2 * nu) * 3.0 ** (2 * nu)
        C2 = 3.0 ** nu
        c1 = delta ** nu * 3.0 ** (-nu) / C
        c2 = min(self.eta0, self.gamma0) * delta ** nu / (C * 3.0 ** nu)
        return kappa_threshold(C1, C2, C1, C2, c1, c2)

    def log10_eps_bound(self, eps0, n):
        """``log10`` of ``C^n eps0^(2^n) delta^(-2 nu n) 3^(nu n (n+1))``."""
        if eps0 == 0:
            return -math.inf
        C, nu, delta = self.step_constant, self.nu, self.delta_base
        return (n * math.log10(C) + 2 ** n * math.log10(eps0) - 2 * nu * n * math.log10(delta)
                + nu * n * (n + 1) * math.log10(3.0))

    def log10_eps_hat_bound(self, eps0, n):
        """``log10`` of ``C^n eps0^(2^(n-1)) delta^nu 3^(nu n^2) delta^(-2 nu n)``."""
        if eps0 == 0 or n < 1:
            return -math.inf
        C, nu, delta = self.step_constant, self.nu, self.delta_base
        return (n * math.log10(C) + 2 ** (n - 1) * math.log10(eps0) + nu * math.log10(delta)
                + nu * n * n * math.log10(3.0) - 2 * nu * n * math.log10(delta))


@dataclass(frozen=True)
class HypothesisCheck:
    h1_ok: bool
    h2_ok: bool
    details: dict


def check_hypotheses(form, twist, schedule, n):
    """Evaluate the two hypotheses of the quadratic scheme for step ``n + 1``.

    ``twist`` carries ``eta`` and ``gamma`` measured on ``form``.
    """
    dom = form.domain
    rho_ok = schedule.rho0 / 2 <= dom.rho <= schedule.rho0 * (1 + 1e-15)
    strip_ok = schedule.delta0 / 2 < dom.delta_strip <= schedule.delta0 * (1 + 1e-15)
    gamma_ok = twist.gamma <= 2 * schedule.gamma0
    eta_ok = twist.eta <= schedule.eta0 and schedule.eta0 < twist.beta
    h1 = bool(rho_ok and strip_ok and gamma_ok and eta_ok)
    delta_next = schedule.delta(n + 1)
    threshold = delta_next ** schedule.nu / schedule.step_constant
    delta_ok = 0 < delta_next <= schedule.h2_limit
    eps_ok = form.epsilon < threshold
    h2 = bool(delta_ok and eps_ok)
    details = {"rho_ok": rho_ok, "strip_ok": strip_ok, "gamma_ok": gamma_ok, "eta_ok": eta_ok,
               "delta_ok": delta_ok, "eps_ok": eps_ok, "eps_threshold": threshold}
    return HypothesisCheck(h1, h2, details)


# -- composed map ------------------------------------------------------
def _matvec_series(B, x):
    return [sum((B[i][j] * x[j] for j in range(len(x))), start=Series.zeros(
        x[0].dim, x[0].fourier_cutoff, x[0].taylor_degree)) for i in range(len(B))]


def _linear_in_R(const, lin):
    """Series ``const_i + sum_j lin_ij R_j`` for angle-only inputs."""
    d = len(const)
    K = max(s.fourier_cutoff for s in const)
    out = []
    for i in range(d):
        s = const[i].resize(K, 1)
        for j in range(d):
            e = [0] * d
            e[j] = 1
            s = s + lin[i][j].resize(K, 1) * Series.monomial(e, d, K, 1)
        out.append(s)
    return out


@dataclass(frozen=True, eq=False)
class ComposedMap:
    """``psi(R, phi) = (A(phi) + B(phi) R, phi + W(phi))``, newest to original variables.

    Only valid on ``domain`` (the verification domain).
    """

    W: tuple
    A: tuple
    B: tuple
    domain: ft.AnalyticityDomain
    deviations: tuple = field(default=())

    @classmethod
    def identity(cls, dim, fourier_cutoff, domain):
        z = Series.zeros(dim, fourier_cutoff, 0)
        one = Series.constant(1.0, dim, fourier_cutoff, 0)
        B = tuple(tuple(one if i == j else z for j in range(dim)) for i in range(dim))
        return cls((z,) * dim, (z,) * dim, B, domain, ())

    @property
    def dim(self):
        return len(self.W)

    def evaluate(self, R, phi):
        """Pointwise ``(r, theta) = psi(R, phi)`` for arrays of shape ``(n, d)``."""
        R = np.atleast_2d(np.asarray(R, dtype=complex))
        phi = np.atleast_2d(np.asarray(phi, dtype=complex))
        d = self.dim
        zero = np.zeros_like(phi)
        theta = phi + np.stack([ft.evaluate_many(s, zero, phi) for s in self.W], axis=1)
        r = np.stack([ft.evaluate_many(s, zero, phi) for s in self.A], axis=1)
        for i in range(d):
            for j in range(d):
                r[:, i] += ft.evaluate_many(self.B[i][j], zero, phi) * R[:, j]
        return r, theta

    def angle_jacobian(self, phi):
        """Pointwise ``d theta / d phi`` of shape ``(n, d, d)``."""
        phi = np.atleast_2d(np.asarray(phi, dtype=complex))
        d = self.dim
        zero = np.zeros_like(phi)
        out = np.empty((len(phi), d, d), dtype=complex)
        for i in range(d):
            for j in range(d):
                out[:, i, j] = (i == j) + ft.evaluate_many(ft.partial_theta(self.W[i], j), zero, phi)
        return out

    def difference(self, other):
        """Majorant of ``psi - other`` on the verification domain."""
        d = self.dim
        ang = [a - b for a, b in zip(self.W, other.W)]
        lin = [[self.B[i][j] - other.B[i][j] for j in range(d)] for i in range(d)]
        act = _linear_in_R([a - b for a, b in zip(self.A, other.A)], lin)
        return max(ft.strip_norm_majorant(s, self.domain) for s in (*ang, *act))

    def deviation(self):
        """Majorant of ``psi - Id`` on the verification domain."""
        d = self.dim
        lin = [[self.B[i][j] - (1.0 if i == j else 0.0) for j in range(d)] for i in range(d)]
        act = _linear_in_R(list(self.A), lin)
        return max(ft.strip_norm_majorant(s, self.domain) for s in (*self.W, *act))

    def jacobian_deviation(self):
        """Max row sum of the majorants of ``d psi - Id`` on the verification domain.

        Rows are ordered (angles, actions), columns (phi, R).
        """
        d = self.dim
        dom = self.domain
        act = _linear_in_R(list(self.A), [[self.B[i][j] for j in range(d)] for i in range(d)])
        rows = []
        for i in range(d):
            rows.append(sum(ft.strip_norm_majorant(ft.partial_theta(self.W[i], j), dom)
                            for j in range(d)))
        for i in range(d):
            s = sum(ft.strip_norm_majorant(ft.partial_theta(act[i], j), dom) for j in range(d))
            s += sum(ft.strip_norm_majorant(self.B[i][j] - (1.0 if i == j else 0.0), dom)
                     for j in range(d))
            rows.append(s)
        return max(rows)

    def to_json(self):
        return {"domain": {"rho": self.domain.rho, "delta": self.domain.delta_strip},
                "W": [ft.to_json(s) for s in self.W],
                "A": [ft.to_json(s) for s in self.A],
                "B": [[ft.to_json(s) for s in row] for row in self.B],
                "deviations": list(self.deviations)}

    @classmethod
    def from_json(cls, data):
        dom = ft.AnalyticityDomain(data["domain"]["rho"], data["domain"]["delta"])
        return cls(tuple(ft.from_json(s) for s in data["W"]),
                   tuple(ft.from_json(s) for s in data["A"]),
                   tuple(tuple(ft.from_json(s) for s in row) for row in data["B"]),
                   dom, tuple(data.get("deviations", ())))


def compose_step(cmap, step, reach=None):
    """Append the inverse of ``step`` on the right: ``psi_new = psi o phi_step^-1``.

    ``reach`` is the domain the step map is valid on; the image of the
    verification domain must stay inside it.

    Raises
    ------
    DomainError
        If the step inverse maps the verification domain outside ``reach``.
    """
    d = cmap.dim
    V = cmap.domain
    w, A_s, B_s = step.w, step.A, step.B
    if reach is not None:
        ang = max(ft.strip_norm_majorant(s, V) for s in w)
        act = max(ft.strip_norm_majorant(s, V) for s in _linear_in_R(list(A_s), B_s))
        if V.delta_strip + ang > reach.delta_strip or act > reach.rho:
            raise DomainError(f"step inverse maps the verification domain outside "
                              f"(rho={reach.rho:.4g}, Delta={reach.delta_strip:.4g})")
    flat = list(cmap.W) + list(cmap.A) + [e for row in cmap.B for e in row]
    comp = [ft.hermitian_part(s) for s in ft.compose_angle_many(flat, w)]
    W_c, A_c = comp[:d], comp[d:2 * d]
    B_c = [comp[2 * d + i * d: 2 * d + (i + 1) * d] for i in range(d)]
    W = tuple(w[i] + W_c[i] for i in range(d))
    BA = _matvec_series(B_c, list(A_s))
    A = tuple(A_c[i] + BA[i] for i in range(d))
    B = tuple(tuple(sum((B_c[i][k] * B_s[k][j] for k in range(d)),
                        start=Series.zeros(d, W_c[0].fourier_cutoff, 0)) for j in range(d))
              for i in range(d))
    new = ComposedMap(W, A, B, V, cmap.deviations)
    dev = new.difference(cmap)
    return ComposedMap(W, A, B, V, cmap.deviations + (dev,))


# -- the run -----------------------------------------------------------
@dataclass(frozen=True)
class IterationRecord:
    n: int
    delta_n: float
    epsilon_n: float
    epsilon_hat_n: float
    epsilon_hat_inverse_n: float
    gamma_n: float
    eta_n: float
    h1_ok: bool
    h2_ok: bool
    wall_time: float
    step_ratio: float = math.nan
    map_deviation: float = 0.0


@dataclass(frozen=True, eq=False)
class RunResult:
    records: list
    final: object
    map: ComposedMap
    converged: bool
    status: str
    error: KAMError = None
    kappa: float = math.nan

    @property
    def steps(self):
        return len(self.records) - 1

    def epsilons(self):
        return [rec.epsilon_n for rec in self.records]


def quadratic_fit(epsilons):
    """Least-squares slope and intercept of ``log eps_{n+1}`` against ``log eps_n``.

    Returns ``(nan, nan)`` with fewer than two positive pairs.
    """
    pairs = [(a, b) for a, b in zip(epsilons, epsilons[1:]) if a > 0 and b > 0]
    if len(pairs) < 2:
        return math.nan, math.nan
    x = np.log([p[0] for p in pairs])
    y = np.log([p[1] for p in pairs])
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def run(initial, twist, schedule, on_record=None):
    """Iterate Kolmogorov steps until ``eps_n < stop_tol``.

    Parameters
    ----------
    initial : KolmogorovForm
    twist : TwistData
        Reference Hessian data measured on ``initial``.
    schedule : IterationSchedule
    on_record : callable, optional
        Called with each new :class:`IterationRecord`.

    Returns
    -------
    RunResult
        Errors raised by a step end the run; the records so far are kept and
        the error is attached.
    """
    kappa = schedule.kappa()
    if initial.epsilon >= kappa:
        warnings.warn(f"eps_0 = {initial.epsilon:.3e} is above the bounding-lemma threshold "
                      f"kappa = {kappa:.3e}; convergence is not guaranteed",
                      KappaWarning, stacklevel=2)
    V = schedule.verification_domain
    cmap = ComposedMap.identity(initial.dim, initial.fourier_cutoff, V)
    form, tw = initial, twist
    hyp = check_hypotheses(form, tw, schedule, 0)
    records = [IterationRecord(0, schedule.delta(0), form.epsilon, 0.0, 0.0, tw.gamma, tw.eta,
                               hyp.h1_ok, hyp.h2_ok, 0.0)]
    if on_record:
        on_record(records[0])
    status, error = "max_steps", None
    for n in range(schedule.max_steps):
        if form.epsilon == 0.0 or form.epsilon < schedule.stop_tol:
            status = "converged"
            break
        if not (hyp.h1_ok and hyp.h2_ok):
            status = "hypothesis"
            break
        start = time.perf_counter()
        delta = schedule.delta(n + 1)
        try:
            gen = solve_generator(form, tw)
            step = build_map(gen, form.domain.shrink(delta))
            res = pullback(form, gen, delta, step=step)
            cmap = compose_step(cmap, step, reach=form.domain)
        except KAMError as exc:
            status, error = exc.code, exc
            break
        new = res.form
        tw = tw.remeasure(new)
        elapsed = time.perf_counter() - start
        hyp = check_hypotheses(new, tw, schedule, n + 1)
        with np.errstate(all="ignore"):
            ratio = float(np.float64(new.epsilon) * delta ** (2 * schedule.nu)
                          / np.float64(form.epsilon) ** 2)
        rec = IterationRecord(n + 1, delta, new.epsilon, step.forward_deviation(),
                              step.inverse_deviation(step.domain.shrink(delta / 4)),
                              tw.gamma, tw.eta, hyp.h1_ok, hyp.h2_ok, elapsed, ratio,
                              cmap.deviations[-1])
        records.append(rec)
        if on_record:
            on_record(rec)
        form = new
    else:
        if form.epsilon == 0.0 or form.epsilon < schedule.stop_tol:
            status = "converged"
    return RunResult(records, form, cmap, status == "converged", status, error, kappa)
