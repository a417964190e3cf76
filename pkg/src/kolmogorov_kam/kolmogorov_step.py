"""One linearized Kolmogorov step.

A Hamiltonian in Kolmogorov form reads

    H(r, theta) = m + omega . r + 1/2 r^T S(theta) r + eps h(r, theta) + g(r, theta)

with ``g = O(r^3)``.  The generating function

    A(theta, R) = u(theta) + alpha . theta + (theta + v(theta)) . R

defines the symplectic map ``r = dA/dtheta``, ``phi = dA/dR``.  Writing
``D_ij = d v_j / d theta_i`` (so ``D = dv^T``), the map is

    phi = theta + v(theta),   r = R + dR,   dR = grad u + alpha + D R.

``u``, ``alpha`` and ``v`` are chosen to cancel every first-order term in
``eps``, leaving a remainder of order ``eps^2``.
"""

import warnings
from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from . import cohomology
from . import fourier_taylor as ft
from .diophantine import FrequencyVector
from .errors import ContractionError, StepSizeError, TruncationWarning, TwistError

Series = ft.FourierTaylorSeries

NEUMANN_TOL = 1e-15
INVERSE_TOL = 1e-13
MAX_INNER_ITER = 200
SYMMETRY_TOL = 1e-12
RESIDUAL_TOL = 1e-12


# -- small matrix-of-series helpers ------------------------------------
def _zero_angle(d, K):
    return Series.zeros(d, K, 0)


def _const_angle(value, d, K):
    return Series.constant(value, d, K, 0)


def _matmul(a, b):
    n, p, q = len(a), len(b), len(b[0])
    return [[sum((a[i][k] * b[k][j] for k in range(p)), start=_zero_like(a[i][0]))
             for j in range(q)] for i in range(n)]


def _zero_like(f):
    return Series.zeros(f.dim, f.fourier_cutoff, f.taylor_degree)


def _transpose(a):
    return [list(row) for row in zip(*a)]


def _identity(d, K):
    return [[_const_angle(1.0 if i == j else 0.0, d, K) for j in range(d)] for i in range(d)]


def _constant_matrix(mat, d, K):
    return [[_const_angle(float(mat[i][j]), d, K) for j in range(d)] for i in range(d)]


def _mean_matrix(entries):
    d = len(entries)
    K = entries[0][0].fourier_cutoff
    idx = (K,) * d + (0,) * d
    return np.array([[entries[i][j].coeffs[idx] for j in range(d)] for i in range(d)])


def _real(f):
    return ft.hermitian_part(f)


def _strip_history(f):
    """Copy of ``f`` with its inherited truncation mass reset."""
    return Series(f.coeffs, 0.0, drop_tol=0.0)


def hessian_entry(f, i, j):
    """``d^2 f / dr_i dr_j`` at ``r = 0`` as an angle series."""
    d = f.dim
    m = [0] * d
    m[i] += 1
    m[j] += 1
    scale = 2.0 if i == j else 1.0
    return ft.taylor_coefficient(f, m) * scale


def gradient_entry(f, i):
    """``d f / dr_i`` at ``r = 0`` as an angle series."""
    m = [0] * f.dim
    m[i] = 1
    return ft.taylor_coefficient(f, m)


# -- domain types ------------------------------------------------------
@dataclass(frozen=True, eq=False)
class KolmogorovForm:
    """``m + omega . r + 1/2 r^T S r + epsilon h + g`` on ``domain``.

    ``S`` is a symmetric ``d x d`` nested tuple of angle-only series, ``g``
    holds only monomials of degree ``>= 3`` and ``h`` is normalized to
    majorant at most one on ``domain``.
    """

    m: float
    omega: FrequencyVector
    S: tuple
    epsilon: float
    h: Series
    g: Series
    domain: ft.AnalyticityDomain

    def __post_init__(self):
        d = self.omega.dim
        if self.h.dim != d or self.g.dim != d:
            raise ValueError("series dimension does not match omega")
        S = tuple(tuple(row) for row in self.S)
        if len(S) != d or any(len(row) != d for row in S):
            raise ValueError(f"S must be a {d}x{d} matrix")
        for i in range(d):
            for j in range(d):
                if not S[i][j].is_angle_only():
                    raise ValueError(f"S[{i}][{j}] depends on the actions")
                if j > i:
                    gap = np.abs(S[i][j].resize(S[j][i].fourier_cutoff, 0).coeffs
                                 - S[j][i].resize(S[i][j].fourier_cutoff, 0).coeffs).max()
                    scale = max(np.abs(S[i][j].coeffs).max(initial=0.0), 1.0)
                    if gap > SYMMETRY_TOL * scale:
                        raise ValueError(f"S is not symmetric at ({i}, {j})")
        object.__setattr__(self, "S", S)
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        low = ft.taylor_part(self.g, 0, 2)
        if not low.is_zero():
            raise ValueError("g must contain only monomials of degree >= 3")
        norm = ft.strip_norm_majorant(self.h, self.domain)
        if norm > 1 + 1e-12:
            raise ValueError(f"h must have majorant <= 1 on the domain, got {norm}")
        object.__setattr__(self, "m", float(np.real(self.m)))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def dim(self):
        return self.omega.dim

    @property
    def fourier_cutoff(self):
        return max(self.h.fourier_cutoff, self.g.fourier_cutoff,
                   max(e.fourier_cutoff for row in self.S for e in row))

    @property
    def taylor_degree(self):
        return max(self.h.taylor_degree, self.g.taylor_degree, 2)

    @classmethod
    def from_hamiltonian(cls, f0, f1, epsilon, omega, domain):
        """Kolmogorov form of ``f0(r) + epsilon f1(r, theta)``.

        ``f1`` is rescaled to unit majorant on ``domain`` and the factor moves
        into ``epsilon``.  The gradient of ``f0`` at ``r = 0`` must equal
        ``omega``.
        """
        d = omega.dim
        if f0.dim != d or f1.dim != d:
            raise ValueError("series dimension does not match omega")
        if not (f0 - ft.average(f0)).is_zero():
            raise ValueError("f0 must not depend on the angles")
        K = max(f0.fourier_cutoff, f1.fourier_cutoff)
        M = max(f0.taylor_degree, f1.taylor_degree, 2)
        f0, f1 = f0.resize(K, M), f1.resize(K, M)
        zero = (0,) * d
        m0 = f0.coefficient(zero, zero)
        grad = np.array([gradient_entry(f0, i).coefficient(zero, zero) for i in range(d)])
        if np.abs(grad - omega.array).max() > 1e-12 * max(1.0, omega.norm):
            raise ValueError(f"grad f0(0) = {grad.real.tolist()} does not match omega")
        S = tuple(tuple(hessian_entry(f0, i, j) for j in range(d)) for i in range(d))
        g = ft.taylor_part(f0, 3)
        scale = ft.strip_norm_majorant(f1, domain)
        if scale == 0.0 or epsilon == 0.0:
            h, eps = Series.zeros(d, K, M), 0.0
        else:
            h, eps = f1 / scale, float(epsilon) * scale
        return cls(m0.real, omega, S, eps, h, g, domain)

    def hamiltonian(self):
        """The full Hamiltonian as a single series."""
        d, K, M = self.dim, self.fourier_cutoff, self.taylor_degree
        out = Series.constant(self.m, d, K, M)
        for i in range(d):
            e = [0] * d
            e[i] = 1
            out = out + Series.monomial(e, d, K, M, self.omega.array[i])
        for i in range(d):
            for j in range(d):
                e = [0] * d
                e[i] += 1
                e[j] += 1
                out = out + self.S[i][j].resize(K, M) * Series.monomial(e, d, K, M, 0.5)
        return out + self.epsilon * self.h.resize(K, M) + self.g.resize(K, M)

    def evaluate_many(self, r, theta):
        return ft.evaluate_many(self.hamiltonian(), r, theta)

    def with_domain(self, domain):
        return KolmogorovForm(self.m, self.omega, self.S, self.epsilon, self.h, self.g, domain)


@dataclass(frozen=True)
class TwistData:
    """Reference Hessian ``S_hat``, its inverse, and the size bookkeeping.

    ``beta = 1 / (s (s + 1))`` with ``s = |S_tilde|`` guarantees that every
    matrix within ``beta`` of ``S_hat`` is invertible with inverse within one
    of ``S_tilde``.
    """

    S_hat: np.ndarray
    S_tilde: np.ndarray
    beta: float
    eta: float
    gamma: float

    @staticmethod
    def _norm(a):
        return float(np.abs(a).sum(axis=1).max())

    @classmethod
    def reference(cls, S_hat):
        """Validate ``S_hat`` and return ``(S_hat, S_tilde, beta)``."""
        S_hat = np.array(np.real(S_hat), dtype=float)
        if not np.all(np.isfinite(S_hat)):
            raise TwistError("action Hessian is not finite")
        if np.abs(S_hat - S_hat.T).max() > SYMMETRY_TOL * max(1.0, np.abs(S_hat).max()):
            raise TwistError("action Hessian is not symmetric")
        cond = np.linalg.cond(S_hat)
        if not np.isfinite(cond) or cond > 1e12:
            raise TwistError(f"action Hessian is singular (condition number {cond:.3e})")
        S_tilde = np.linalg.inv(S_hat)
        if np.abs(S_hat @ S_tilde - np.eye(len(S_hat))).max() > 1e-12:
            raise TwistError("action Hessian inverse is inaccurate")
        s = cls._norm(S_tilde)
        beta = 1.0 / (s * (s + 1.0))
        # Neumann bound on |(S_hat + E)^-1 - S_tilde| for |E| <= beta
        if s * beta >= 1 or s * s * beta / (1 - s * beta) > 1 + 1e-12:
            raise TwistError("invertibility radius is inconsistent")
        return S_hat, S_tilde, beta

    @classmethod
    def from_form(cls, form, S_hat=None):
        if S_hat is None:
            S_hat = _mean_matrix(form.S)
        S_hat, S_tilde, beta = cls.reference(S_hat)
        return cls._measure(form, S_hat, S_tilde, beta)

    @classmethod
    def _measure(cls, form, S_hat, S_tilde, beta):
        d, K = form.dim, form.fourier_cutoff
        dev = [[form.S[i][j] - float(S_hat[i, j]) for j in range(d)] for i in range(d)]
        eta = ft.matrix_majorant(dev, form.domain)
        gamma = (abs(form.m) + ft.matrix_majorant(form.S, form.domain)
                 + ft.strip_norm_majorant(form.g, form.domain)
                 + cls._norm(S_hat) + cls._norm(S_tilde))
        return cls(S_hat, S_tilde, beta, eta, gamma)

    def remeasure(self, form):
        """Same reference Hessian, sizes measured on ``form``."""
        return self._measure(form, self.S_hat, self.S_tilde, self.beta)


@dataclass(frozen=True, eq=False)
class GeneratorSolution:
    """Solution ``(u, alpha, v)`` of the first-order cancellation system.

    ``du[i] = du/dtheta_i`` and ``dv[i][j] = dv_j/dtheta_i`` (so ``dv`` is the
    transposed Jacobian that enters ``dR = du + alpha + dv R``).
    """

    u: Series
    alpha: np.ndarray
    v: tuple
    du: tuple
    dv: tuple
    residuals: dict

    @property
    def dim(self):
        return len(self.v)

    def action_shift_constant(self):
        """``dR~ = grad u + alpha`` componentwise."""
        return tuple(self.du[i] + float(self.alpha[i]) for i in range(self.dim))

    def action_shift(self, taylor_degree=1):
        """``dR = grad u + alpha + dv R`` as series in ``(R, theta)``."""
        d = self.dim
        K = self.u.fourier_cutoff
        base = self.action_shift_constant()
        out = []
        for i in range(d):
            s = base[i].resize(K, taylor_degree)
            for j in range(d):
                e = [0] * d
                e[j] = 1
                s = s + self.dv[i][j].resize(K, taylor_degree) * Series.monomial(e, d, K, taylor_degree)
            out.append(s)
        return tuple(out)


def extract_jets(form):
    """``a = h(0, .)``, ``b = dh/dr(0, .)`` and ``c = d^2h/dr^2(0, .)``."""
    h, d = form.h, form.dim
    a = ft.taylor_coefficient(h, (0,) * d)
    b = tuple(gradient_entry(h, i) for i in range(d))
    c = tuple(tuple(hessian_entry(h, i, j) for j in range(d)) for i in range(d))
    return a, b, c


def solve_generator(form, twist):
    """Solve for ``u``, then ``alpha``, then ``v``.

    ``L u = -eps (a - <a>)``, ``<S> alpha = -<S grad u + eps b>`` and
    ``L v = -S (grad u + alpha) - eps b``; the choice of ``alpha`` makes the
    last right-hand side mean free.
    """
    d, K, eps = form.dim, form.fourier_cutoff, form.epsilon
    omega = form.omega
    S = [[e.resize(K, 0) for e in row] for row in form.S]
    S_mean = _mean_matrix(S).real
    if TwistData._norm(S_mean - twist.S_hat) >= twist.beta:
        raise TwistError("averaged Hessian left the invertibility ball around S_hat")
    a, b, _ = extract_jets(form)
    a = a.resize(K, 0)
    b = [x.resize(K, 0) for x in b]

    rhs_u = -eps * (a - ft.average(a))
    u = _real(cohomology.solve(rhs_u, omega))
    du = tuple(ft.partial_theta(u, i) for i in range(d))

    Sdu = [sum((S[i][j] * du[j] for j in range(d)), start=_zero_angle(d, K)) for i in range(d)]
    zero = (K,) * d + (0,) * d
    mean_rhs = np.array([Sdu[i].coeffs[zero] + eps * b[i].coeffs[zero] for i in range(d)])
    try:
        alpha = np.linalg.solve(S_mean, -mean_rhs.real)
    except np.linalg.LinAlgError as exc:
        raise TwistError(f"averaged Hessian is singular: {exc}") from None
    alpha_defect = float(np.abs(S_mean @ alpha + mean_rhs.real).max())

    rhs_v = []
    for i in range(d):
        r = -Sdu[i] - eps * b[i]
        for j in range(d):
            r = r - S[i][j] * float(alpha[j])
        rhs_v.append(r)
    tol = RESIDUAL_TOL * max(1.0, eps)
    for i, r in enumerate(rhs_v):
        mean = abs(r.coeffs[zero])
        if mean > tol:
            raise ValueError(f"right-hand side for v_{i} has mean {mean:.3e}")
    # the remaining mean is pure round-off
    rhs_v = [r - ft.average(r) for r in rhs_v]
    v = tuple(_real(cohomology.solve(r, omega)) for r in rhs_v)
    dv = tuple(tuple(ft.partial_theta(v[j], i) for j in range(d)) for i in range(d))

    dom = form.domain
    res_u = ft.strip_norm_majorant(ft.lie_derivative(u, omega.array) - rhs_u, dom)
    res_v = max(ft.strip_norm_majorant(ft.lie_derivative(v[i], omega.array) - rhs_v[i], dom)
                for i in range(d))
    residuals = {"u": res_u, "v": res_v, "alpha": alpha_defect}
    return GeneratorSolution(u, alpha, v, du, dv, residuals)


# -- the symplectic map ------------------------------------------------
@dataclass(frozen=True, eq=False)
class SymplecticMapData:
    """Step map and its inverse.

    Forward (old to new): ``phi = theta + v(theta)``,
    ``R = N(theta) (r - grad u - alpha)`` with ``N = (Id + D)^-1``.

    Inverse (new to old): ``theta = phi + w(phi)``,
    ``r = A(phi) + B(phi) R`` with ``A = dR~ o (Id + w)`` and
    ``B = (Id + D) o (Id + w)``.
    """

    gen: GeneratorSolution
    domain: ft.AnalyticityDomain
    N: tuple
    w: tuple
    A: tuple
    B: tuple
    neumann_terms: int
    inverse_iterations: int

    @property
    def dim(self):
        return self.gen.dim

    def forward(self, r, theta):
        """Pointwise forward map; ``r``, ``theta`` have shape ``(n, d)``."""
        r = np.atleast_2d(np.asarray(r, dtype=complex))
        theta = np.atleast_2d(np.asarray(theta, dtype=complex))
        d = self.dim
        phi = theta + np.stack([ft.evaluate_many(s, r * 0, theta) for s in self.gen.v], axis=1)
        shift = np.stack([ft.evaluate_many(s, r * 0, theta)
                          for s in self.gen.action_shift_constant()], axis=1)
        Dm = np.empty((len(theta), d, d), dtype=complex)
        for i in range(d):
            for j in range(d):
                Dm[:, i, j] = ft.evaluate_many(self.gen.dv[i][j], r * 0, theta)
        R = np.linalg.solve(np.eye(d) + Dm, (r - shift)[..., None])[..., 0]
        return R, phi

    def inverse(self, R, phi):
        """Pointwise inverse map through the stored series ``w``, ``A``, ``B``."""
        R = np.atleast_2d(np.asarray(R, dtype=complex))
        phi = np.atleast_2d(np.asarray(phi, dtype=complex))
        d = self.dim
        zero = np.zeros_like(phi)
        theta = phi + np.stack([ft.evaluate_many(s, zero, phi) for s in self.w], axis=1)
        r = np.stack([ft.evaluate_many(s, zero, phi) for s in self.A], axis=1)
        for i in range(d):
            for j in range(d):
                r[:, i] += ft.evaluate_many(self.B[i][j], zero, phi) * R[:, j]
        return r, theta

    def forward_series(self):
        """``(v, R - r)`` as series; ``R - r`` has Taylor degree one."""
        d = self.dim
        K = self.gen.u.fourier_cutoff
        shift = self.gen.action_shift_constant()
        out = []
        for i in range(d):
            s = Series.zeros(d, K, 1)
            for j in range(d):
                e = [0] * d
                e[j] = 1
                coef = self.N[i][j] - (1.0 if i == j else 0.0)
                s = s + coef.resize(K, 1) * Series.monomial(e, d, K, 1)
                s = s - (self.N[i][j] * shift[j]).resize(K, 1)
            out.append(s)
        return tuple(self.gen.v), tuple(out)

    def inverse_series(self):
        """``(w, r - R)`` as series in ``(R, phi)``."""
        d = self.dim
        K = self.gen.u.fourier_cutoff
        out = []
        for i in range(d):
            s = self.A[i].resize(K, 1)
            for j in range(d):
                e = [0] * d
                e[j] = 1
                coef = self.B[i][j] - (1.0 if i == j else 0.0)
                s = s + coef.resize(K, 1) * Series.monomial(e, d, K, 1)
            out.append(s)
        return tuple(self.w), tuple(out)

    def forward_deviation(self, domain=None):
        """``|phi - Id|`` majorant (angle and action parts)."""
        dom = self.domain if domain is None else domain
        ang, act = self.forward_series()
        return max(ft.strip_norm_majorant(s, dom) for s in (*ang, *act))

    def inverse_deviation(self, domain=None):
        """``|phi^-1 - Id|`` majorant (angle and action parts)."""
        dom = self.domain if domain is None else domain
        ang, act = self.inverse_series()
        return max(ft.strip_norm_majorant(s, dom) for s in (*ang, *act))


def _neumann_inverse(D, domain):
    """``(Id + D)^-1 = sum_n (-D)^n`` for angle-only matrices with ``|D| < 1``."""
    d = len(D)
    K = D[0][0].fourier_cutoff
    total = _identity(d, K)
    term = _identity(d, K)
    neg = [[-e for e in row] for row in D]
    for n in range(1, MAX_INNER_ITER + 1):
        term = _matmul(term, neg)
        size = ft.matrix_majorant(term, domain)
        total = [[total[i][j] + term[i][j] for j in range(d)] for i in range(d)]
        if size < NEUMANN_TOL:
            return total, n
    raise ContractionError("Neumann series for (Id + dv^T)^-1 did not converge")


def _invert_angle_map(v, domain):
    """``w`` with ``(Id + v)^-1 = Id + w``, from ``w = -v o (Id + w)``."""
    w = tuple(-s for s in v)
    if all(s.is_zero() for s in v):
        return w, 0
    for n in range(1, MAX_INNER_ITER + 1):
        nxt = tuple(-_real(s) for s in ft.compose_angle_many(v, w))
        gap = max(ft.strip_norm_majorant(a - b, domain) for a, b in zip(nxt, w))
        w = nxt
        if gap < INVERSE_TOL:
            return w, n
    raise ContractionError("fixed-point iteration for (Id + v)^-1 did not converge")


def build_map(gen, domain):
    """Package the step map, its inverse and the Neumann inverse ``N``.

    Raises
    ------
    ContractionError
        If ``|dv|`` is not below one on ``domain``.
    """
    d = gen.dim
    K = gen.u.fourier_cutoff
    D = [[gen.dv[i][j] for j in range(d)] for i in range(d)]
    size = ft.matrix_majorant(D, domain)
    if not size < 1:
        raise ContractionError(f"|dv| = {size:.3e} is not below 1 on the shrunk strip")
    N, nterms = _neumann_inverse(D, domain)
    w, niter = _invert_angle_map(gen.v, domain)
    shift = gen.action_shift_constant()
    flat = list(shift) + [D[i][j] for i in range(d) for j in range(d)]
    comp = [_real(s) for s in ft.compose_angle_many(flat, w)]
    A = tuple(comp[:d])
    B = tuple(tuple(comp[d + i * d + j] + (1.0 if i == j else 0.0) for j in range(d))
              for i in range(d))
    N = tuple(tuple(_real(e.resize(K, 0)) for e in row) for row in N)
    return SymplecticMapData(gen, domain, N, w, A, B, nterms, niter)


# -- pullback ----------------------------------------------------------
def _derivative(f, beta):
    """``d^beta f / beta!`` in the actions."""
    out = f
    for j, bj in enumerate(beta):
        for _ in range(bj):
            out = ft.partial_r(out, j)
    den = 1
    for bj in beta:
        den *= factorial(bj)
    return out / den if den != 1 else out


class _PowerCache:
    """Products ``shift^beta`` of a vector of series."""

    def __init__(self, shift):
        d = len(shift)
        self.shift = shift
        one = Series.constant(1.0, d, shift[0].fourier_cutoff, shift[0].taylor_degree)
        self.cache = {(0,) * d: one}

    def __call__(self, beta):
        beta = tuple(beta)
        if beta not in self.cache:
            j = next(i for i, b in enumerate(beta) if b > 0)
            prev = list(beta)
            prev[j] -= 1
            self.cache[beta] = self(prev) * self.shift[j]
        return self.cache[beta]


def _kernel_moment(kernel, j):
    """``int_0^1 kernel(t) t^j dt`` for a polynomial kernel in ``t``."""
    return sum((Fraction(c) / (p + j + 1) for p, c in enumerate(kernel)), start=Fraction(0))


def segment_integral(f, shift, kernel, powers=None):
    """``int_0^1 kernel(t) f(R + t shift, theta) dt`` as a series.

    Since ``f`` is polynomial in ``R``,

        f(R + t s) = sum_beta (d^beta f / beta!)(R) t^|beta| s^beta

    and the ``t`` integral only reweights each term by an exact rational
    moment of the kernel.

    Parameters
    ----------
    f : FourierTaylorSeries
    shift : sequence of FourierTaylorSeries
        The displacement ``s``, one series per action.
    kernel : sequence of rationals
        Polynomial coefficients of the kernel, lowest degree first.
    """
    d = f.dim
    powers = _PowerCache(tuple(shift)) if powers is None else powers
    out = Series.zeros(d, f.fourier_cutoff, f.taylor_degree)
    for beta in ft.monomial_exponents(d, f.taylor_degree):
        part = _derivative(f, beta)
        if part.is_zero():
            continue
        weight = float(_kernel_moment(kernel, sum(beta)))
        if weight == 0.0:
            continue
        out = out + (part * powers(beta)) * weight
    return out


def third_derivative_matrices(g):
    """``T[k][i][j] = d^3 g / dR_k dR_i dR_j (0, theta)`` as angle series."""
    d = g.dim
    out = []
    for k in range(d):
        rows = []
        for i in range(d):
            row = []
            for j in range(d):
                m = [0] * d
                for a in (i, j, k):
                    m[a] += 1
                fac = 1
                for x in m:
                    fac *= factorial(x)
                row.append(ft.taylor_coefficient(g, m) * fac)
            rows.append(row)
        out.append(rows)
    return out


def default_shift_tolerance(form, delta):
    """Allowed ``|dR| / eps``: the step loss factor ``delta^-nu``."""
    cert = form.omega.certificate
    tau = form.dim if cert is None else cert.tau
    nu = 2 * (form.dim + tau + 2)
    return delta ** (-nu)


@dataclass(frozen=True, eq=False)
class PullbackResult:
    form: KolmogorovForm
    step: SymplecticMapData
    remainder_truncation: float


def pullback(form, gen, delta, step=None, shift_tolerance=None):
    """Hamiltonian in the new variables on the shrunk domain.

    With ``dR~ = grad u + alpha``, ``dR = dR~ + D R`` and ``T_k`` the third
    derivatives of ``g`` at ``R = 0``, the new coefficients in the old angle
    ``theta`` are

        m'  = m + omega . alpha + eps <a>
        S'  = S + eps c + S D + D^T S + sum_k T_k dR~_k
        g'  = g + eps h_{>=3} + [dR . grad g]_{>=3}
        rem = eps int_0^1 grad h(R_t) dt . dR + 1/2 dR^T S dR
              + int_0^1 (1 - t) dR^T grad^2 g(R_t) dR dt

    with ``R_t = R + t dR``; every coefficient is then composed with
    ``theta = phi + w(phi)``.  The new ``eps'`` is the majorant of the
    remainder and ``h' = rem / eps'``.

    Parameters
    ----------
    form : KolmogorovForm
    gen : GeneratorSolution
    delta : float
        Analyticity loss; the new domain is ``(rho - delta, Delta - delta)``.
    step : SymplecticMapData, optional
        Prebuilt map for ``gen`` on the new domain.
    shift_tolerance : float, optional
        Abort unless ``|dR| <= shift_tolerance * eps``.

    Returns
    -------
    PullbackResult
    """
    d, K, M = form.dim, form.fourier_cutoff, form.taylor_degree
    eps = form.epsilon
    new_domain = form.domain.shrink(delta)
    if step is None:
        step = build_map(gen, new_domain)
    if shift_tolerance is None:
        shift_tolerance = default_shift_tolerance(form, delta)

    S = [[_strip_history(e.resize(K, 0)) for e in row] for row in form.S]
    h = _strip_history(form.h.resize(K, M))
    g = _strip_history(form.g.resize(K, M))
    a = ft.taylor_coefficient(h, (0,) * d)
    c = [[hessian_entry(h, i, j) for j in range(d)] for i in range(d)]
    D = [[gen.dv[i][j] for j in range(d)] for i in range(d)]
    shift0 = gen.action_shift_constant()
    shift = gen.action_shift(M)
    size = max(ft.strip_norm_majorant(s, new_domain) for s in shift)
    if size > shift_tolerance * eps:
        raise StepSizeError(f"|dR| = {size:.3e} exceeds {shift_tolerance:.3e} * eps")

    zero = (K,) * d + (0,) * d
    m_new = form.m + float(form.omega.array @ gen.alpha) + eps * a.coeffs[zero].real

    SD = _matmul(S, D)
    T = third_derivative_matrices(g)
    S_new = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(i, d):
            e = S[i][j] + eps * c[i][j].resize(K, 0) + SD[i][j] + SD[j][i]
            for k in range(d):
                e = e + T[k][i][j] * shift0[k]
            S_new[i][j] = e

    grad_g = [ft.partial_r(g, i) for i in range(d)]
    transport = sum((shift[i] * grad_g[i] for i in range(d)), start=Series.zeros(d, K, M))
    g_new = g + eps * ft.taylor_part(h, 3) + ft.taylor_part(transport, 3)

    powers = _PowerCache(shift)
    rem = Series.zeros(d, K, M)
    if eps != 0.0:
        for i in range(d):
            rem = rem + eps * (segment_integral(ft.partial_r(h, i), shift, [1], powers) * shift[i])
    for i in range(d):
        for j in range(d):
            rem = rem + 0.5 * (S[i][j].resize(K, M) * (shift[i] * shift[j]))
    if not g.is_zero():
        for i in range(d):
            for j in range(d):
                gij = ft.partial_r(grad_g[i], j)
                if gij.is_zero():
                    continue
                rem = rem + segment_integral(gij, shift, [1, -1], powers) * (shift[i] * shift[j])

    pieces = [S_new[i][j] for i in range(d) for j in range(i, d)] + [g_new, rem]
    pieces = [_real(p) for p in ft.compose_angle_many(pieces, step.w)]
    rem_phi = pieces.pop()
    g_phi = ft.taylor_part(pieces.pop(), 3)
    it = iter(pieces)
    S_phi = [[None] * d for _ in range(d)]
    for i in range(d):
        for j in range(i, d):
            S_phi[i][j] = S_phi[j][i] = next(it)

    lost = rem_phi.truncation_mass
    if lost > 1e-10 * eps * eps and lost > 0:
        warnings.warn(f"pullback discarded {lost:.3e} of remainder mass (eps = {eps:.3e})",
                      TruncationWarning, stacklevel=2)
    eps_new = ft.strip_norm_majorant(rem_phi, new_domain)
    if eps_new == 0.0:
        h_new = Series.zeros(d, K, M)
    else:
        h_new = rem_phi / eps_new
        # guard the unit normalization against the last ulp
        norm = ft.strip_norm_majorant(h_new, new_domain)
        if norm > 1:
            h_new = h_new / norm
    new_form = KolmogorovForm(m_new, form.omega, S_phi, eps_new, h_new, g_phi, new_domain)
    return PullbackResult(new_form, step, lost)
