"""Mode-by-mode solution of ``L_omega f = g`` on the torus.

For ``g`` with zero angular mean the unique zero-mean solution has
``f_k = g_k / (i omega . k)``.
"""

import math

import numpy as np

from . import fourier_taylor as ft
from .diophantine import FrequencyVector
from .errors import ResonanceError

RESONANCE_FLOOR = 1e-13


def _omega_array(omega):
    if isinstance(omega, FrequencyVector):
        return omega.array
    return np.atleast_1d(np.asarray(omega, dtype=float))


def divisors(dim, cutoff, omega):
    """Array of ``omega . k`` over the Fourier grid ``|k|_inf <= cutoff``."""
    w = _omega_array(omega)
    ks = np.arange(-cutoff, cutoff + 1)
    mesh = np.meshgrid(*([ks] * dim), indexing="ij")
    return sum(w[j] * mesh[j] for j in range(dim))


def solve(g, omega, floor=RESONANCE_FLOOR, mean_tol=1e-12):
    """Zero-mean solution of ``L_omega f = g``.

    Parameters
    ----------
    g : FourierTaylorSeries
        Right-hand side; every ``r``-monomial must have zero angular mean.
    omega : FrequencyVector or array_like
        If a certificate is attached, its scan depth must cover the Fourier
        cutoff of ``g``.
    floor : float
        Divisors with ``|omega . k| < floor * |omega|`` count as resonant.

    Raises
    ------
    ResonanceError
        If a mode of ``g`` sits on a numerically resonant divisor.
    """
    w = _omega_array(omega)
    d, K = g.dim, g.fourier_cutoff
    if len(w) != d:
        raise ValueError(f"omega has dimension {len(w)}, series has {d}")
    if isinstance(omega, FrequencyVector) and omega.certificate is not None:
        if omega.certificate.scan_depth < K:
            raise ValueError(f"certificate depth {omega.certificate.scan_depth} "
                             f"does not cover Fourier cutoff {K}")
    c = g.coeffs
    scale = max(float(np.abs(c).max(initial=0.0)), 1.0)
    mean = c[(K,) * d]
    if np.abs(mean).max(initial=0.0) > mean_tol * scale:
        raise ValueError("right-hand side has nonzero angular mean")
    kdot = divisors(d, K, w)
    zero = (K,) * d
    active = np.any(c != 0, axis=tuple(range(d, 2 * d)))
    active[zero] = False
    small = active & (np.abs(kdot) < floor * np.abs(w).max())
    if small.any():
        k = tuple(int(i) - K for i in np.argwhere(small)[0])
        raise ResonanceError(f"divisor omega.k = {kdot[tuple(i + K for i in k)]:.3e} "
                             f"at k={k} is below the resonance floor", k)
    inv = np.zeros_like(kdot, dtype=complex)
    nz = np.ones(kdot.shape, dtype=bool)
    nz[zero] = False
    nz &= kdot != 0
    inv[nz] = 1.0 / (1j * kdot[nz])
    out = c * inv.reshape(inv.shape + (1,) * d)
    return ft.FourierTaylorSeries(out, g.truncation_mass)


def lemma_integral(tau, d):
    """``int_{R^d} |x|_inf^tau exp(-|x|_inf) dx = d 2^d Gamma(tau + d)``.

    Shells of the sup-norm ball of radius ``s`` have area ``d 2^d s^(d-1)``.
    """
    return d * 2.0 ** d * math.gamma(tau + d)


def lemma_bound(delta, c, tau, d):
    """Norm-loss factor ``I(tau, d) / (c delta^(tau + d))`` for a strip loss ``delta``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not c > 0:
        raise ValueError("c must be positive")
    return lemma_integral(tau, d) / (c * delta ** (tau + d))


def random_zero_mean(rng, dim, cutoff, taylor_degree=0, decay=0.5):
    """Random real series with zero angular mean and ``exp(-decay |k|_1)`` envelope."""
    shape = (2 * cutoff + 1,) * dim + (taylor_degree + 1,) * dim
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    ks = np.meshgrid(*([np.arange(-cutoff, cutoff + 1)] * dim), indexing="ij")
    l1 = sum(np.abs(k) for k in ks)
    c *= np.exp(-decay * l1).reshape(l1.shape + (1,) * dim)
    c[(cutoff,) * dim] = 0.0
    return ft.hermitian_part(ft.FourierTaylorSeries(c))


def selftest(seed=0, count=100, deltas=(0.1, 0.2, 0.4), strip=1.0):
    """Exactness and norm-loss checks on random right-hand sides.

    Exactness: ``|L solve(g) - g| / |g|`` at ``strip`` for ``count`` series
    with ``d`` in ``{1, 2}`` and ``K <= 16``.  Norm loss: the ratio
    ``|solve(g)|_{strip - delta} / |g|_strip`` against :func:`lemma_bound` for
    the golden-mean frequency with ``tau = 1``.
    """
    from .diophantine import certify

    rng = np.random.default_rng(seed)
    freqs = {1: certify([math.sqrt(2.0)], 1.0, 64),
             2: certify([1.0, (1 + math.sqrt(5.0)) / 2], 1.0, 200)}
    worst_exact = 0.0
    for i in range(count):
        d = 1 + i % 2
        K = int(rng.integers(1, 17))
        g = random_zero_mean(rng, d, K, int(rng.integers(0, 3)))
        f = solve(g, freqs[d])
        res = ft.lie_derivative(f, freqs[d].array) - g
        worst_exact = max(worst_exact, ft.strip_norm_majorant(res, (1.0, strip))
                          / ft.strip_norm_majorant(g, (1.0, strip)))
    golden = freqs[2]
    cert = golden.certificate
    violations, worst_ratio = 0, 0.0
    for _ in range(count):
        K = int(rng.integers(1, 17))
        g = random_zero_mean(rng, 2, K)
        f = solve(g, golden)
        gn = ft.strip_norm_majorant(g, (1.0, strip))
        for delta in deltas:
            ratio = ft.strip_norm_majorant(f, (1.0, strip - delta)) / gn
            bound = lemma_bound(delta, cert.c, cert.tau, 2)
            worst_ratio = max(worst_ratio, ratio / bound)
            violations += ratio > bound
    return {"count": count, "exactness_max": worst_exact, "exactness_ok": worst_exact < 1e-12,
            "lemma_violations": int(violations), "lemma_worst_fraction": worst_ratio,
            "c": cert.c, "tau": cert.tau,
            "passed": bool(worst_exact < 1e-12 and violations == 0)}
