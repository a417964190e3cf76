"""Finite-depth Diophantine analysis of frequency vectors.

``omega`` satisfies the Diophantine condition with constants ``(c, tau)`` when
``|omega . k| >= c / |k|_inf^tau`` for every nonzero integer ``k``.  Only a
finite scan ``0 < |k|_inf <= Kmax`` can be checked in floating point, so a
certificate always carries its scan depth.

``k`` and ``-k`` give the same divisor; scans run over the half-space whose
first nonzero component is positive, and ties go to the lexicographically
smallest such ``k``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ResonanceError

DEFAULT_SCAN_DEPTH = 200


@dataclass(frozen=True)
class Resonance:
    k_star: tuple
    c_hat: float


@dataclass(frozen=True)
class DiophantineCertificate:
    c: float
    tau: float
    scan_depth: int


def _as_omega(omega):
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if w.ndim != 1 or not np.all(np.isfinite(w)):
        raise ValueError("omega must be a finite real vector")
    return w


def _chunks(dim, kmax):
    """Canonical integer vectors, in lexicographic order, one block per leading value."""
    rng = np.arange(-kmax, kmax + 1)
    if dim == 1:
        yield np.arange(1, kmax + 1).reshape(-1, 1)
        return
    # leading component zero: recurse on the tail
    for tail in _chunks(dim - 1, kmax):
        yield np.hstack([np.zeros((len(tail), 1), dtype=int), tail])
    rest = np.stack(np.meshgrid(*([rng] * (dim - 1)), indexing="ij"), axis=-1).reshape(-1, dim - 1)
    for k0 in range(1, kmax + 1):
        yield np.hstack([np.full((len(rest), 1), k0), rest])


def worst_resonance(omega, tau=None, kmax=DEFAULT_SCAN_DEPTH):
    """Smallest ``|omega . k| |k|_inf^tau`` over ``0 < |k|_inf <= kmax``.

    An exact resonance is reported as ``c_hat = 0`` together with its ``k``.
    """
    w = _as_omega(omega)
    d = len(w)
    tau = float(d if tau is None else tau)
    kmax = int(kmax)
    if not np.any(w):
        raise ValueError("omega must be nonzero")
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    best, best_k = np.inf, None
    for ks in _chunks(d, kmax):
        div = np.abs(ks @ w)
        size = np.abs(ks).max(axis=1).astype(float)
        vals = div * size ** tau
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, best_k = float(vals[i]), tuple(int(x) for x in ks[i])
            if best == 0.0:
                break
    return Resonance(best_k, best)


@dataclass(frozen=True)
class FrequencyVector:
    """Frequency vector with an optional finite-depth Diophantine certificate."""

    omega: tuple
    certificate: DiophantineCertificate = None
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = _as_omega(self.omega)
        object.__setattr__(self, "omega", tuple(float(x) for x in w))
        object.__setattr__(self, "_array", w)
        w.setflags(write=False)
        cert = self.certificate
        if cert is not None:
            if not cert.c > 0:
                raise ValueError("certificate constant must be positive")
            # tau = d - 1 is admitted: badly approximable vectors sit exactly there
            if not cert.tau >= len(w) - 1:
                raise ValueError(f"tau must be at least d - 1 = {len(w) - 1}")
            res = worst_resonance(w, cert.tau, cert.scan_depth)
            if res.c_hat < cert.c * (1 - 1e-12):
                raise ValueError(f"certificate violated at k={res.k_star}: "
                                 f"{res.c_hat} < {cert.c}")

    @property
    def array(self):
        return self._array

    @property
    def dim(self):
        return len(self.omega)

    @property
    def norm(self):
        return float(np.abs(self._array).max())

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._array, dtype=dtype)


def certify(omega, tau=None, kmax=DEFAULT_SCAN_DEPTH):
    """Attach the empirical constant ``c = c_hat`` found by an exhaustive scan."""
    w = _as_omega(omega)
    tau = float(len(w) if tau is None else tau)
    res = worst_resonance(w, tau, kmax)
    if res.c_hat == 0.0:
        raise ResonanceError(f"omega={[float(x) for x in w]} is resonant at k={list(res.k_star)}",
                             res.k_star)
    return FrequencyVector(tuple(w), DiophantineCertificate(res.c_hat, tau, int(kmax)))
