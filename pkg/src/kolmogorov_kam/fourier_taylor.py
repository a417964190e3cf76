"""Truncated Fourier-Taylor series in ``d`` angles and ``d`` actions.

A series represents

    f(r, theta) = sum_{k, m} c[k, m] r^m exp(i k . theta)

with ``|k|_inf <= K`` (Fourier cutoff) and ``|m|_1 <= M`` (Taylor degree).
Coefficients are held in a dense complex array of shape
``(2K+1,)*d + (M+1,)*d``; the Fourier index ``k_j`` is stored at position
``k_j + K``.  Entries with ``|m|_1 > M`` are always zero.

Strip majorants use the l1 norm of ``k``::

    |f|_{rho, Delta} <= sum |c[k, m]| rho^|m| exp(Delta |k|_1)

which bounds the sup norm on ``|r| <= rho, |Im theta| <= Delta`` whichever
norm is put on ``k``.

Products are direct (not FFT) convolutions on the nonzero bounding box of
each operand.  FFT round-off is of order ``eps * max|c|`` in *every* mode,
and the ``exp(Delta |k|_1)`` weight of the majorant would amplify that noise
in the highest modes by many orders of magnitude.
"""

import itertools
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from .errors import AliasingWarning, MajorantOverflowError

DROP_TOL = 1e-16
ALIAS_TOL = 1e-10
# FFT round-off per channel is a few eps relative to the largest sample.
COMPOSE_NOISE_FLOOR = 16 * np.finfo(float).eps
_CHUNK = 1 << 22


@dataclass(frozen=True)
class AnalyticityDomain:
    """Complex domain ``|r| <= rho, |Im theta| <= delta_strip``."""

    rho: float
    delta_strip: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.delta_strip > 0:
            raise ValueError(f"delta_strip must be positive, got {self.delta_strip}")

    def shrink(self, delta):
        return AnalyticityDomain(self.rho - delta, self.delta_strip - delta)


@lru_cache(maxsize=None)
def _taylor_mask(dim, degree):
    grids = np.indices((degree + 1,) * dim).sum(axis=0)
    mask = grids <= degree
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=None)
def _fourier_l1(dim, cutoff):
    ks = np.arange(-cutoff, cutoff + 1)
    return np.abs(np.stack(np.meshgrid(*([ks] * dim), indexing="ij"))).sum(axis=0)


@lru_cache(maxsize=None)
def _taylor_total(dim, degree):
    return np.indices((degree + 1,) * dim).sum(axis=0)


class FourierTaylorSeries:
    """Immutable truncated Fourier-Taylor series.

    Parameters
    ----------
    coeffs : array_like
        Complex array of shape ``(2K+1,)*d + (M+1,)*d``.
    truncation_mass : float
        l1 mass of coefficients discarded while producing this series.
    drop_tol : float
        Coefficients below ``drop_tol * max|c|`` are set to zero.
    """

    __slots__ = ("coeffs", "truncation_mass")

    def __init__(self, coeffs, truncation_mass=0.0, drop_tol=DROP_TOL):
        c = np.array(coeffs, dtype=complex)
        if c.ndim == 0 or c.ndim % 2:
            raise ValueError("coefficient array must have 2*d axes")
        d = c.ndim // 2
        nf, nt = c.shape[0], c.shape[d]
        if nf % 2 == 0 or any(s != nf for s in c.shape[:d]) or any(s != nt for s in c.shape[d:]):
            raise ValueError(f"bad coefficient shape {c.shape}")
        mask = _taylor_mask(d, nt - 1)
        c *= mask
        mass = float(truncation_mass)
        if drop_tol > 0 and c.size:
            mag = np.abs(c)
            top = mag.max()
            if top > 0:
                small = (mag < drop_tol * top) & (mag > 0)
                if small.any():
                    mass += float(mag[small].sum())
                    c[small] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "truncation_mass", mass)

    def __setattr__(self, name, value):
        raise AttributeError("FourierTaylorSeries is immutable")

    # -- shape ---------------------------------------------------------
    @property
    def dim(self):
        return self.coeffs.ndim // 2

    @property
    def fourier_cutoff(self):
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def taylor_degree(self):
        return self.coeffs.shape[self.dim] - 1

    def __repr__(self):
        n = int(np.count_nonzero(self.coeffs))
        return (f"FourierTaylorSeries(dim={self.dim}, K={self.fourier_cutoff}, "
                f"M={self.taylor_degree}, terms={n})")

    # -- constructors --------------------------------------------------
    @classmethod
    def zeros(cls, dim, fourier_cutoff=0, taylor_degree=0):
        shape = (2 * fourier_cutoff + 1,) * dim + (taylor_degree + 1,) * dim
        return cls(np.zeros(shape, dtype=complex))

    @classmethod
    def constant(cls, value, dim, fourier_cutoff=0, taylor_degree=0):
        out = np.zeros((2 * fourier_cutoff + 1,) * dim + (taylor_degree + 1,) * dim, dtype=complex)
        out[(fourier_cutoff,) * dim + (0,) * dim] = value
        return cls(out)

    @classmethod
    def from_terms(cls, terms, dim, fourier_cutoff=None, taylor_degree=None):
        """Build from a mapping ``{(k, m): coefficient}``."""
        items = [(tuple(int(x) for x in k), tuple(int(x) for x in m), complex(c))
                 for (k, m), c in dict(terms).items()]
        for k, m, _ in items:
            if len(k) != dim or len(m) != dim:
                raise ValueError(f"term ({k}, {m}) does not have dimension {dim}")
            if min(m, default=0) < 0:
                raise ValueError(f"negative Taylor exponent in {m}")
        if fourier_cutoff is None:
            fourier_cutoff = max((max(map(abs, k), default=0) for k, _, _ in items), default=0)
        if taylor_degree is None:
            taylor_degree = max((sum(m) for _, m, _ in items), default=0)
        K, M = fourier_cutoff, taylor_degree
        out = np.zeros((2 * K + 1,) * dim + (M + 1,) * dim, dtype=complex)
        for k, m, c in items:
            if max(map(abs, k), default=0) > K or sum(m) > M:
                raise ValueError(f"term ({k}, {m}) outside cutoff K={K}, M={M}")
            out[tuple(x + K for x in k) + m] += c
        return cls(out)

    @classmethod
    def monomial(cls, m, dim=None, fourier_cutoff=0, taylor_degree=None, coefficient=1.0):
        m = tuple(int(x) for x in m)
        dim = len(m) if dim is None else dim
        degree = sum(m) if taylor_degree is None else taylor_degree
        return cls.from_terms({((0,) * dim, m): coefficient}, dim, fourier_cutoff, degree)

    @classmethod
    def cos_mode(cls, k, amplitude=1.0, fourier_cutoff=None, taylor_degree=0, m=None):
        """``amplitude * r^m * cos(k . theta)``."""
        k = tuple(int(x) for x in k)
        dim = len(k)
        m = (0,) * dim if m is None else tuple(m)
        neg = tuple(-x for x in k)
        if k == neg:
            terms = {(k, m): amplitude}
        else:
            terms = {(k, m): amplitude / 2, (neg, m): amplitude / 2}
        return cls.from_terms(terms, dim, fourier_cutoff, max(taylor_degree, sum(m)))

    @classmethod
    def sin_mode(cls, k, amplitude=1.0, fourier_cutoff=None, taylor_degree=0, m=None):
        """``amplitude * r^m * sin(k . theta)``."""
        k = tuple(int(x) for x in k)
        dim = len(k)
        m = (0,) * dim if m is None else tuple(m)
        neg = tuple(-x for x in k)
        if k == neg:
            return cls.zeros(dim, fourier_cutoff or 0, max(taylor_degree, sum(m)))
        terms = {(k, m): amplitude / 2j, (neg, m): -amplitude / 2j}
        return cls.from_terms(terms, dim, fourier_cutoff, max(taylor_degree, sum(m)))

    # -- inspection ----------------------------------------------------
    def terms(self):
        """Nonzero coefficients as ``{(k, m): c}``."""
        d, K = self.dim, self.fourier_cutoff
        out = {}
        for idx in zip(*np.nonzero(self.coeffs)):
            k = tuple(int(i) - K for i in idx[:d])
            m = tuple(int(i) for i in idx[d:])
            out[(k, m)] = complex(self.coeffs[idx])
        return out

    def coefficient(self, k, m):
        K = self.fourier_cutoff
        if max(map(abs, k), default=0) > K or sum(m) > self.taylor_degree:
            return 0j
        return complex(self.coeffs[tuple(x + K for x in k) + tuple(m)])

    def is_zero(self):
        return not np.any(self.coeffs)

    def min_degree(self):
        """Smallest ``|m|_1`` carrying a nonzero coefficient (None for zero)."""
        d = self.dim
        nz = np.any(self.coeffs != 0, axis=tuple(range(d)))
        if not nz.any():
            return None
        return int(_taylor_total(d, self.taylor_degree)[nz].min())

    def is_angle_only(self):
        return taylor_part(self, 1).is_zero()

    def is_real(self, tol=1e-12):
        ref = np.abs(self.coeffs).max(initial=0.0)
        return bool(np.abs(self.coeffs - _reflect(self.coeffs, self.dim).conj()).max(initial=0.0)
                    <= tol * max(ref, 1e-300))

    # -- reshaping -----------------------------------------------------
    def resize(self, fourier_cutoff=None, taylor_degree=None):
        """Pad or crop to the given cutoffs; cropped mass is recorded."""
        K0, M0, d = self.fourier_cutoff, self.taylor_degree, self.dim
        K = K0 if fourier_cutoff is None else fourier_cutoff
        M = M0 if taylor_degree is None else taylor_degree
        if K == K0 and M == M0:
            return self
        out = np.zeros((2 * K + 1,) * d + (M + 1,) * d, dtype=complex)
        kk = min(K, K0)
        mm = min(M, M0)
        src = tuple(slice(K0 - kk, K0 + kk + 1) for _ in range(d)) + (slice(0, mm + 1),) * d
        dst = tuple(slice(K - kk, K + kk + 1) for _ in range(d)) + (slice(0, mm + 1),) * d
        out[dst] = self.coeffs[src]
        out *= _taylor_mask(d, M)
        lost = float(np.abs(self.coeffs).sum() - np.abs(out).sum())
        return FourierTaylorSeries(out, self.truncation_mass + max(lost, 0.0))

    def angle_only(self):
        """The ``m = 0`` slice as a series of Taylor degree 0."""
        return taylor_coefficient(self, (0,) * self.dim)

    # -- arithmetic ----------------------------------------------------
    def _binary(self, other, op):
        if isinstance(other, FourierTaylorSeries):
            if other.dim != self.dim:
                raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
            K = max(self.fourier_cutoff, other.fourier_cutoff)
            M = max(self.taylor_degree, other.taylor_degree)
            a, b = self.resize(K, M), other.resize(K, M)
            return FourierTaylorSeries(op(a.coeffs, b.coeffs),
                                       a.truncation_mass + b.truncation_mass)
        if np.isscalar(other):
            c = np.zeros_like(self.coeffs)
            c[(self.fourier_cutoff,) * self.dim + (0,) * self.dim] = other
            return FourierTaylorSeries(op(self.coeffs, c), self.truncation_mass)
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return FourierTaylorSeries(-self.coeffs, self.truncation_mass)

    def __mul__(self, other):
        if isinstance(other, FourierTaylorSeries):
            return multiply(self, other)
        if np.isscalar(other):
            return FourierTaylorSeries(self.coeffs * other, self.truncation_mass * abs(other))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return self * (1.0 / other)
        return NotImplemented

    # convenience wrappers
    def majorant(self, rho, delta):
        return strip_norm_majorant(self, (rho, delta))

    def __call__(self, r, theta):
        return evaluate(self, r, theta)


def _reflect(c, d):
    """Coefficient array with ``k -> -k``."""
    return np.flip(c, axis=tuple(range(d)))


def _check_same_dim(f, g):
    if f.dim != g.dim:
        raise ValueError(f"dimension mismatch: {f.dim} vs {g.dim}")


def _bounding_box(c):
    nz = np.nonzero(c)
    if len(nz[0]) == 0:
        return None
    lo = tuple(int(a.min()) for a in nz)
    hi = tuple(int(a.max()) + 1 for a in nz)
    return lo, c[tuple(slice(a, b) for a, b in zip(lo, hi))]


def _place(out, block, start):
    """Add ``block`` into ``out`` at integer offset ``start`` with clipping.

    Returns the l1 mass that fell outside ``out``.
    """
    src, dst = [], []
    for s, n, size in zip(start, block.shape, out.shape):
        a, b = max(s, 0), min(s + n, size)
        if a >= b:
            return float(np.abs(block).sum())
        dst.append(slice(a, b))
        src.append(slice(a - s, b - s))
    kept = block[tuple(src)]
    out[tuple(dst)] += kept
    return float(np.abs(block).sum() - np.abs(kept).sum())


def _direct_convolve(a, lo_a, b, lo_b, d, degree):
    """Exact-order convolution of two coefficient boxes.

    The last Fourier axis is handled by Toeplitz matrix products, the leading
    Fourier axes and the Taylor channels of ``a`` by explicit loops.  Taylor
    pairs whose total degree exceeds ``degree`` are never formed.  Returns the
    output block (Taylor axes of full size ``degree + 1``) and the Fourier
    start offsets (box-relative sums).
    """
    fa, fb = a.shape[:d], b.shape[:d]
    ta_shape, tb_shape = a.shape[d:], b.shape[d:]
    ma = [tuple(lo_a[d + j] + i[j] for j in range(d)) for i in np.ndindex(*ta_shape)]
    mb = [tuple(lo_b[d + j] + i[j] for j in range(d)) for i in np.ndindex(*tb_shape)]
    a2 = a.reshape(fa + (-1,))
    b2 = b.reshape(fb + (-1,))
    fo = tuple(x + y - 1 for x, y in zip(fa, fb))
    nt_out = (degree + 1) ** d
    out = np.zeros(fo + (nt_out,), dtype=complex)
    strides = [(degree + 1) ** (d - 1 - j) for j in range(d)]
    b_nonzero = [bool(np.any(b2[..., i])) for i in range(len(mb))]
    nb_last = fb[-1]
    lead_b = fb[:-1]
    for ia, ea in enumerate(ma):
        budget = degree - sum(ea)
        sel = [i for i, eb in enumerate(mb) if b_nonzero[i] and sum(eb) <= budget]
        if not sel:
            continue
        to_idx = [sum((ea[j] + mb[i][j]) * strides[j] for j in range(d)) for i in sel]
        # (nb_last, lead_b..., nsel) -> matrix with nb_last rows
        bsel = np.moveaxis(b2[..., sel], d - 1, 0).reshape(nb_last, -1)
        for lead in np.ndindex(*fa[:-1]):
            vec = a2[lead + (slice(None), ia)]
            if not vec.any():
                continue
            col = np.concatenate([vec, np.zeros(nb_last - 1, dtype=complex)])
            row = np.zeros(nb_last, dtype=complex)
            row[0] = vec[0]
            prod = linalg.toeplitz(col, row) @ bsel
            prod = prod.reshape((fo[-1],) + lead_b + (len(sel),))
            prod = np.moveaxis(prod, 0, d - 1)
            dst = tuple(slice(l, l + n) for l, n in zip(lead, lead_b))
            out[dst + (slice(None), to_idx)] += prod
    return out.reshape(fo + (degree + 1,) * d)


def _high_degree_mass(a, lo_a, b, lo_b, d, degree):
    """l1 bound of the product terms with total degree above ``degree``."""
    def per_degree(c, lo):
        mass = np.abs(c).sum(axis=tuple(range(d)))
        deg = np.indices(mass.shape).sum(axis=0) + sum(lo[d:])
        return np.bincount(deg.ravel(), weights=mass.ravel())
    pa, pb = per_degree(a, lo_a), per_degree(b, lo_b)
    joint = np.outer(pa, pb)
    tot = np.add.outer(np.arange(len(pa)), np.arange(len(pb)))
    return float(joint[tot > degree].sum())


def multiply(f, g):
    """Product of two series, truncated to the larger of their cutoffs."""
    _check_same_dim(f, g)
    d = f.dim
    K = max(f.fourier_cutoff, g.fourier_cutoff)
    M = max(f.taylor_degree, g.taylor_degree)
    out = np.zeros((2 * K + 1,) * d + (M + 1,) * d, dtype=complex)
    base_mass = (f.truncation_mass * np.abs(g.coeffs).sum()
                 + g.truncation_mass * np.abs(f.coeffs).sum())
    bf, bg = _bounding_box(f.coeffs), _bounding_box(g.coeffs)
    if bf is None or bg is None:
        return FourierTaylorSeries(out, base_mass)
    (lo_f, a), (lo_g, b) = bf, bg
    kf, kg = f.fourier_cutoff, g.fourier_cutoff
    if np.prod(a.shape[:d]) > np.prod(b.shape[:d]):
        (lo_f, a, kf), (lo_g, b, kg) = (lo_g, b, kg), (lo_f, a, kf)
    lost = _high_degree_mass(a, lo_f, b, lo_g, d, M)
    prod = _direct_convolve(a, lo_f, b, lo_g, d, M)
    start = [lo_f[j] - kf + lo_g[j] - kg + K for j in range(d)] + [0] * d
    lost += _place(out, prod, start)
    return FourierTaylorSeries(out, base_mass + lost)


def _k_axis(d, K, j):
    shape = [1] * (2 * d)
    shape[j] = 2 * K + 1
    return np.arange(-K, K + 1).reshape(shape)


def partial_theta(f, j):
    """Derivative with respect to the angle ``theta_j`` (0-based axis)."""
    if not 0 <= j < f.dim:
        raise IndexError(f"angle axis {j} out of range for dim {f.dim}")
    return FourierTaylorSeries(f.coeffs * (1j * _k_axis(f.dim, f.fourier_cutoff, j)),
                               f.truncation_mass)


def partial_r(f, j):
    """Derivative with respect to the action ``r_j`` (0-based axis)."""
    d = f.dim
    if not 0 <= j < d:
        raise IndexError(f"action axis {j} out of range for dim {d}")
    M = f.taylor_degree
    out = np.zeros_like(f.coeffs)
    if M > 0:
        src = [slice(None)] * (2 * d)
        dst = [slice(None)] * (2 * d)
        src[d + j] = slice(1, M + 1)
        dst[d + j] = slice(0, M)
        shape = [1] * (2 * d)
        shape[d + j] = M
        factor = np.arange(1, M + 1).reshape(shape)
        out[tuple(dst)] = f.coeffs[tuple(src)] * factor
    return FourierTaylorSeries(out, f.truncation_mass)


def lie_derivative(f, omega):
    """``L_omega f = sum_j omega_j df/dtheta_j``."""
    omega = np.asarray(omega, dtype=float)
    d, K = f.dim, f.fourier_cutoff
    kdot = sum(omega[j] * _k_axis(d, K, j) for j in range(d))
    return FourierTaylorSeries(f.coeffs * (1j * kdot), f.truncation_mass)


def average(f):
    """Angular mean: keep only the ``k = 0`` coefficients."""
    d, K = f.dim, f.fourier_cutoff
    out = np.zeros_like(f.coeffs)
    idx = (K,) * d
    out[idx] = f.coeffs[idx]
    return FourierTaylorSeries(out, f.truncation_mass)


def taylor_part(f, lo=0, hi=None):
    """Keep monomials with ``lo <= |m|_1 <= hi``."""
    d, M = f.dim, f.taylor_degree
    hi = M if hi is None else hi
    tot = _taylor_total(d, M)
    keep = (tot >= lo) & (tot <= hi)
    return FourierTaylorSeries(f.coeffs * keep, f.truncation_mass)


def taylor_coefficient(f, m):
    """Angle series multiplying ``r^m`` (returned with Taylor degree 0)."""
    d = f.dim
    m = tuple(int(x) for x in m)
    out_shape = f.coeffs.shape[:d] + (1,) * d
    if sum(m) > f.taylor_degree:
        return FourierTaylorSeries(np.zeros(out_shape, dtype=complex))
    sl = (slice(None),) * d + m
    return FourierTaylorSeries(f.coeffs[sl].reshape(out_shape), f.truncation_mass)


def hermitian_part(f):
    """Real-valued projection: ``(c_k + conj(c_{-k})) / 2``."""
    c = 0.5 * (f.coeffs + _reflect(f.coeffs, f.dim).conj())
    return FourierTaylorSeries(c, f.truncation_mass)


def strip_norm_majorant(f, domain):
    """Upper bound ``sum |c| rho^|m| exp(Delta |k|_1)`` of the strip sup norm.

    ``domain`` is an :class:`AnalyticityDomain` or a ``(rho, delta)`` pair;
    the pair form admits zero widths.
    """
    if isinstance(domain, AnalyticityDomain):
        rho, delta = domain.rho, domain.delta_strip
    else:
        rho, delta = domain
    if rho < 0 or delta < 0:
        raise ValueError("majorant needs rho >= 0 and delta >= 0")
    d, K, M = f.dim, f.fourier_cutoff, f.taylor_degree
    mag = np.abs(f.coeffs)
    if not mag.any():
        return 0.0
    with np.errstate(over="ignore"):
        wk = np.exp(delta * _fourier_l1(d, K))
        tot = _taylor_total(d, M)
        wm = np.where(tot == 0, 1.0, float(rho) ** tot.astype(float))
        # contract Taylor axes first so large Fourier weights meet the smallest sums
        per_k = np.tensordot(mag, wm, axes=(tuple(range(d, 2 * d)), tuple(range(d))))
        value = float((per_k * wk).sum())
    if not math.isfinite(value):
        raise MajorantOverflowError(f"strip majorant overflow at rho={rho}, delta={delta}")
    return value


def matrix_majorant(entries, domain):
    """Induced sup-norm bound (max row sum of entry majorants)."""
    return max((sum(strip_norm_majorant(e, domain) for e in row) for row in entries), default=0.0)


# -- evaluation --------------------------------------------------------
def _fourier_eval(c, k0, z):
    """Evaluate ``sum_k c[k, ch] exp(i k . z)`` at points ``z`` of shape (n, d).

    ``c`` has ``d`` Fourier axes followed by one channel axis; ``k0[j]`` is the
    Fourier index of position 0 along axis ``j``.
    """
    z = np.asarray(z)
    n, d = z.shape
    nk = c.shape[:d]
    ch = c.shape[d]
    out = np.empty((n, ch), dtype=complex)
    rest = int(np.prod(nk[1:], dtype=int)) * ch
    step = max(1, _CHUNK // max(rest, 1))
    ks = [np.arange(k0[j], k0[j] + nk[j]) for j in range(d)]
    flat0 = c.reshape(nk[0], -1)
    for s in range(0, n, step):
        zc = z[s:s + step]
        acc = np.exp(1j * np.multiply.outer(zc[:, 0], ks[0])) @ flat0
        for j in range(1, d):
            acc = acc.reshape(len(zc), nk[j], -1)
            e = np.exp(1j * np.multiply.outer(zc[:, j], ks[j]))
            acc = np.einsum("xk,xkr->xr", e, acc)
        out[s:s + step] = acc.reshape(len(zc), ch)
    return out


def evaluate_many(f, r, theta):
    """Direct summation at ``n`` points; ``r`` and ``theta`` have shape (n, d)."""
    d = f.dim
    r = np.atleast_2d(np.asarray(r, dtype=complex))
    theta = np.atleast_2d(np.asarray(theta, dtype=complex))
    if r.shape[1] != d or theta.shape[1] != d:
        raise ValueError(f"points must have {d} columns")
    n = max(len(r), len(theta))
    r = np.broadcast_to(r, (n, d))
    theta = np.broadcast_to(theta, (n, d))
    box = _bounding_box(f.coeffs)
    if box is None:
        return np.zeros(n, dtype=complex)
    lo, c = box
    K = f.fourier_cutoff
    nk = c.shape[:d]
    mexp = [np.arange(lo[d + j], lo[d + j] + c.shape[d + j]) for j in range(d)]
    ks = [np.arange(lo[j] - K, lo[j] - K + nk[j]) for j in range(d)]
    nm = int(np.prod(c.shape[d:]))
    cflat = c.reshape(int(np.prod(nk)), nm)
    out = np.empty(n, dtype=complex)
    step = max(1, _CHUNK // max(cflat.size, 1))
    for s in range(0, n, step):
        rc, tc = r[s:s + step], theta[s:s + step]
        mon = np.ones((len(rc),) + c.shape[d:], dtype=complex)
        for j in range(d):
            shape = [len(rc)] + [1] * d
            shape[1 + j] = len(mexp[j])
            mon = mon * (rc[:, j][:, None] ** mexp[j]).reshape(shape)
        per_k = mon.reshape(len(rc), nm) @ cflat.T
        phase = np.ones((len(rc),) + nk, dtype=complex)
        for j in range(d):
            shape = [len(rc)] + [1] * d
            shape[1 + j] = nk[j]
            phase = phase * np.exp(1j * np.multiply.outer(tc[:, j], ks[j])).reshape(shape)
        out[s:s + step] = (per_k * phase.reshape(len(rc), -1)).sum(axis=1)
    return out


def evaluate(f, r, theta):
    """Value of the truncated series at one point."""
    r = np.asarray(r, dtype=complex).reshape(1, -1)
    theta = np.asarray(theta, dtype=complex).reshape(1, -1)
    return complex(evaluate_many(f, r, theta)[0])


# -- composition -------------------------------------------------------
def _grid_size(K):
    target = max(2 * (2 * K + 1), 4)
    return 1 << (target - 1).bit_length()


def angle_grid(dim, n):
    """Uniform grid on the torus as an (n**dim, dim) array, 'ij' ordering."""
    ax = 2 * np.pi * np.arange(n) / n
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def compose_angle_many(fs, v, alias_tol=ALIAS_TOL):
    """Series of ``theta -> f(r, theta + v(theta))`` for every ``f`` in ``fs``.

    ``v`` is a sequence of ``d`` angle-only series.  Values are sampled on a
    uniform grid of ``N^d`` points, ``N`` the next power of two at least
    ``2(2K+1)``, and re-expanded by FFT; coefficients below the FFT noise floor
    of their channel are dropped.
    """
    fs = list(fs)
    if not fs:
        return []
    d = fs[0].dim
    v = list(v)
    if len(v) != d:
        raise ValueError(f"need {d} shift components, got {len(v)}")
    for s in v:
        if s.dim != d:
            raise ValueError("shift dimension mismatch")
        if s.taylor_degree > 0 and not taylor_part(s, 1).is_zero():
            raise ValueError("angle shift must not depend on the actions")
    if all(s.is_zero() for s in v):
        return fs
    K = max(f.fourier_cutoff for f in fs)
    Kv = max(s.fourier_cutoff for s in v)
    N = max(_grid_size(K), _grid_size((Kv + 1) // 2))
    grid = angle_grid(d, N)
    shift = np.empty(grid.shape, dtype=complex)
    for j, s in enumerate(v):
        box = _bounding_box(s.coeffs[(Ellipsis,) + (0,) * d])
        if box is None:
            shift[:, j] = 0.0
        else:
            lo, c = box
            shift[:, j] = _fourier_eval(c[..., None], [x - s.fourier_cutoff for x in lo], grid)[:, 0]
    pts = grid + shift
    out = []
    for f in fs:
        if f.dim != d:
            raise ValueError("dimension mismatch in compose_angle")
        box = _bounding_box(f.coeffs)
        if box is None:
            out.append(f)
            continue
        Kf, M = f.fourier_cutoff, f.taylor_degree
        lo, c = box
        tshape = c.shape[d:]
        vals = _fourier_eval(c.reshape(c.shape[:d] + (-1,)), [lo[j] - Kf for j in range(d)], pts)
        vals = vals.reshape((N,) * d + (-1,))
        spec = np.fft.fftn(vals, axes=tuple(range(d))) / N ** d
        floor = COMPOSE_NOISE_FLOOR * np.abs(vals).reshape(-1, vals.shape[-1]).max(axis=0)
        spec[np.abs(spec) < floor] = 0.0
        idx = np.concatenate([np.arange(0, Kf + 1), np.arange(N - Kf, N)])
        kept = spec[np.ix_(*([idx] * d))]
        # reorder to -K..K
        kept = np.roll(kept, Kf, axis=tuple(range(d)))
        total = np.abs(spec).sum()
        alias = max(float(total - np.abs(kept).sum()), 0.0)
        if total > 0 and alias > alias_tol * total:
            warnings.warn(f"compose_angle: {alias / total:.2e} of the l1 mass lies above K={Kf}",
                          AliasingWarning, stacklevel=2)
        coeffs = np.zeros((2 * Kf + 1,) * d + (M + 1,) * d, dtype=complex)
        block = kept.reshape(kept.shape[:d] + tshape)
        sl = (slice(None),) * d + tuple(slice(lo[d + j], lo[d + j] + tshape[j]) for j in range(d))
        coeffs[sl] = block
        out.append(FourierTaylorSeries(coeffs, f.truncation_mass + alias, drop_tol=0.0))
    return out


def compose_angle(f, v, alias_tol=ALIAS_TOL):
    """Series of ``theta -> f(r, theta + v(theta))``."""
    return compose_angle_many([f], v, alias_tol)[0]


# -- serialization -----------------------------------------------------
def to_json(f):
    terms = [{"k": list(k), "m": list(m), "re": c.real, "im": c.imag}
             for (k, m), c in f.terms().items()]
    return {"dim": f.dim, "fourier_cutoff": f.fourier_cutoff,
            "taylor_degree": f.taylor_degree, "terms": terms}


def from_json(data):
    try:
        dim = int(data["dim"])
        K = int(data["fourier_cutoff"])
        M = int(data["taylor_degree"])
        raw = data["terms"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed series JSON: {exc}") from None
    terms = {}
    for t in raw:
        key = (tuple(t["k"]), tuple(t["m"]))
        terms[key] = terms.get(key, 0j) + complex(t["re"], t.get("im", 0.0))
    return FourierTaylorSeries.from_terms(terms, dim, K, M)


def monomial_exponents(dim, degree, min_degree=0):
    """All ``m`` with ``min_degree <= |m|_1 <= degree`` in a fixed order."""
    return [m for m in itertools.product(range(degree + 1), repeat=dim)
            if min_degree <= sum(m) <= degree]
