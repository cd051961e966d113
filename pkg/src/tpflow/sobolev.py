"""
Periodic fractional Sobolev structure on the curve grid.

Conventions: for a field h of shape (N, n), mode coefficients are
h_hat = fft(h) / N, and a covector ("functional") is stored as an L^2
density f with l(h) = (1/N) sum_i <f_i, h_i>.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import spectral
from .curve import as_array
from .energy import make_quadrature
from .errors import DimensionError, ParameterError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SobolevOrder:
    s: float

    def __post_init__(self):
        s = float(self.s)
        if not (1.5 < s < 2.0):
            raise ParameterError(f"Sobolev order must lie in (3/2, 2), got {s}")
        object.__setattr__(self, "s", s)

    @property
    def p(self):
        return 2.0 * self.s + 1.0

    @property
    def sigma(self):
        return self.s - 1.0

    @property
    def eps(self):
        return (2.0 - self.s) / 2.0


def signed_frequencies(N):
    return np.fft.fftfreq(N, d=1.0 / N)


class SpectralInnerProduct:
    """<h, k> = sum_k m_k <h_hat_k, k_hat_k> with m_k = 1 + |2 pi k|^(2s)."""

    def __init__(self, order, N):
        if not isinstance(order, SobolevOrder):
            order = SobolevOrder(order)
        spectral.check_nodes(N)
        self.order = order
        self.N = N
        self.multiplier = 1.0 + np.abs(2 * np.pi * signed_frequencies(N)) ** (2 * order.s)

    @property
    def s(self):
        return self.order.s

    def _check(self, h):
        h = as_array(h)
        if h.ndim != 2 or h.shape[0] != self.N:
            raise DimensionError(f"field with {h.shape[0] if h.ndim else 0} nodes on a grid of {self.N}")
        return h

    def inner(self, h, k):
        h, k = self._check(h), self._check(k)
        if h.shape != k.shape:
            raise DimensionError("fields have different shapes")
        hh = np.fft.fft(h, axis=0) / self.N
        kk = np.fft.fft(k, axis=0) / self.N
        return float(np.real(np.sum(self.multiplier[:, None] * hh * np.conj(kk))))

    def norm(self, h):
        return float(np.sqrt(max(self.inner(h, h), 0.0)))

    def apply(self, h):
        """Density of the functional <h, .>: returns M h with <h, k> = (1/N) sum <Mh, k>."""
        h = self._check(h)
        return np.real(np.fft.ifft(self.multiplier[:, None] * np.fft.fft(h, axis=0), axis=0))

    def riesz(self, density):
        """Representative g with <g, h> = (1/N) sum <density, h> for every h."""
        f = self._check(density)
        return np.real(np.fft.ifft(np.fft.fft(f, axis=0) / self.multiplier[:, None], axis=0))

    def gram_matrix(self, n):
        """Matrix A with <h, k> = h.ravel() @ A @ k.ravel()."""
        col = np.real(np.fft.ifft(self.multiplier))
        idx = (np.arange(self.N)[:, None] - np.arange(self.N)[None, :]) % self.N
        return np.kron(col[idx] / self.N, np.eye(n))


def hs_inner(order, h, k):
    h = as_array(h)
    return SpectralInnerProduct(order, h.shape[0]).inner(h, k)


def riesz_solve(inner, functional):
    return inner.riesz(as_array(functional))


def gagliardo_seminorm_sq(sigma, k):
    """[k]_sigma^2 = int int_{|z|<=1/2} |k(x+z) - k(x)|^2 / |z|^(2 sigma + 1) dz dx.

    z-cells of width 1/N centred at the grid shifts j/N; on each cell the
    quotient |k(x+z) - k(x)|^2 / z^2 is frozen (|k'|^2 on the centre cell)
    and the weight |z|^(1 - 2 sigma) is integrated exactly.
    """
    sigma = float(sigma)
    if not (0.0 < sigma < 1.0):
        raise ParameterError(f"sigma must lie in (0, 1), got {sigma}")
    k = as_array(k)
    N = k.shape[0]
    spectral.check_nodes(N)
    h = 1.0 / N
    e = 2.0 - 2.0 * sigma  # antiderivative exponent of |z|^(1-2 sigma)

    def W(a, b):  # int_a^b z^(1-2sigma) dz, 0 <= a < b
        return (b ** e - a ** e) / e

    dk = spectral.spectral_derivative(k)
    total = 2.0 * W(0.0, h / 2) * np.sum(dk ** 2) / N
    for j in range(1, N // 2 + 1):
        z = j * h
        a, b = z - h / 2, min(z + h / 2, 0.5)
        wt = W(a, b)
        for sgn in (1, -1):
            diff = np.roll(k, -sgn * j, axis=0) - k
            total += wt * np.sum(diff ** 2) / (z * z) / N
    return float(total)


def _pl_forward_integral(k, a):
    """I_i(a) = int_{x_i}^{x_i + a} (k_pl(t) - k_i) dt for a >= 0, all nodes i.

    k_pl is the periodic piecewise-linear interpolant of the nodal values.
    """
    N = k.shape[0]
    h = 1.0 / N
    m = int(np.floor(a * N))
    f = a * N - m
    if f > 1.0 - 1e-14:
        m, f = m + 1, 0.0
    # full cells via the cumulative trapezoid of the periodic extension
    idx = np.arange(N)
    ext = k[np.arange(2 * N + 1) % N]
    cum = np.concatenate([np.zeros((1,) + k.shape[1:]), np.cumsum(0.5 * h * (ext[:-1] + ext[1:]), axis=0)])
    full = cum[idx + m] - cum[idx] - m * h * k
    d0 = k[(idx + m) % N] - k
    d1 = k[(idx + m + 1) % N] - k
    frac = f * h * d0 + 0.5 * f * f * h * (d1 - d0)
    return full + frac


def phi_operator(k_field, quad, s=None):
    """phi(k)(x_i, w_j) = |w_j|^(-s-1/2) int_{x_i}^{x_i + w_j} (k(x_i) - k(t)) dt.

    Returns an array of shape (len(quad.w), N, n).  The inner integral is the
    exact integral of the piecewise-linear interpolant.  ``s`` defaults to
    the order implied by the quadrature weight exponent alpha = 3 - 2s.
    """
    k = as_array(k_field)
    if s is None:
        s = (3.0 - quad.alpha) / 2.0
    if np.any(quad.w == 0.0):
        raise ParameterError("quadrature for phi must exclude w = 0")
    N = k.shape[0]
    refl = k[(-np.arange(N)) % N]
    out = np.empty((len(quad.w),) + k.shape)
    cache = {}
    for j, w in enumerate(quad.w):
        a = abs(w)
        if w > 0:
            val = -_pl_forward_integral(k, a)
        else:
            key = a
            if key not in cache:
                cache[key] = _pl_forward_integral(refl, a)[(-np.arange(N)) % N]
            val = cache[key]
        out[j] = a ** (-s - 0.5) * val
    return out


def phi_quadrature(N, s, **kw):
    """w-rule suited to |phi|^2, whose diagonal behaviour is |w|^(3 - 2s)."""
    return make_quadrature(N, 3.0 - 2.0 * s, **kw)


def phi_norm_sq(k_field, s, quad=None):
    k = as_array(k_field)
    N = k.shape[0]
    quad = quad if quad is not None else phi_quadrature(N, s)
    vals = phi_operator(k, quad, s)
    return float(np.sum(quad.plain_weights[:, None] / N * np.sum(vals ** 2, axis=2)))


def phi_bound_ratio(k_field, s, quad=None):
    """||phi(k)||^2 / [k]_{s-1}^2, to compare against 1/(2s)."""
    return phi_norm_sq(k_field, s, quad) / gagliardo_seminorm_sq(s - 1.0, k_field)
