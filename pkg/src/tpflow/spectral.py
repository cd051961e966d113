"""
Fourier machinery on the uniform periodic grid x_i = i/N of R/Z.

Every field is stored as an array of shape (N, n).  Off-grid values are
those of the trigonometric interpolant

    p(x) = sum_{|k| < N/2} c_k exp(2 pi i k x) + c_{N/2} cos(pi N x),

so that shifting, differencing and differentiating are all diagonal in the
real FFT basis.  The Nyquist mode is kept real (cosine) so interpolants of
real data stay real.
"""

import numpy as np

from .errors import ConfigurationError

MIN_NODES = 8


def check_nodes(N):
    if N < MIN_NODES:
        raise ConfigurationError(f"need at least {MIN_NODES} grid nodes, got {N}")


def wavenumbers(N):
    """Non-negative wavenumbers of the rfft layout (length N//2 + 1)."""
    return np.arange(N // 2 + 1)


def _has_nyquist(N):
    return N % 2 == 0


def derivative_multiplier(N):
    m = 2j * np.pi * wavenumbers(N)
    if _has_nyquist(N):
        m[-1] = 0.0
    return m


def _expm1_i(theta):
    """exp(i theta) - 1 without cancellation."""
    return -2.0 * np.sin(theta / 2) ** 2 + 1j * np.sin(theta)


def _taylor_remainder_i(theta):
    """exp(i theta) - 1 - i theta, accurate for small theta."""
    re = -2.0 * np.sin(theta / 2) ** 2
    small = np.abs(theta) < 0.5
    t = np.where(small, theta, 0.0)
    t2 = t * t
    series = -t * t2 / 6 * (1 - t2 / 20 * (1 - t2 / 42 * (1 - t2 / 72 * (1 - t2 / 110 * (1 - t2 / 156)))))
    im = np.where(small, series, np.sin(theta) - theta)
    return re + 1j * im


def shift_multipliers(N, w, kind="value"):
    """Multipliers (len(w), N//2+1) realising an operator at offsets w.

    kind:
      value      h(x_i + w)
      delta      h(x_i + w) - h(x_i)
      remainder  h(x_i + w) - h(x_i) - w h'(x_i)
      deriv      h'(x_i + w)
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    k = wavenumbers(N)
    theta = 2 * np.pi * w[:, None] * k[None, :]
    if kind == "value":
        m = np.exp(1j * theta)
    elif kind == "delta":
        m = _expm1_i(theta)
    elif kind == "remainder":
        m = _taylor_remainder_i(theta)
    elif kind == "deriv":
        m = 2j * np.pi * k[None, :] * np.exp(1j * theta)
    else:
        raise ValueError(f"unknown operator kind {kind!r}")
    if _has_nyquist(N):
        c = np.cos(np.pi * N * w)
        if kind == "value":
            m[:, -1] = c
        elif kind in ("delta", "remainder"):
            m[:, -1] = -2.0 * np.sin(np.pi * N * w / 2) ** 2
        else:
            m[:, -1] = -np.pi * N * np.sin(np.pi * N * w)
    return m


def apply_multipliers(coeffs, mult, N):
    """Apply per-offset multipliers to rfft coefficients (N//2+1, n).

    Returns an array (len(mult), N, n).
    """
    return np.fft.irfft(mult[:, :, None] * coeffs[None, :, :], n=N, axis=1)


def apply_adjoint(fields, mult, N):
    """Adjoint of ``apply_multipliers`` summed over offsets.

    ``fields`` has shape (M, N, n); returns sum_j Op_j^T fields_j, shape (N, n).
    """
    fhat = np.fft.rfft(fields, axis=1)
    acc = np.einsum("mk,mkc->kc", np.conj(mult), fhat)
    return np.fft.irfft(acc, n=N, axis=0)


def spectral_derivative(values):
    """Exact derivative of the trigonometric interpolant at the grid nodes."""
    values = np.asarray(values, dtype=float)
    N = values.shape[0]
    check_nodes(N)
    coeffs = np.fft.rfft(values, axis=0)
    mult = derivative_multiplier(N)
    shape = (-1,) + (1,) * (values.ndim - 1)
    return np.fft.irfft(mult.reshape(shape) * coeffs, n=N, axis=0)


def operator_matrix(N, w, kind):
    """Dense N x N matrix of a shift-type operator at a single offset w."""
    mult = shift_multipliers(N, [w], kind)[0]
    col = np.fft.irfft(mult, n=N)
    # circulant: (Op h)_i = sum_l col[(i - l) % N] h_l
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    return col[idx]


def derivative_matrix(N):
    mult = derivative_multiplier(N)
    col = np.fft.irfft(mult, n=N)
    idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
    return col[idx]


def interpolate(values, x):
    """Evaluate the trigonometric interpolant of nodal ``values`` at points x."""
    values = np.asarray(values, dtype=float)
    N = values.shape[0]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    coeffs = np.fft.rfft(values, axis=0) / N
    k = wavenumbers(N)
    phase = np.exp(2j * np.pi * np.outer(x, k))
    weights = np.full(k.shape, 2.0)
    weights[0] = 1.0
    if _has_nyquist(N):
        weights[-1] = 1.0
        phase[:, -1] = np.cos(np.pi * N * x)
    out = np.real(phase @ (weights[:, None] * coeffs.reshape(len(k), -1)))
    return out.reshape((len(x),) + values.shape[1:])


def interpolate_derivative(values, x):
    values = np.asarray(values, dtype=float)
    N = values.shape[0]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    coeffs = np.fft.rfft(values, axis=0) / N
    k = wavenumbers(N)
    phase = 2j * np.pi * k * np.exp(2j * np.pi * np.outer(x, k))
    weights = np.full(k.shape, 2.0)
    weights[0] = 1.0
    if _has_nyquist(N):
        weights[-1] = 1.0
        phase[:, -1] = -np.pi * N * np.sin(np.pi * N * x)
    out = np.real(phase @ (weights[:, None] * coeffs.reshape(len(k), -1)))
    return out.reshape((len(x),) + values.shape[1:])
