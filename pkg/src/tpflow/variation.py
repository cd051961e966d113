"""
Bilinear forms B1, B2, B3, their base-point derivatives, first and second
variations of energy and length, the Lagrange multiplier and the constrained
Hessian.

Notation on the pair grid (offset w_j, node x_i), with gamma the curve:

    Delta h  = h(x+w) - h(x)
    L h      = Delta h - D h(x) <T(x), Delta gamma>,   D h = h' / |gamma'|
    K        = weight * |gamma'(x)| |gamma'(x+w)| / |Delta gamma|^p

so that E = sum K |L gamma|^2 and

    B1(h, k) = sum K <L h, L k>
    B2(h, k) = sum K |L gamma|^2 <Delta h, Delta k> / |Delta gamma|^2
    B3(h, k) = sum K |L gamma|^2 (<Dh, Dk>(x) + <Dh, Dk>(x+w)).

L h is evaluated as R h - h'(x) <T, R gamma> / |gamma'(x)| with R the Taylor
remainder, which avoids cancellation near the diagonal.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import spectral
from .curve import as_array, check_same_grid, distortion
from .energy import energy_quadrature, pair_geometry, tp_energy
from .errors import LinearAlgebraError, PreconditionError
from .sobolev import SpectralInnerProduct

log = logging.getLogger(__name__)

TANGENCY_TOL = 1e-10
SYMMETRIC_KINDS = {"B1", "B2", "B3", "G", "D2TP", "D2L", "HESS"}


@dataclass(eq=False)
class FormMatrix:
    """Dense matrix of a bilinear form on flattened fields h.ravel()."""

    entries: np.ndarray
    kind: str
    base_curve_id: str
    s: float = float("nan")
    n_nodes: int = 0
    ambient_dim: int = 0
    basis: str = "nodal"
    meta: dict = field(default_factory=dict)

    def __call__(self, h, k):
        h = as_array(h).ravel() if np.ndim(h) > 1 else np.asarray(h)
        k = as_array(k).ravel() if np.ndim(k) > 1 else np.asarray(k)
        return float(h @ self.entries @ k)

    def asymmetry(self):
        M = self.entries
        return float(np.linalg.norm(M - M.T) / max(np.linalg.norm(M), np.finfo(float).tiny))

    def singular_values(self):
        return linalg.svdvals(self.entries)

    def __sub__(self, other):
        return FormMatrix(self.entries - other.entries, f"{self.kind}-{other.kind}", self.base_curve_id,
                          self.s, self.n_nodes, self.ambient_dim, self.basis)


class FormContext:
    """Pair-grid geometry of a curve, shared by every form evaluation."""

    def __init__(self, curve, params, quad=None):
        self.curve = curve
        self.params = params
        self.quad = quad if quad is not None else energy_quadrature(curve.n_nodes, params)
        self.geom = pair_geometry(curve, params, self.quad)
        g = self.geom
        self.L2 = np.einsum("jic,jic->ji", g.normal, g.normal)
        self.N = curve.n_nodes
        self._mult = {}

    def mult(self, kind):
        if kind not in self._mult:
            self._mult[kind] = spectral.shift_multipliers(self.N, self.quad.w, kind)
        return self._mult[kind]

    def field_data(self, h):
        """Pair-grid quantities of a field: L h, Delta h, D h(x), D h(x+w)."""
        h = as_array(h)
        check_same_grid(self.curve, h)
        g = self.geom
        coef = np.fft.rfft(h, axis=0)
        dh = spectral.spectral_derivative(h)
        rem = spectral.apply_multipliers(coef, self.mult("remainder"), self.N)
        delta = spectral.apply_multipliers(coef, self.mult("delta"), self.N)
        dy = spectral.apply_multipliers(coef, self.mult("deriv"), self.N)
        Lh = rem - dh[None] * g.t_rem[:, :, None]
        return {
            "L": Lh,
            "delta": delta,
            "Dx": dh / g.speed[:, None],
            "Dy": dy / g.speed_y[:, :, None],
            "d": dh,
        }

    def self_data(self):
        g = self.geom
        return {"L": g.normal, "delta": g.delta, "Dx": g.tangent,
                "Dy": g.tangent_y, "d": self.curve.deriv}

    def data(self, h):
        if h is None or h is self.curve:
            return self.self_data()
        return self.field_data(h)

    # scalar functionals of a single field on the pair grid
    def a(self, fd):
        return np.einsum("jic,jic->ji", self.geom.delta, fd["delta"]) / self.geom.dist ** 2

    def b(self, fd):
        return np.einsum("jic,jic->ji", self.geom.normal, fd["L"])

    def u(self, fd):
        return np.einsum("ic,ic->i", self.geom.tangent, fd["Dx"])[None, :]

    def v(self, fd):
        return np.einsum("jic,jic->ji", self.geom.tangent_y, fd["Dy"])

    def c(self, fd):
        g = self.geom
        return (np.einsum("ic,jic->ji", fd["Dx"], g.normal)
                + np.einsum("ic,jic->ji", g.tangent, fd["L"]))


def _ctx(curve, params, quad=None, ctx=None):
    return ctx if ctx is not None else FormContext(curve, params, quad)


def _dot(x, y):
    return np.einsum("...c,...c->...", x, y)


# --- the three forms ---------------------------------------------------------------

def b1(curve, params, h, k, quad=None, ctx=None):
    c = _ctx(curve, params, quad, ctx)
    H, Kd = c.data(h), c.data(k)
    return float(np.sum(c.geom.kernel * _dot(H["L"], Kd["L"])))


def b2(curve, params, h, k, quad=None, ctx=None):
    c = _ctx(curve, params, quad, ctx)
    H, Kd = c.data(h), c.data(k)
    g = c.geom
    return float(np.sum(g.kernel * c.L2 * _dot(H["delta"], Kd["delta"]) / g.dist ** 2))


def b3(curve, params, h, k, quad=None, ctx=None):
    c = _ctx(curve, params, quad, ctx)
    H, Kd = c.data(h), c.data(k)
    g = c.geom
    inner = _dot(H["Dx"], Kd["Dx"])[None, :] + _dot(H["Dy"], Kd["Dy"])
    return float(np.sum(g.kernel * c.L2 * inner))


def b2_bound(curve, params, h, k, quad=None):
    """BiLip(gamma)^2 ||h'||_inf ||k'||_inf TP(gamma), the majorant of |B2(h, k)|."""
    hp = np.max(np.linalg.norm(spectral.spectral_derivative(as_array(h)), axis=1))
    kp = np.max(np.linalg.norm(spectral.spectral_derivative(as_array(k)), axis=1))
    return distortion(curve) ** 2 * hp * kp * tp_energy(curve, params, quad)


def d_tp(curve, params, h, quad=None, ctx=None):
    """First variation 2 B1(gamma, h) - p B2(gamma, h) + B3(gamma, h)."""
    c = _ctx(curve, params, quad, ctx)
    p = params.p
    return (2 * b1(curve, params, None, h, ctx=c) - p * b2(curve, params, None, h, ctx=c)
            + b3(curve, params, None, h, ctx=c))


def d_tp_density(curve, params, quad=None, ctx=None):
    """L^2 density f of the first variation: d_tp(h) = (1/N) sum_i <f_i, h_i>."""
    c = _ctx(curve, params, quad, ctx)
    g = c.geom
    N = c.N
    K, L2, p = g.kernel, c.L2, params.p
    P = 2 * K[:, :, None] * g.normal
    Q = (-p * K * L2 / g.dist ** 2)[:, :, None] * g.delta
    S = (K * L2 / g.speed_y)[:, :, None] * g.tangent_y
    U = (np.einsum("ji,jic->ic", -2 * K * g.t_rem, g.normal)
         + np.sum(K * L2, axis=0)[:, None] * g.tangent / g.speed[:, None])
    grad = (spectral.apply_adjoint(P, c.mult("remainder"), N)
            + spectral.apply_adjoint(Q, c.mult("delta"), N)
            + spectral.apply_adjoint(S, c.mult("deriv"), N)
            - spectral.spectral_derivative(U))
    return N * grad


# --- base-point derivatives of the forms ---------------------------------------------

def db1(curve, params, k, h, psi1=None, quad=None, ctx=None, variant="derived"):
    """(DB1(gamma) k)(psi1, h): derivative of B1 in the base curve only; psi1 defaults to gamma.

    variant="derived" is the exact derivative of the discrete form.
    variant="printed" is the three-term expression with a '+' sign on the
    cross terms and no Jacobian term; it disagrees with finite differences
    and is kept only for comparison.
    """
    c = _ctx(curve, params, quad, ctx)
    g, p = c.geom, params.p
    Kd = c.data(k)
    P1, P2 = c.data(psi1), c.data(h)
    ak = c.a(Kd)
    ck = c.c(Kd)
    jk = c.u(Kd) + c.v(Kd)
    base = _dot(P1["L"], P2["L"])
    cross = _dot(P1["L"], P2["Dx"][None]) + _dot(P2["L"], P1["Dx"][None])
    if variant == "derived":
        val = base * (-p * ak + jk) - ck * cross
    elif variant == "printed":
        val = -p * base * ak + ck * cross
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return float(np.sum(g.kernel * val))


def tangency_residual(curve, h):
    """max_i |<gamma'(x_i), h'(x_i)>| relative to max|gamma'| max|h'|."""
    dh = spectral.spectral_derivative(as_array(h))
    scale = np.max(np.linalg.norm(curve.deriv, axis=1)) * max(np.max(np.linalg.norm(dh, axis=1)), 1e-300)
    return float(np.max(np.abs(np.einsum("ic,ic->i", curve.deriv, dh))) / scale)


def _require_tangent(curve, h, name):
    r = tangency_residual(curve, h)
    if r > TANGENCY_TOL:
        raise PreconditionError(f"{name} is not tangent: residual {r:.2e} exceeds {TANGENCY_TOL:g}")


def _require_unit_speed(curve, tol=1e-8):
    dev = np.max(np.abs(curve.speed - 1.0))
    if dev > tol:
        raise PreconditionError(f"curve is not unit speed: deviation {dev:.2e}")


def db2(curve, params, k, h, psi1=None, quad=None, ctx=None, split=False, full=False, check=True):
    """(DB2(gamma) k)(psi1, h) for tangent k.

    Two-term form: -(p+2) |L gamma|^2 a(psi1, h) a(gamma, k) + 2 <L gamma, L k> a(psi1, h),
    with a(x, y) = <Delta x, Delta y>/|Delta gamma|^2.  ``full`` adds the Jacobian
    term that vanishes for exactly tangent k.  ``split`` evaluates <L gamma, L k>
    through the factorisation with exponents s + eps and s - eps.
    """
    if check and not full:
        _require_tangent(curve, k, "k")
    c = _ctx(curve, params, quad, ctx)
    g, p, s = c.geom, params.p, params.s
    Kd = c.data(k)
    P1, P2 = c.data(psi1), c.data(h)
    a12 = _dot(P1["delta"], P2["delta"]) / g.dist ** 2
    ak = c.a(Kd)
    if split:
        eps = (2.0 - s) / 2.0
        phi_g = g.normal * g.dist[:, :, None] ** (-(s + eps))
        phi_k = Kd["L"] * g.dist[:, :, None] ** (-(s - eps))
        cross = _dot(phi_g, phi_k) * g.dist ** (2 * s)
    else:
        cross = c.b(Kd)
    val = a12 * (2 * cross - (p + 2) * c.L2 * ak)
    if full:
        val = val + a12 * c.L2 * (c.u(Kd) + c.v(Kd))
    return float(np.sum(g.kernel * val))


def db2_cross_term(curve, params, k, h, split=False, quad=None, ctx=None):
    """The 2 <Phi gamma, Phi k> summand of DB2, either directly or split."""
    c = _ctx(curve, params, quad, ctx)
    g, s = c.geom, params.s
    Kd, H = c.data(k), c.data(h)
    a12 = _dot(g.delta, H["delta"]) / g.dist ** 2
    if split:
        eps = (2.0 - s) / 2.0
        cross = _dot(g.normal * g.dist[:, :, None] ** (-(s + eps)), Kd["L"] * g.dist[:, :, None] ** (-(s - eps)))
        w = g.kernel * g.dist ** (2 * s)
    else:
        cross = c.b(Kd)
        w = g.kernel
    return float(2 * np.sum(w * cross * a12))


def db3(curve, params, k, h, psi1=None, quad=None, ctx=None):
    """(DB3(gamma) k)(psi1, h), the full base-point derivative of B3."""
    c = _ctx(curve, params, quad, ctx)
    g, p = c.geom, params.p
    Kd = c.data(k)
    P1, P2 = c.data(psi1), c.data(h)
    ix = _dot(P1["Dx"], P2["Dx"])[None, :]
    iy = _dot(P1["Dy"], P2["Dy"])
    uk, vk = c.u(Kd), c.v(Kd)
    pre = 2 * c.b(Kd) - p * c.L2 * c.a(Kd) + c.L2 * (uk + vk)
    val = pre * (ix + iy) - 2 * c.L2 * (ix * uk + iy * vk)
    return float(np.sum(g.kernel * val))


def db3_vanishes(curve, params, k, h, quad=None, ctx=None, check=True):
    """(DB3(gamma) k)(gamma, h); zero for unit-speed curves and exactly tangent h, k."""
    if check:
        _require_unit_speed(curve)
        _require_tangent(curve, h, "h")
        _require_tangent(curve, k, "k")
    return db3(curve, params, k, h, quad=quad, ctx=ctx)


def d2_tp(curve, params, h, k, quad=None, ctx=None, check=True):
    """Second variation 2B1 - pB2 + B3 + 2DB1 - pDB2 + DB3 evaluated at (h, k).

    All terms are exact derivatives of the discrete energy, so the value is
    the Hessian of ``tp_energy``.  With ``check`` the tangency preconditions
    are enforced.
    """
    if check:
        _require_unit_speed(curve)
        _require_tangent(curve, h, "h")
        _require_tangent(curve, k, "k")
    c = _ctx(curve, params, quad, ctx)
    p = params.p
    first = 2 * b1(curve, params, k, h, ctx=c) - p * b2(curve, params, k, h, ctx=c) + b3(curve, params, k, h, ctx=c)
    second = (2 * db1(curve, params, k, h, ctx=c) - p * db2(curve, params, k, h, ctx=c, full=True, check=False)
              + db3(curve, params, k, h, ctx=c))
    return first + second


def metric_g(curve, params, h, k, quad=None, ctx=None):
    """<h,k>_{L2(|gamma'|dx)} + <Dh,Dk>_{L2(|gamma'|dx)} + B1 + B2 + B3."""
    c = _ctx(curve, params, quad, ctx)
    hv, kv = as_array(h), as_array(k)
    sp = curve.speed
    l2 = np.mean(sp * _dot(hv, kv))
    dh, dk = spectral.spectral_derivative(hv), spectral.spectral_derivative(kv)
    h1 = np.mean(_dot(dh, dk) / sp)
    return float(l2 + h1 + b1(curve, params, h, k, ctx=c) + b2(curve, params, h, k, ctx=c)
                 + b3(curve, params, h, k, ctx=c))


# --- length ---------------------------------------------------------------------------

def length(curve):
    return curve.length()


def d_length(curve, h):
    dh = spectral.spectral_derivative(as_array(h))
    return float(np.mean(_dot(curve.unit_tangent, dh)))


def d_length_density(curve):
    """Density f with d_length(h) = (1/N) sum <f_i, h_i>."""
    return -spectral.spectral_derivative(curve.unit_tangent)


def d2_length(curve, h, k):
    """Full second variation of length: int (<h',k'> - <T,h'><T,k'>) / |gamma'|."""
    T, sp = curve.unit_tangent, curve.speed
    dh, dk = spectral.spectral_derivative(as_array(h)), spectral.spectral_derivative(as_array(k))
    return float(np.mean((_dot(dh, dk) - _dot(T, dh) * _dot(T, dk)) / sp))


def d2_length_tangent(curve, h, k, check=True):
    """Reduced second variation (1/N) sum <h'_i, k'_i> for unit-speed curves and tangent fields."""
    if check:
        _require_unit_speed(curve)
        _require_tangent(curve, h, "h")
        _require_tangent(curve, k, "k")
    dh, dk = spectral.spectral_derivative(as_array(h)), spectral.spectral_derivative(as_array(k))
    return float(np.mean(_dot(dh, dk)))


# --- Lagrange multiplier --------------------------------------------------------------

def lagrange_multiplier(curve, params, quad=None, ctx=None, inner=None, return_residual=False):
    """Least-squares lambda minimising ||DTP + lambda DL|| in the dual H^s norm."""
    c = _ctx(curve, params, quad, ctx)
    inner = inner if inner is not None else SpectralInnerProduct(params.s, curve.n_nodes)
    fE = d_tp_density(curve, params, ctx=c)
    fL = d_length_density(curve)
    gE, gL = inner.riesz(fE), inner.riesz(fL)
    denom = inner.inner(gL, gL)
    if denom <= 1e-14 * max(inner.inner(gE, gE), 1.0):
        raise LinearAlgebraError("length differential is numerically zero")
    lam = -inner.inner(gE, gL) / denom
    if return_residual:
        return lam, inner.norm(gE + lam * gL)
    return lam


# --- matrix assembly ------------------------------------------------------------------

def _local_blocks(c, j, kind):
    """Per-node coupling blocks between the operator channels at offset j.

    Channels o = 0..3 are L h, Delta h, h'(x), h'(x+w).  Returns an array
    (N, 4, n, 4, n) with Q(h, k) = sum_i sum X_o[i] . B[i,o,:,o',:] . Y_o'[i].
    """
    g = c.geom
    N, n = c.curve.nodes.shape
    p = c.params.p
    K = g.kernel[j]
    L2 = c.L2[j]
    I = np.eye(n)
    B = np.zeros((N, 4, n, 4, n))
    sp, spy = g.speed, g.speed_y[j]
    d2 = g.dist[j] ** 2

    def add_iso(o, o2, w):
        B[:, o, :, o2, :] += w[:, None, None] * I

    def add_outer(o, x, o2, y, w):
        B[:, o, :, o2, :] += w[:, None, None] * x[:, :, None] * y[:, None, :]

    if kind in ("B1", "D2TP", "G"):
        add_iso(0, 0, K * (2.0 if kind == "D2TP" else 1.0))
    if kind in ("B2", "D2TP", "G"):
        add_iso(1, 1, K * L2 / d2 * (-p if kind == "D2TP" else 1.0))
    if kind in ("B3", "D2TP", "G"):
        add_iso(2, 2, K * L2 / sp ** 2)
        add_iso(3, 3, K * L2 / spy ** 2)
    if kind in ("D2TP", "DB"):
        # functionals a, b, c, u, v written as sums of (channel, vector) pairs
        e = g.delta[j] / d2[:, None]
        Lg = g.normal[j]
        T = g.tangent
        Ty = g.tangent_y[j]
        funcs = {
            "a": [(1, e)],
            "b": [(0, Lg)],
            "c": [(2, Lg / sp[:, None]), (0, T)],
            "u": [(2, T / sp[:, None])],
            "v": [(3, Ty / spy[:, None])],
        }
        W = {
            ("a", "b"): -2 * p, ("b", "u"): 2.0, ("b", "v"): 2.0,
            ("c", "c"): -2.0, ("a", "a"): p * (p + 2) * L2,
            ("a", "u"): -p * L2, ("a", "v"): -p * L2,
            ("u", "u"): -L2, ("v", "v"): -L2, ("u", "v"): L2,
        }
        for (f1, f2), wt in W.items():
            wt = K * wt
            pairs = [(f1, f2)] if f1 == f2 else [(f1, f2), (f2, f1)]
            for x1, x2 in pairs:
                for o1, v1 in funcs[x1]:
                    for o2, v2 in funcs[x2]:
                        add_outer(o1, v1, o2, v2, wt)
    return B


def _channel_ops(c, j, Dmat):
    N = c.N
    w = c.quad.w[j]
    R = spectral.operator_matrix(N, w, "remainder")
    A = R - c.geom.t_rem[j][:, None] * Dmat
    Dl = spectral.operator_matrix(N, w, "delta")
    Dw = spectral.operator_matrix(N, w, "deriv")
    return np.stack([A, Dl, Dmat, Dw], axis=1)  # (N, 4, N)


def assemble(curve, params, kind, quad=None, ctx=None):
    """Dense FormMatrix of B1, B2, B3, G, D2TP, DB (all base-derivative terms) or D2L."""
    c = _ctx(curve, params, quad, ctx)
    N, n = curve.nodes.shape
    Dmat = spectral.derivative_matrix(N)
    if kind == "D2L":
        M = _d2_length_matrix(curve, Dmat)
    else:
        iso = kind in ("B1", "B2", "B3", "G")
        if iso:
            M1 = np.zeros((N, N))
        else:
            M = np.zeros((N * n, N * n))
        for j in range(c.quad.size):
            ops = _channel_ops(c, j, Dmat)  # (i, o, l)
            B = _local_blocks(c, j, kind)   # (i, o, c, o', c')
            if iso:
                # blocks are multiples of the identity; use the (0,0) entry
                Bs = B[:, :, 0, :, 0]
                Z = np.matmul(Bs, ops)
                M1 += ops.reshape(N * 4, N).T @ Z.reshape(N * 4, N)
            else:
                # Z[i,o,c,m,d] = sum_p B[i,o,c,p,d] ops[i,p,m] as a batched matmul
                Bt = B.transpose(0, 1, 2, 4, 3).reshape(N, 4 * n * n, 4)
                Z = np.matmul(Bt, ops).reshape(N, 4, n, n, N).transpose(0, 1, 2, 4, 3)
                M += (ops.reshape(N * 4, N).T @ Z.reshape(N * 4, n * N * n)).reshape(N * n, N * n)
        if iso:
            if kind == "G":
                M1 += np.diag(curve.speed) / N + Dmat.T @ (Dmat / curve.speed[:, None]) / N
            M = np.kron(M1, np.eye(n))
    return FormMatrix(M, kind, curve.digest(), params.s, N, n)


def _d2_length_matrix(curve, Dmat):
    N, n = curve.nodes.shape
    T, sp = curve.unit_tangent, curve.speed
    P = (np.eye(n)[None] - T[:, :, None] * T[:, None, :]) / sp[:, None, None] / N  # (N, n, n)
    Dk = np.kron(Dmat, np.eye(n))
    blk = linalg.block_diag(*P)
    return Dk.T @ blk @ Dk
