"""
Discrete tangent spaces of the arclength manifold with pinned base point.

Constraints are collocated at the nodes: <gamma'(x_i), h'(x_i)> = 0 for all i
(fixed parametrisation speed) plus h(x_0) = 0 (pinned base point).  Projections
and gradients are H^s-orthogonal, computed from the dense saddle-point system

    [ A  C^T ] [ g  ]   [ b ]
    [ C  0   ] [ mu ] = [ 0 ]

with A the H^s Gram matrix of flattened fields.
"""

import logging
import warnings

import numpy as np
from scipy import linalg

from . import spectral
from .curve import as_array, check_regular
from .errors import LinearAlgebraError
from .sobolev import SpectralInnerProduct
from .variation import FormContext, FormMatrix, assemble, d_tp_density, lagrange_multiplier

log = logging.getLogger(__name__)


class ConstraintSystem:
    """Linear map h -> (<gamma'_i, h'_i>)_i, h_0 on flattened fields."""

    def __init__(self, curve):
        check_regular(curve)
        self.curve = curve
        N, n = curve.nodes.shape
        Dmat = spectral.derivative_matrix(N)
        C = np.zeros((N + n, N * n))
        C[:N] = (Dmat[:, :, None] * curve.deriv[:, None, :]).reshape(N, N * n)
        C[N:, :n] = np.eye(n)
        self.matrix = C
        self.n_rows = N + n

    def residual(self, h):
        return self.matrix @ as_array(h).ravel()

    def max_residual(self, h):
        return float(np.max(np.abs(self.residual(h))))

    def rank(self):
        sv = linalg.svdvals(self.matrix)
        return int(np.sum(sv > sv[0] * 1e-10))


def _kkt(A, C):
    m = C.shape[0]
    return np.block([[A, C.T], [C, np.zeros((m, m))]])


def _solve_kkt(A, C, rhs):
    K = _kkt(A, C)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu = linalg.lu_factor(K, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise LinearAlgebraError(f"saddle-point factorisation failed: {exc}") from exc
    diag = np.abs(np.diag(lu[0]))
    if diag.min() <= 1e-13 * diag.max():
        cond = np.linalg.cond(K)
        raise LinearAlgebraError(f"singular saddle-point system (condition {cond:.2e})", condition=cond)
    sol = linalg.lu_solve(lu, np.concatenate([rhs, np.zeros(C.shape[0])]))
    return sol[: A.shape[0]]


def project_tangent(curve, inner, field_like, system=None):
    """H^s-orthogonal projection onto the constraint null space."""
    f = as_array(field_like)
    N, n = f.shape
    system = system or ConstraintSystem(curve)
    A = inner.gram_matrix(n)
    g = _solve_kkt(A, system.matrix, A @ f.ravel())
    return g.reshape(N, n)


def constrained_gradient(curve, params, inner=None, ctx=None, system=None, density=None):
    """Tangent g with <g, h>_{H^s} = DTP(h) for every constrained h."""
    N, n = curve.nodes.shape
    inner = inner if inner is not None else SpectralInnerProduct(params.s, N)
    if density is None:
        density = d_tp_density(curve, params, ctx=ctx)
    system = system or ConstraintSystem(curve)
    A = inner.gram_matrix(n)
    g = _solve_kkt(A, system.matrix, density.ravel() / N)
    return g.reshape(N, n)


def gradient_via_projection(curve, params, inner=None, ctx=None):
    """Second path: project the unconstrained Riesz representative."""
    inner = inner if inner is not None else SpectralInnerProduct(params.s, curve.n_nodes)
    dens = d_tp_density(curve, params, ctx=ctx)
    return project_tangent(curve, inner, inner.riesz(dens))


def tangent_basis(curve, inner, system=None):
    """H^s-orthonormal basis (columns, flattened fields) of the constrained space."""
    system = system or ConstraintSystem(curve)
    Z = linalg.null_space(system.matrix, rcond=1e-10)
    n = curve.ambient_dim
    A = inner.gram_matrix(n)
    G = Z.T @ A @ Z
    w, V = linalg.eigh(0.5 * (G + G.T))
    if w.min() <= 0:
        raise LinearAlgebraError("tangent Gram matrix is not positive definite")
    return Z @ V / np.sqrt(w)


def restrict(form, basis, kind=None):
    M = basis.T @ form.entries @ basis
    return FormMatrix(M, kind or form.kind, form.base_curve_id, form.s, form.n_nodes,
                      form.ambient_dim, basis="tangent")


def constrained_hessian(curve, params, inner=None, ctx=None, basis=None, lam=None, return_parts=False):
    """(D2TP + lambda D2L) on an H^s-orthonormal tangent basis."""
    ctx = ctx if ctx is not None else FormContext(curve, params)
    inner = inner if inner is not None else SpectralInnerProduct(params.s, curve.n_nodes)
    if basis is None:
        basis = tangent_basis(curve, inner)
    if lam is None:
        lam = lagrange_multiplier(curve, params, ctx=ctx, inner=inner)
    d2 = assemble(curve, params, "D2TP", ctx=ctx)
    d2l = assemble(curve, params, "D2L", ctx=ctx)
    full = FormMatrix(d2.entries + lam * d2l.entries, "HESS", curve.digest(), params.s,
                      curve.n_nodes, curve.ambient_dim)
    H = restrict(full, basis, "HESS")
    H.meta["lambda"] = float(lam)
    if return_parts:
        return H, {"D2TP": d2, "D2L": d2l, "basis": basis, "lambda": lam}
    return H


def compact_remainder(curve, params, inner=None, ctx=None, basis=None, scale=1.0):
    """D2TP - scale * G on the tangent basis (scale = 1 is the stated remainder)."""
    ctx = ctx if ctx is not None else FormContext(curve, params)
    inner = inner if inner is not None else SpectralInnerProduct(params.s, curve.n_nodes)
    if basis is None:
        basis = tangent_basis(curve, inner)
    d2 = assemble(curve, params, "D2TP", ctx=ctx)
    G = assemble(curve, params, "G", ctx=ctx)
    R = FormMatrix(d2.entries - scale * G.entries, "D2TP-G" if scale == 1.0 else f"D2TP-{scale:g}G",
                   curve.digest(), params.s, curve.n_nodes, curve.ambient_dim)
    return restrict(R, basis)


def tail_ratio(form, k=None):
    """sigma_k / sigma_1 with k = N/2 (1-based) by default."""
    sv = form.singular_values()
    if k is None:
        k = form.n_nodes // 2
    return float(sv[k - 1] / sv[0])
