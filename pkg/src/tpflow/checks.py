"""
Property and oracle checks shared by the ``verify`` command and the test suite.

Each check returns a CheckResult with the measured value and its tolerance.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import curve as cv
from . import energy as en
from . import spectral
from . import variation as va
from .constraint import constrained_hessian
from .sobolev import phi_bound_ratio

log = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28} measured={self.measured:.3e}  tol={self.tolerance:.3g}  {self.detail}"


def _result(name, measured, tol, detail=""):
    return CheckResult(name, float(measured), float(tol), bool(np.isfinite(measured) and measured <= tol), detail)


def random_smooth_field(N, n, rng, max_mode=5, scale=1.0 / (2 * np.pi)):
    """Band-limited random field with sup norm ``scale``."""
    x = np.arange(N) / N
    h = np.zeros((N, n))
    for m in range(max_mode + 1):
        amp = 1.0 / (1.0 + m) ** 2
        h += amp * np.outer(np.cos(2 * np.pi * m * x), rng.standard_normal(n))
        if m:
            h += amp * np.outer(np.sin(2 * np.pi * m * x), rng.standard_normal(n))
    return h * scale / np.max(np.linalg.norm(h, axis=1))


def sample_curve(N, seed=0, amplitude=0.05, n=2):
    """Perturbed circle (not arclength-parametrised) used by the finite-difference checks."""
    return cv.perturbed_circle(N, amplitude=amplitude, seed=seed, ambient_dim=n)


def corrupted_quadrature(quad, factor):
    return replace(quad, weights=quad.weights * factor)


def check_circle_energy(params, N, quad=None, tol=1e-6):
    quad = quad if quad is not None else en.energy_quadrature(N, params)
    E = en.tp_energy(cv.circle(N), params, quad)
    ref = en.circle_energy_reference(params.p)
    return _result("circle energy oracle", abs(E - ref) / ref, tol, f"E={E:.12g} ref={ref:.12g}")


def fd_directional(params, curve, h, eps, quad):
    Ep = en.tp_energy(cv.DiscreteCurve(curve.nodes + eps * h), params, quad)
    Em = en.tp_energy(cv.DiscreteCurve(curve.nodes - eps * h), params, quad)
    return (Ep - Em) / (2 * eps)


def check_gradient_fd(params, N, n_fields=5, seed=0, eps=1e-5, tol=1e-5, quad=None):
    quad = quad if quad is not None else en.energy_quadrature(N, params)
    c = sample_curve(N, seed)
    rng = np.random.default_rng(seed)
    ctx = va.FormContext(c, params, quad)
    dens = va.d_tp_density(c, params, ctx=ctx)
    worst = 0.0
    for _ in range(n_fields):
        h = random_smooth_field(N, c.ambient_dim, rng)
        exact = np.mean(np.sum(dens * h, axis=1))
        fd = fd_directional(params, c, h, eps, quad)
        worst = max(worst, abs(exact - fd) / max(abs(fd), 1e-300))
    return _result("gradient finite difference", worst, tol, f"{n_fields} fields, eps={eps:g}")


def check_homogeneity(params, N, lam=2.0, tol=1e-10, quad=None):
    quad = quad if quad is not None else en.energy_quadrature(N, params)
    c = sample_curve(N, 1)
    E1 = en.tp_energy(c, params, quad)
    E2 = en.tp_energy(c.scaled(lam), params, quad)
    err = abs(E2 - lam ** (4 - params.p) * E1) / abs(E2)
    return _result("energy homogeneity", err, tol, f"lambda={lam:g}")


def check_scaling_identity(params, N, tol=1e-8, quad=None):
    quad = quad if quad is not None else en.energy_quadrature(N, params)
    c = sample_curve(N, 2)
    E = en.tp_energy(c, params, quad)
    d = va.d_tp(c, params, c.nodes, quad=quad)
    return _result("d_tp(gamma, gamma)", abs(d - (4 - params.p) * E) / abs(E), tol)


def check_factorization(params, N, tol=1e-10, quad=None):
    quad = quad if quad is not None else en.energy_quadrature(N, params)
    c = sample_curve(N, 3)
    E = en.tp_energy(c, params, quad)
    F = en.factorized_energy(c, params, quad)
    return _result("factorisation consistency", abs(E - F) / E, tol)


def check_phi_bound(params, N, n_fields=3, seed=0, slack=0.05):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fields):
        h = random_smooth_field(N, 2, rng, max_mode=int(rng.integers(2, 9)))
        k = spectral.spectral_derivative(h)
        worst = max(worst, phi_bound_ratio(k, params.s) * 2 * params.s)
    return _result("phi operator bound", worst, 1.0 + slack, "ratio to 1/(2s)")


def check_hessian_symmetry(params, N, tol=1e-8):
    c = cv.circle(N)
    H = constrained_hessian(c, params)
    return _result("hessian symmetry", H.asymmetry(), tol)


def verify_suite(params, N, quad_factor=None):
    """Run every check at (s, N); ``quad_factor`` corrupts the energy quadrature weights."""
    quad = en.energy_quadrature(N, params)
    if quad_factor is not None:
        quad = corrupted_quadrature(quad, quad_factor)
    return [
        check_circle_energy(params, N, quad),
        check_gradient_fd(params, N, quad=quad),
        check_homogeneity(params, N, quad=quad),
        check_scaling_identity(params, N, quad=quad),
        check_factorization(params, N, quad=quad),
        check_phi_bound(params, N),
        check_hessian_symmetry(params, N),
    ]
