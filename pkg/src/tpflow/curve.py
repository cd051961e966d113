"""
Discrete closed curves on the uniform grid x_i = i/N of R/Z.

A ``DiscreteCurve`` holds node positions and caches the spectral derivative.
Off-grid positions come from the trigonometric interpolant (see
``tpflow.spectral``).  Polyline quantities (intrinsic distance, segment
separation) are used only for the self-avoidance diagnostics.
"""

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import DegenerateCurveError, DimensionError, SelfIntersectionError

log = logging.getLogger(__name__)

# relative floor on speed below which a curve counts as degenerate
REGULARITY_FLOOR = 1e-8
# relative floor on chord length below which nodes count as coincident
SEPARATION_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    """Closed curve sampled at x_i = i/N; immutable after construction."""

    nodes: np.ndarray
    deriv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 2:
            raise DimensionError("curve nodes must be an (N, n) array")
        N, n = nodes.shape
        spectral.check_nodes(N)
        if n < 2:
            raise DimensionError(f"ambient dimension must be at least 2, got {n}")
        if not np.all(np.isfinite(nodes)):
            raise DimensionError("curve nodes contain non-finite entries")
        nodes.setflags(write=False)
        d = spectral.spectral_derivative(nodes)
        d.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "deriv", d)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def ambient_dim(self):
        return self.nodes.shape[1]

    @property
    def grid(self):
        return np.arange(self.n_nodes) / self.n_nodes

    @property
    def speed(self):
        return np.linalg.norm(self.deriv, axis=1)

    @property
    def unit_tangent(self):
        return self.deriv / check_regular(self)[:, None]

    def length(self):
        """Length of the interpolant (trapezoid rule on the speed, spectrally exact for smooth curves)."""
        return float(np.mean(self.speed))

    def coeffs(self):
        return np.fft.rfft(self.nodes, axis=0)

    def at(self, x):
        """Positions of the interpolant at parameters x."""
        return spectral.interpolate(self.nodes, x)

    def scaled(self, factor):
        return DiscreteCurve(self.nodes * factor)

    def transformed(self, rotation=None, translation=None):
        pts = self.nodes
        if rotation is not None:
            pts = pts @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            pts = pts + np.asarray(translation, dtype=float)
        return DiscreteCurve(pts)

    def digest(self):
        """Short content hash used to tag exported matrices."""
        return hashlib.sha256(np.ascontiguousarray(self.nodes).tobytes()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Vector field on the curve grid, with its spectral derivative."""

    values: np.ndarray
    deriv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionError("field values must be an (N, n) array")
        spectral.check_nodes(v.shape[0])
        if not np.all(np.isfinite(v)):
            raise DimensionError("field contains non-finite entries")
        v.setflags(write=False)
        d = spectral.spectral_derivative(v)
        d.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "deriv", d)

    @property
    def shape(self):
        return self.values.shape


def as_array(field_like):
    """Accept a DisplacementField, DiscreteCurve or raw (N, n) array."""
    if isinstance(field_like, DisplacementField):
        return field_like.values
    if isinstance(field_like, DiscreteCurve):
        return field_like.nodes
    return np.asarray(field_like, dtype=float)


def check_same_grid(curve, values):
    if values.shape != curve.nodes.shape:
        raise DimensionError(f"field shape {values.shape} does not match curve {curve.nodes.shape}")


def check_regular(curve):
    """Return nodal speeds, raising if any falls below the regularity floor."""
    sp = np.linalg.norm(curve.deriv, axis=1)
    scale = max(np.mean(sp), np.finfo(float).tiny)
    if sp.min() <= REGULARITY_FLOOR * scale or not np.isfinite(scale):
        i = int(np.argmin(sp))
        raise DegenerateCurveError(f"speed {sp[i]:.3e} at node {i} below regularity floor")
    return sp


def spectral_derivative(values):
    """Nodal derivative of the trigonometric interpolant of ``values``."""
    return spectral.spectral_derivative(as_array(values))


def arc_derivative(curve, field_like):
    """D_gamma h = h' / |gamma'| at the nodes."""
    h = as_array(field_like)
    check_same_grid(curve, h)
    sp = check_regular(curve)
    return spectral.spectral_derivative(h) / sp[:, None]


def chord_defect(curve, field_like, i, j):
    """L h(x_i, x_j) = (h_j - h_i) - D h(x_i) <T(x_i), gamma_j - gamma_i>."""
    h = as_array(field_like)
    check_same_grid(curve, h)
    Dh = arc_derivative(curve, h)
    T = curve.unit_tangent
    dg = curve.nodes[j] - curve.nodes[i]
    return (h[j] - h[i]) - Dh[i] * np.dot(T[i], dg)


def _normal_part(tangent, chord):
    t = tangent / np.linalg.norm(tangent)
    return chord - t * np.dot(t, chord)


def tangent_point_radius_from(point_x, tangent_x, point_y):
    """Radius of the circle through both points tangent to ``tangent_x`` at ``point_x``."""
    chord = np.asarray(point_y, float) - np.asarray(point_x, float)
    d2 = float(np.dot(chord, chord))
    if d2 == 0.0:
        raise SelfIntersectionError("coincident points in tangent-point radius", distance=0.0)
    nrm = np.linalg.norm(_normal_part(np.asarray(tangent_x, float), chord))
    if nrm <= 1e-15 * np.sqrt(d2):
        return np.inf
    return d2 / (2.0 * nrm)


def tangent_point_radius(curve, i, j):
    if i % curve.n_nodes == j % curve.n_nodes:
        raise SelfIntersectionError("tangent-point radius needs distinct nodes", pair=(i, j), distance=0.0)
    chord = curve.nodes[j] - curve.nodes[i]
    if np.linalg.norm(chord) == 0.0:
        raise SelfIntersectionError(f"nodes {i} and {j} coincide", pair=(i, j), distance=0.0)
    return tangent_point_radius_from(curve.nodes[i], curve.deriv[i], curve.nodes[j])


def _pairwise_distances(pts):
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _gap_mask(N, min_gap):
    idx = np.arange(N)
    gap = np.abs(idx[:, None] - idx[None, :])
    gap = np.minimum(gap, N - gap)
    return gap >= min_gap


def polyline_length(curve):
    seg = np.roll(curve.nodes, -1, axis=0) - curve.nodes
    return float(np.linalg.norm(seg, axis=1).sum())


def check_injective(curve, floor=SEPARATION_FLOOR):
    """Raise if two nodes at least two cells apart come closer than floor * length."""
    N = curve.n_nodes
    dist = _pairwise_distances(curve.nodes)
    mask = _gap_mask(N, 2)
    scale = polyline_length(curve)
    masked = np.where(mask, dist, np.inf)
    k = int(np.argmin(masked))
    i, j = divmod(k, N)
    if masked[i, j] <= floor * scale:
        raise SelfIntersectionError(
            f"nodes {i} and {j} are {masked[i, j]:.3e} apart (floor {floor * scale:.3e})",
            pair=(i, j), distance=float(masked[i, j]))
    return float(masked[i, j])


def distortion(curve):
    """Max over nodes two or more cells apart of polyline arc / chord."""
    N = curve.n_nodes
    seg = np.linalg.norm(np.roll(curve.nodes, -1, axis=0) - curve.nodes, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    total = seg.sum()
    arc = np.abs(cum[:, None] - cum[None, :])
    arc = np.minimum(arc, total - arc)
    chord = _pairwise_distances(curve.nodes)
    mask = _gap_mask(N, 2)
    if np.any(chord[mask] <= SEPARATION_FLOOR * total):
        k = int(np.argmin(np.where(mask, chord, np.inf)))
        i, j = divmod(k, N)
        raise SelfIntersectionError(f"nodes {i} and {j} coincide", pair=(i, j), distance=float(chord[i, j]))
    ratio = np.where(mask, arc / np.where(mask, chord, 1.0), 0.0)
    return float(ratio.max())


def min_segment_separation(curve):
    """Smallest distance between polyline segments that share no vertex."""
    P = curve.nodes
    Q = np.roll(P, -1, axis=0)
    N = len(P)
    i, j = np.nonzero(np.triu(_gap_mask(N, 2), k=1))
    d = _segment_distance(P[i], Q[i], P[j], Q[j])
    return float(d.min()) if d.size else np.inf


def _segment_distance(p1, q1, p2, q2):
    # closest points of segment pairs, clamped parameters
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-300, np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        t = (b * s + f) / e
        s = np.where(t < 0, np.clip(-c / a, 0.0, 1.0), np.where(t > 1, np.clip((b - c) / a, 0.0, 1.0), s))
    t = np.clip(t, 0.0, 1.0)
    diff = (p1 + s[:, None] * d1) - (p2 + t[:, None] * d2)
    return np.linalg.norm(diff, axis=1)


# --- arclength retraction --------------------------------------------------

def _eval_basis(N, x):
    k = spectral.wavenumbers(N)
    ph = np.exp(2j * np.pi * np.outer(x, k))
    if N % 2 == 0:
        ph[:, -1] = np.cos(np.pi * N * x)
    return ph


def _real_weights(N):
    w = np.full(N // 2 + 1, 2.0)
    w[0] = 1.0
    if N % 2 == 0:
        w[-1] = 1.0
    return w


def _cumulative_length(speed):
    """Coefficient data for S(x) = int_0^x speed, from the interpolant of nodal speed."""
    N = len(speed)
    c = np.fft.rfft(speed) / N * _real_weights(N)
    k = spectral.wavenumbers(N)
    integ = np.zeros_like(c)
    integ[1:] = c[1:] / (2j * np.pi * k[1:])
    if N % 2 == 0:
        # real cosine mode integrates to a sine
        integ[-1] = 0.0
    mean = c[0].real
    nyq = c[-1].real if N % 2 == 0 else 0.0

    def S(x):
        ph = _eval_basis(N, x)
        val = np.real(ph @ integ) - np.real(integ.sum())
        if N % 2 == 0:
            val += nyq * np.sin(np.pi * N * x) / (np.pi * N)
        return mean * x + val

    def dS(x):
        return np.real(_eval_basis(N, x) @ c)

    return S, dS, mean


def _resample_once(nodes):
    N = len(nodes)
    d = spectral.spectral_derivative(nodes)
    sp = np.linalg.norm(d, axis=1)
    S, dS, L = _cumulative_length(sp)
    target = L * np.arange(N) / N
    x = np.arange(N) / N
    for _ in range(50):
        step = (S(x) - target) / dS(x)
        x = x - step
        if np.max(np.abs(step)) < 1e-15:
            break
    x[0] = 0.0
    return spectral.interpolate(nodes, x), L


def retract_to_arclength(curve, tol=1e-13, max_iter=30):
    """Constant-speed reparametrisation, scaled to unit length, with gamma(0) = 0.

    Unit length refers to the length of the interpolant; for the sampled round
    circle this makes the analytic unit-length circle a fixed point.
    """
    check_regular(curve)
    check_injective(curve)
    nodes = np.array(curve.nodes)
    dev = np.inf
    for it in range(max_iter):
        sp = np.linalg.norm(spectral.spectral_derivative(nodes), axis=1)
        dev = np.max(np.abs(sp / sp.mean() - 1.0))
        if dev < tol:
            break
        nodes, _ = _resample_once(nodes)
    sp = np.linalg.norm(spectral.spectral_derivative(nodes), axis=1)
    dev = np.max(np.abs(sp / sp.mean() - 1.0))
    if dev > 1e-8:
        log.warning("retraction reached speed deviation %.2e after %d sweeps", dev, it + 1)
    nodes = nodes / sp.mean()
    nodes = nodes - nodes[0]
    return DiscreteCurve(nodes)


def speed_deviation(curve):
    sp = curve.speed
    return float(np.max(np.abs(sp - 1.0)))


# --- constructors -----------------------------------------------------------

def _embed(planar, ambient_dim):
    if ambient_dim < 2:
        raise DimensionError("ambient dimension must be at least 2")
    out = np.zeros((planar.shape[0], ambient_dim))
    out[:, : planar.shape[1]] = planar
    return out


def circle(N, radius=None, length=1.0, ambient_dim=2, phase=0.0, center_at_origin=False):
    """Round circle; by default unit length with gamma(0) = 0."""
    if radius is None:
        radius = length / (2 * np.pi)
    x = np.arange(N) / N
    th = 2 * np.pi * x + phase
    pts = radius * np.stack([np.cos(th), np.sin(th)], axis=1)
    if not center_at_origin:
        pts = pts - pts[0]
    return DiscreteCurve(_embed(pts, ambient_dim))


def ellipse(N, ratio=2.0, ambient_dim=2):
    x = np.arange(N) / N
    th = 2 * np.pi * x
    pts = np.stack([ratio * np.cos(th), np.sin(th)], axis=1)
    return DiscreteCurve(_embed(pts, ambient_dim))


def torus_knot(N, p=2, q=3, aspect=0.4, ambient_dim=3):
    if ambient_dim < 3:
        raise DimensionError("torus knots need ambient dimension at least 3")
    th = 2 * np.pi * np.arange(N) / N
    r = 1.0 + aspect * np.cos(q * th)
    pts = np.stack([r * np.cos(p * th), r * np.sin(p * th), aspect * np.sin(q * th)], axis=1)
    return DiscreteCurve(_embed(pts, ambient_dim))


def perturbed_circle(N, modes=(2, 3, 4, 5), amplitude=0.03, seed=0, ambient_dim=2):
    """Unit-length circle plus a seeded band-limited perturbation.

    ``amplitude`` is relative to the radius; each listed mode gets random
    coefficients in every coordinate, normalised so the perturbation's
    largest nodal displacement equals ``amplitude * radius``.
    """
    rng = np.random.default_rng(seed)
    base = circle(N, ambient_dim=ambient_dim, center_at_origin=True).nodes
    radius = 1.0 / (2 * np.pi)
    x = np.arange(N) / N
    pert = np.zeros_like(base)
    for m in modes:
        a = rng.standard_normal(ambient_dim)
        b = rng.standard_normal(ambient_dim)
        pert += np.outer(np.cos(2 * np.pi * m * x), a) + np.outer(np.sin(2 * np.pi * m * x), b)
    scale = np.max(np.linalg.norm(pert, axis=1))
    if scale > 0:
        pert *= amplitude * radius / scale
    return DiscreteCurve(base + pert)
