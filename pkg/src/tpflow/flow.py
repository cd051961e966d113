"""
Constrained H^s gradient flow of the tangent-point energy, trace bookkeeping
and Lojasiewicz exponent fitting.

Each step is explicit Euler followed by arclength retraction, with Armijo
backtracking on the step size.  Energy decreases are measured as termwise
differences of the pair-grid integrand, which stays accurate long after the
absolute energy has reached its rounding floor.
"""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .constraint import constrained_gradient
from .curve import DiscreteCurve, check_injective, distortion, min_segment_separation, retract_to_arclength
from .energy import energy_quadrature, pair_geometry
from .errors import (ConfigurationError, InsufficientSignalError, ParameterError,
                     SelfIntersectionError, StagnationError)
from .sobolev import SpectralInnerProduct
from .variation import FormContext, lagrange_multiplier

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("t", "energy", "grad_norm_Hs", "distortion", "min_separation", "step_dt", "length_residual")


@dataclass
class FlowConfig:
    dt_init: float = 1e-3
    dt_min: float = 1e-14
    dt_max: float = 0.02
    armijo_c: float = 1e-4
    grad_tol: float = 1e-6
    max_steps: int = 10000
    retract_every: int = 1
    seed: int = 0
    grow: float = 1.5
    separation_floor: float = 1e-6
    monitor_every: int = 1

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ConfigurationError("need 0 < dt_min <= dt_init <= dt_max")
        if not (0 < self.armijo_c < 1):
            raise ConfigurationError("armijo_c must lie in (0, 1)")
        if self.max_steps < 0 or self.retract_every < 1 or self.monitor_every < 1:
            raise ConfigurationError("max_steps >= 0, retract_every >= 1 and monitor_every >= 1 required")
        if self.grow < 1:
            raise ConfigurationError("grow must be at least 1")


@dataclass
class FlowTrace:
    rows: list = field(default_factory=list)
    retraction_increases: list = field(default_factory=list)

    def append(self, **row):
        self.rows.append(tuple(float(row[c]) for c in TRACE_COLUMNS))

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([r[TRACE_COLUMNS.index(name)] for r in self.rows])

    def as_array(self):
        return np.array(self.rows, dtype=float).reshape(-1, len(TRACE_COLUMNS))

    @classmethod
    def from_arrays(cls, t, energy, grad, **extra):
        tr = cls()
        n = len(t)
        for k in range(n):
            tr.append(t=t[k], energy=energy[k], grad_norm_Hs=grad[k],
                      distortion=extra.get("distortion", np.full(n, np.nan))[k],
                      min_separation=extra.get("min_separation", np.full(n, np.nan))[k],
                      step_dt=extra.get("step_dt", np.full(n, np.nan))[k],
                      length_residual=extra.get("length_residual", np.zeros(n))[k])
        return tr

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([repr(v) for v in r])

    @classmethod
    def from_csv(cls, path):
        tr = cls()
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if tuple(header) != TRACE_COLUMNS:
                raise ConfigurationError(f"unexpected trace header {header}")
            for r in rd:
                tr.rows.append(tuple(float(v) for v in r))
        return tr


@dataclass
class FlowState:
    curve: object
    params: object
    t: float
    step: int
    dt: float
    energy: float
    terms: np.ndarray
    grad: np.ndarray
    grad_norm: float
    converged: bool = False
    path_length: float = 0.0


class _Engine:
    """Caches the inner product and quadrature shared by every step."""

    def __init__(self, params, N):
        self.params = params
        self.inner = SpectralInnerProduct(params.s, N)
        self.quad = energy_quadrature(N, params)

    def terms(self, curve):
        g = pair_geometry(curve, self.params, self.quad)
        return g.kernel * np.einsum("jic,jic->ji", g.normal, g.normal)

    def gradient(self, curve):
        ctx = FormContext(curve, self.params, self.quad)
        g = constrained_gradient(curve, self.params, self.inner, ctx=ctx)
        return g, self.inner.norm(g)


def _monitors(curve):
    return {
        "distortion": distortion(curve),
        "min_separation": min_segment_separation(curve),
        "length_residual": abs(curve.length() - 1.0),
    }


def init_state(curve, params, config=None, engine=None):
    config = config or FlowConfig()
    engine = engine or _Engine(params, curve.n_nodes)
    terms = engine.terms(curve)
    g, gn = engine.gradient(curve)
    return FlowState(curve, params, 0.0, 0, config.dt_init, float(np.sum(terms)), terms, g, gn,
                     converged=gn < config.grad_tol)


def flow_step(state, config, engine=None, trace=None):
    """One Armijo-controlled Euler step followed by retraction."""
    engine = engine or _Engine(state.params, state.curve.n_nodes)
    if state.grad_norm < config.grad_tol:
        state.converged = True
        return state
    dt = state.dt
    g2 = state.grad_norm ** 2
    while True:
        if dt < config.dt_min:
            raise StagnationError(f"no admissible step above dt_min={config.dt_min:g} at t={state.t:.4g}")
        try:
            trial = DiscreteCurve(state.curve.nodes - dt * state.grad)
            if (state.step + 1) % config.retract_every == 0:
                trial = retract_to_arclength(trial)
            check_injective(trial, config.separation_floor)
            terms = engine.terms(trial)
        except SelfIntersectionError as exc:
            log.debug("trial step dt=%.3g rejected: %s", dt, exc)
            dt *= 0.5
            continue
        dE = float(np.sum(terms - state.terms))
        if dE <= -config.armijo_c * dt * g2:
            break
        dt *= 0.5
    g, gn = engine.gradient(trial)
    state = FlowState(trial, state.params, state.t + dt, state.step + 1, min(dt * config.grow, config.dt_max),
                      state.energy + dE, terms, g, gn, converged=gn < config.grad_tol,
                      path_length=state.path_length + dt * math.sqrt(g2))
    if trace is not None:
        mon = _monitors(trial) if state.step % config.monitor_every == 0 else {
            "distortion": np.nan, "min_separation": np.nan, "length_residual": abs(trial.length() - 1.0)}
        trace.append(t=state.t, energy=state.energy, grad_norm_Hs=gn, step_dt=dt, **mon)
    return state


@dataclass
class FlowResult:
    curve: object
    trace: FlowTrace
    reason: str
    state: FlowState
    direct_energy: float
    lagrange_multiplier: float = float("nan")
    lambda_residual: float = float("nan")


def run_flow(initial, params, config=None, callback=None):
    """Integrate from ``initial`` (retracted first) until grad_tol, max_steps or stagnation.

    Returns a FlowResult; a StagnationError is caught and reported as the
    termination reason, any other error propagates.
    """
    config = config or FlowConfig()
    curve = retract_to_arclength(initial)
    engine = _Engine(params, curve.n_nodes)
    state = init_state(curve, params, config, engine)
    trace = FlowTrace()
    trace.append(t=0.0, energy=state.energy, grad_norm_Hs=state.grad_norm, step_dt=0.0, **_monitors(curve))
    reason = "max_steps"
    try:
        while state.step < config.max_steps:
            if state.grad_norm < config.grad_tol:
                reason = "grad_tol"
                break
            state = flow_step(state, config, engine, trace)
            if callback is not None:
                callback(state, trace)
        else:
            if state.grad_norm < config.grad_tol:
                reason = "grad_tol"
    except StagnationError as exc:
        log.warning("flow stagnated: %s", exc)
        reason = "stagnation"
    direct = float(np.sum(engine.terms(state.curve)))
    res = FlowResult(state.curve, trace, reason, state, direct)
    if reason == "grad_tol":
        lam, resid = lagrange_multiplier(state.curve, params, quad=engine.quad, inner=engine.inner,
                                         return_residual=True)
        res.lagrange_multiplier, res.lambda_residual = lam, resid
    log.info("flow finished: %s after %d steps, energy %.12g, |g| %.3e", reason, state.step,
             state.energy, state.grad_norm)
    return res


# --- rate analysis ---------------------------------------------------------------

def rate_envelope(theta, Z, E0, t):
    """Convergence-rate envelope: exponential for theta = 1/2, power law for 1/2 < theta < 1."""
    theta, Z, E0 = float(theta), float(Z), float(E0)
    if not (0.5 <= theta < 1.0) or Z <= 0 or E0 < 0:
        raise ParameterError("need theta in [1/2, 1), Z > 0 and E0 >= 0")
    t = np.asarray(t, dtype=float)
    if theta == 0.5:
        out = 2.0 / Z * math.sqrt(E0) * np.exp(-Z * Z * t / 2.0)
    else:
        base = Z * Z * (2 * theta - 1) * t + E0 ** (1 - 2 * theta)
        out = base ** (-(1 - theta) / (2 * theta - 1)) / (Z * (1 - theta))
    return out if out.ndim else float(out)


def synthetic_trace(theta, Z=1.0, E0=1.0, E_inf=0.0, n_rows=400, decades=10.0):
    """Exact solution of dE/dt = -g^2 with g = Z (E - E_inf)^theta.

    Rows are spaced so that E - E_inf spans ``decades`` orders of magnitude
    uniformly in log scale.
    """
    e_end = E0 * 10.0 ** (-decades)
    if theta == 0.5:
        t_end = math.log(E0 / e_end) / Z ** 2
        t = np.linspace(0.0, t_end, n_rows)
        e = E0 * np.exp(-Z * Z * t)
    else:
        a = 1 - 2 * theta
        t_of = lambda e: (e ** a - E0 ** a) / (Z * Z * (2 * theta - 1))
        e = np.geomspace(E0, e_end, n_rows)
        t = t_of(e)
        e = (E0 ** a + Z * Z * (2 * theta - 1) * t) ** (1 / a)
    g = Z * e ** theta
    return FlowTrace.from_arrays(t, E_inf + e, g)


@dataclass
class LSFit:
    theta: float
    Z: float
    r2: float
    E_inf: float
    n_rows: int

    def __iter__(self):
        return iter((self.theta, self.Z, self.r2))


def residual_gap_estimate(E, window=10):
    """Size of the energy still to be dissipated after the last row.

    For geometric decay with decrement ratio q the remaining gap is
    last_decrement * q / (1 - q); q is the median ratio over the last rows.
    """
    dec = -np.diff(E[-(window + 1):])
    dec = dec[dec > 0]
    if len(dec) < 2:
        return float(dec[-1]) if len(dec) else 0.0
    q = float(np.clip(np.median(dec[1:] / dec[:-1]), 0.0, 0.999))
    return float(max(dec[-1], dec[-1] * q / (1.0 - q)))


def ls_fit(trace, tail_fraction=0.5, min_rows=50, noise_floor=None, margin=100.0):
    """Fit log g = log Z + theta log(E - E_inf) on the trailing part of a trace.

    E_inf is the final energy minus half the last decrement.  Rows whose gap
    E - E_inf is within ``margin`` times the remaining-gap estimate (the
    uncertainty of E_inf) or 10x the rounding floor are excluded.
    """
    E = trace.column("energy")
    g = trace.column("grad_norm_Hs")
    if len(E) < 3:
        raise InsufficientSignalError("trace too short")
    last_dec = max(E[-2] - E[-1], 0.0)
    E_inf = E[-1] - 0.5 * last_dec
    if noise_floor is None:
        noise_floor = 64 * np.finfo(float).eps * max(abs(E_inf), np.finfo(float).tiny)
    uncertainty = residual_gap_estimate(E)
    start = int(len(E) * (1.0 - tail_fraction))
    gap = E[start:] - E_inf
    gg = g[start:]
    keep = (gap > 10 * noise_floor) & (gap > margin * uncertainty) & (gg > 0)
    if keep.sum() < min_rows:
        raise InsufficientSignalError(f"only {int(keep.sum())} usable tail rows (need {min_rows})")
    x = np.log(gap[keep])
    y = np.log(gg[keep])
    A = np.vstack([x, np.ones_like(x)]).T
    (theta, logZ), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([theta, logZ])
    ss_res = np.sum((y - pred) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if not (0.0 < theta < 1.05):
        raise InsufficientSignalError(f"fitted exponent {theta:.3f} outside (0, 1.05)")
    return LSFit(float(theta), float(math.exp(logZ)), float(r2), float(E_inf), int(keep.sum()))


def h_function(trace, theta, E_inf):
    """H(t) = (E - E_inf)^(1 - theta) along the trace."""
    gap = np.maximum(trace.column("energy") - E_inf, 0.0)
    return gap ** (1.0 - theta)
