import logging
import time

import numpy as np
import pytest

from tpflow import curve as cv
from tpflow.energy import EnergyParams
from tpflow.flow import FlowConfig, run_flow


@pytest.fixture(scope="session")
def p45():
    return EnergyParams.from_p(4.5)


@pytest.fixture(scope="session")
def converged_flow(p45):
    """Seeded 3%-perturbed circle flowed to grad_tol at N = 256 (about a minute)."""
    init = cv.perturbed_circle(256, modes=(2, 3, 4, 5), amplitude=0.03, seed=0)
    t0 = time.perf_counter()
    res = run_flow(init, p45, FlowConfig(grad_tol=1e-6, max_steps=10000))
    res.wall_time = time.perf_counter() - t0
    res.initial = cv.retract_to_arclength(init)
    return res


def fourier_field(N, n, rng, max_mode=4):
    x = np.arange(N) / N
    h = np.zeros((N, n))
    for m in range(max_mode + 1):
        h += np.outer(np.cos(2 * np.pi * m * x), rng.standard_normal(n))
        h += np.outer(np.sin(2 * np.pi * m * x), rng.standard_normal(n))
    return h


def circle_tangent_field(curve, m, phase=0.0):
    """Tangent field on the unit-length circle with h(0) = 0.

    h = -(b'/2 pi) N_out + b T with b = 1 - cos(2 pi m x + phase) - (1 - cos phase)
    satisfies <T, h'> = 0 exactly.
    """
    N = curve.n_nodes
    x = np.arange(N) / N
    b = np.cos(phase) - np.cos(2 * np.pi * m * x + phase)
    db = 2 * np.pi * m * np.sin(2 * np.pi * m * x + phase)
    T = curve.unit_tangent
    n_out = np.stack([T[:, 1], -T[:, 0]], axis=1)
    return -(db / (2 * np.pi))[:, None] * n_out + b[:, None] * T


def pytest_configure(config):
    logging.getLogger("tpflow").setLevel(logging.WARNING)
