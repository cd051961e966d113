import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpflow import spectral
from tpflow.errors import DimensionError, ParameterError
from tpflow.sobolev import (SobolevOrder, SpectralInnerProduct, gagliardo_seminorm_sq, phi_bound_ratio,
                            phi_norm_sq, phi_operator, phi_quadrature)

from conftest import fourier_field


def test_order_validation():
    with pytest.raises(ParameterError):
        SobolevOrder(1.5)
    o = SobolevOrder(1.75)
    assert o.p == 4.5 and o.sigma == 0.75 and o.eps == 0.125


def test_inner_product_on_single_mode():
    N, s = 32, 1.7
    ip = SpectralInnerProduct(s, N)
    x = np.arange(N) / N
    h = np.stack([np.cos(2 * np.pi * 3 * x), np.zeros(N)], axis=1)
    # cos has two Fourier coefficients of size 1/2
    assert abs(ip.inner(h, h) - 0.5 * (1 + (6 * np.pi) ** (2 * s))) < 1e-9 * ip.inner(h, h)
    one = np.ones((N, 2))
    assert abs(ip.inner(one, one) - 2.0) < 1e-13


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.55, 1.95))
def test_inner_product_properties(seed, s):
    N = 32
    rng = np.random.default_rng(seed)
    ip = SpectralInnerProduct(s, N)
    h, k = fourier_field(N, 2, rng, 8), fourier_field(N, 2, rng, 8)
    assert abs(ip.inner(h, k) - ip.inner(k, h)) <= 1e-10 * ip.norm(h) * ip.norm(k)
    assert ip.inner(h, h) > 0
    A = ip.gram_matrix(2)
    assert abs(h.ravel() @ A @ k.ravel() - ip.inner(h, k)) <= 1e-9 * ip.norm(h) * ip.norm(k)
    # riesz inverts apply
    assert np.allclose(ip.riesz(ip.apply(h)), h, atol=1e-10 * np.max(np.abs(h)))
    f = rng.standard_normal((N, 2))
    g = ip.riesz(f)
    assert abs(ip.inner(g, k) - np.mean(np.sum(f * k, axis=1))) < 1e-10 * max(1.0, abs(ip.inner(g, k)))


def test_inner_product_shape_errors():
    ip = SpectralInnerProduct(1.75, 16)
    with pytest.raises(DimensionError):
        ip.inner(np.zeros((8, 2)), np.zeros((8, 2)))
    with pytest.raises(DimensionError):
        ip.inner(np.zeros((16, 2)), np.zeros((16, 3)))


def test_gagliardo_converges_under_refinement():
    sigma = 0.75
    vals = []
    for N in (256, 1024):
        x = np.arange(N) / N
        k = np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x)], axis=1)
        vals.append(gagliardo_seminorm_sq(sigma, k))
    assert abs(vals[0] - vals[1]) < 1e-4 * vals[1]


def test_gagliardo_vanishes_on_constants():
    assert gagliardo_seminorm_sq(0.6, np.ones((32, 2))) == 0.0
    with pytest.raises(ParameterError):
        gagliardo_seminorm_sq(1.0, np.ones((32, 2)))


def test_phi_operator_on_linear_pieces():
    # for k = cos(2 pi x) the inner integral is analytic up to the piecewise-linear error
    N, s = 512, 1.75
    quad = phi_quadrature(N, s)
    x = np.arange(N) / N
    k = np.stack([np.cos(2 * np.pi * x), np.zeros(N)], axis=1)
    out = phi_operator(k, quad)
    j = int(np.argmin(np.abs(quad.w - 0.25)))
    w = quad.w[j]
    exact = (np.cos(2 * np.pi * x) * w - (np.sin(2 * np.pi * (x + w)) - np.sin(2 * np.pi * x)) / (2 * np.pi))
    assert np.max(np.abs(out[j, :, 0] * abs(w) ** (s + 0.5) - exact)) < 1e-5


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1.6, 1.75, 1.9]))
def test_phi_bound_holds_on_random_fields(seed, s):
    N = 128
    rng = np.random.default_rng(seed)
    k = spectral.spectral_derivative(fourier_field(N, 2, rng, int(rng.integers(1, 8))))
    assert phi_bound_ratio(k, s) * 2 * s <= 1.05


def test_phi_norm_is_quadratic():
    N, s = 64, 1.8
    k = spectral.spectral_derivative(fourier_field(N, 2, np.random.default_rng(3)))
    assert abs(phi_norm_sq(3 * k, s) - 9 * phi_norm_sq(k, s)) < 1e-12 * phi_norm_sq(9 * k, s)
