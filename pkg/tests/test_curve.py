import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpflow import curve as cv
from tpflow import spectral
from tpflow.errors import ConfigurationError, DegenerateCurveError, DimensionError, SelfIntersectionError
from tpflow.io import load_curve_csv, render_svg, save_curve_csv

from conftest import fourier_field


def trig_poly(N, m):
    x = np.arange(N) / N
    return np.sin(2 * np.pi * m * x) + 0.5 * np.cos(2 * np.pi * (m + 1) * x)


def test_spectral_derivative_exact_on_trig_polynomials():
    N = 32
    x = np.arange(N) / N
    f = trig_poly(N, 3)
    df = 2 * np.pi * 3 * np.cos(2 * np.pi * 3 * x) - 0.5 * 2 * np.pi * 4 * np.sin(2 * np.pi * 4 * x)
    assert np.max(np.abs(spectral.spectral_derivative(f) - df)) < 1e-11


def test_derivative_matrix_is_skew_and_matches_fft():
    N = 16
    D = spectral.derivative_matrix(N)
    assert np.max(np.abs(D + D.T)) < 1e-12
    f = np.random.default_rng(0).standard_normal(N)
    assert np.allclose(D @ f, spectral.spectral_derivative(f), atol=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.49, 0.49), st.sampled_from(["value", "delta", "remainder", "deriv"]))
def test_shift_operators_match_interpolant(w, kind):
    N = 16
    f = np.random.default_rng(1).standard_normal((N, 2))
    x = np.arange(N) / N
    coeffs = np.fft.rfft(f, axis=0)
    got = spectral.apply_multipliers(coeffs, spectral.shift_multipliers(N, [w], kind), N)[0]
    val = spectral.interpolate(f, x + w)
    if kind == "value":
        ref = val
    elif kind == "delta":
        ref = val - f
    elif kind == "remainder":
        ref = val - f - w * spectral.spectral_derivative(f)
    else:
        ref = spectral.interpolate_derivative(f, x + w)
    assert np.max(np.abs(got - ref)) < 1e-10 * max(1.0, np.max(np.abs(val)))
    M = spectral.operator_matrix(N, w, kind)
    assert np.allclose(M @ f, got, atol=1e-10)


def test_adjoint_is_transpose():
    N, rng = 16, np.random.default_rng(2)
    w = np.array([0.1, -0.3, 0.02])
    mult = spectral.shift_multipliers(N, w, "remainder")
    h = rng.standard_normal((N, 2))
    F = rng.standard_normal((3, N, 2))
    lhs = np.sum(spectral.apply_multipliers(np.fft.rfft(h, axis=0), mult, N) * F)
    rhs = np.sum(h * spectral.apply_adjoint(F, mult, N))
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


def test_too_few_nodes_is_a_configuration_error():
    with pytest.raises(ConfigurationError):
        cv.DiscreteCurve(np.zeros((4, 2)))


def test_curve_shape_validation():
    with pytest.raises(DimensionError):
        cv.DiscreteCurve(np.zeros((16, 1)))
    with pytest.raises(DimensionError):
        cv.DiscreteCurve(np.full((16, 2), np.nan))


def test_constant_curve_is_degenerate():
    with pytest.raises(DegenerateCurveError):
        cv.DiscreteCurve(np.ones((16, 2))).unit_tangent


def test_circle_geometry():
    c = cv.circle(64)
    assert np.allclose(c.nodes[0], 0.0)
    assert abs(c.length() - 1.0) < 1e-14
    assert np.max(np.abs(c.speed - 1.0)) < 1e-13
    # discrete polyline distortion of the round circle approaches pi/2 from below
    assert 0 < math.pi / 2 - cv.distortion(c) < 1e-3
    R = 1 / (2 * np.pi)
    assert abs(cv.tangent_point_radius(c, 0, 16) - R) < 1e-12


def test_tangent_point_radius_straight_and_coincident():
    assert cv.tangent_point_radius_from([0, 0], [1, 0], [2, 0]) == np.inf
    with pytest.raises(SelfIntersectionError):
        cv.tangent_point_radius_from([0, 0], [1, 0], [0, 0])


def test_self_intersection_detected():
    N = 64
    x = np.arange(N) / N
    # figure-eight passes through the origin twice
    eight = np.stack([np.sin(2 * np.pi * x), np.sin(4 * np.pi * x)], axis=1)
    with pytest.raises(SelfIntersectionError) as info:
        cv.check_injective(cv.DiscreteCurve(eight))
    assert info.value.pair is not None


@pytest.mark.parametrize("N", [128, 256])
def test_retraction_postconditions(N):
    c = cv.retract_to_arclength(cv.perturbed_circle(N, amplitude=0.05, seed=4))
    assert cv.speed_deviation(c) < 1e-10
    assert abs(c.length() - 1.0) < 1e-12
    assert np.allclose(c.nodes[0], 0.0)


def test_retraction_fixes_the_circle():
    c = cv.circle(64)
    r = cv.retract_to_arclength(c)
    assert np.max(np.abs(r.nodes - c.nodes)) < 1e-13


def test_retraction_of_ellipse_and_knot():
    e = cv.retract_to_arclength(cv.ellipse(256, 1.5))
    assert cv.speed_deviation(e) < 1e-10
    k = cv.retract_to_arclength(cv.torus_knot(256))
    assert k.ambient_dim == 3 and cv.speed_deviation(k) < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(-3, 3), st.floats(-3, 3))
def test_distortion_is_rigid_invariant(angle, tx, ty):
    c = cv.perturbed_circle(64, seed=1)
    Q = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    d0 = cv.distortion(c)
    d1 = cv.distortion(c.transformed(Q, [tx, ty]))
    assert abs(d0 - d1) < 1e-10 * d0
    assert abs(cv.min_segment_separation(c) - cv.min_segment_separation(c.transformed(Q, [tx, ty]))) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_retraction_is_idempotent(seed):
    c = cv.retract_to_arclength(cv.perturbed_circle(128, amplitude=0.03, seed=seed))
    c2 = cv.retract_to_arclength(c)
    assert np.max(np.abs(c2.nodes - c.nodes)) < 1e-10


def test_chord_defect_is_normal_for_gamma():
    c = cv.perturbed_circle(32, seed=2)
    L = cv.chord_defect(c, c.nodes, 3, 9)
    assert abs(np.dot(L, c.unit_tangent[3])) < 1e-14


def test_arc_derivative_divides_by_speed():
    c = cv.ellipse(32)
    h = fourier_field(32, 2, np.random.default_rng(0))
    assert np.allclose(cv.arc_derivative(c, h) * c.speed[:, None], spectral.spectral_derivative(h))


def test_curve_csv_roundtrip(tmp_path):
    c = cv.torus_knot(64)
    path = tmp_path / "knot.csv"
    save_curve_csv(c, path)
    back = load_curve_csv(path, expected_nodes=64, expected_dim=3)
    assert np.array_equal(back.nodes, c.nodes)
    with pytest.raises(DimensionError):
        load_curve_csv(path, expected_nodes=32)
    with pytest.raises(DimensionError):
        load_curve_csv(path, expected_dim=2)


def test_svg_render(tmp_path):
    path = tmp_path / "c.svg"
    render_svg(cv.circle(32), path, title="circle")
    text = path.read_text()
    assert text.startswith("<svg") and "polyline" in text
