import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.special import sph_harm_y

from s2uniform.sht import (
    ScalarField,
    analyze,
    build_grid,
    cartesian_points,
    coeffs_from_json,
    coeffs_to_json,
    conformal_killing_cart,
    cov_deriv,
    div_cart,
    grad_cart,
    hessian_cart,
    laplacian_round,
    real_ylm,
    star_cart,
    synthesize,
)
from s2uniform.sht.calculus import gradient_at, l2_inner_cart
from s2uniform.sht.transform import evaluate, legendre, spherical_angles, ylm


def test_grid_weights_integrate_area(grid8):
    assert_allclose(grid8.weights.sum(), 4 * np.pi, rtol=1e-14)
    assert grid8.shape == (grid8.lmax + 1, 2 * grid8.lmax + 2)


def test_frame_is_orthonormal_and_tangent(grid8):
    e1, e2, n = grid8.e_theta, grid8.e_phi, grid8.normal
    for a, b, want in [(e1, e1, 1), (e2, e2, 1), (e1, e2, 0), (e1, n, 0), (e2, n, 0), (n, n, 1)]:
        assert_allclose(np.sum(a * b, axis=0), want, atol=1e-15)


def test_ylm_matches_scipy(grid8):
    # scipy.special.sph_harm_y uses the same phase and normalization
    for l, m in [(0, 0), (2, 1), (3, -2), (5, 5)]:
        want = sph_harm_y(l, m, grid8.theta[:, None], grid8.phi[None, :])
        assert_allclose(ylm(grid8, l, m), want, atol=1e-13)


def test_legendre_derivative_matches_finite_difference():
    # the derivative is taken in colatitude
    theta = np.linspace(0.2, 2.9, 7)
    h = 1e-6
    _, dp = legendre(6, np.cos(theta), derivative=True)
    fd = (legendre(6, np.cos(theta + h)) - legendre(6, np.cos(theta - h))) / (2 * h)
    assert_allclose(dp, fd, atol=1e-7)


def test_real_harmonics_are_orthonormal(grid8):
    vals = np.stack([real_ylm(grid8, l, m) for l in range(grid8.L + 1) for m in range(-l, l + 1)])
    gram = np.einsum("ixy,jxy,xy->ij", vals, vals, grid8.weights)
    assert_allclose(gram, np.eye(len(vals)), atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_analyze_synthesize_roundtrip(seed):
    grid = build_grid(6)
    rng = np.random.default_rng(seed)
    coeffs = np.zeros((grid.L + 1, 2 * grid.L + 1), complex)
    for l in range(grid.L + 1):
        coeffs[l, grid.L] = rng.standard_normal()
        for m in range(1, l + 1):
            c = rng.standard_normal() + 1j * rng.standard_normal()
            coeffs[l, grid.L + m] = c
            coeffs[l, grid.L - m] = (-1) ** m * np.conj(c)
    back = analyze(synthesize(coeffs, grid), grid)
    assert_allclose(back, coeffs, atol=1e-13)


def test_evaluate_off_grid_matches_closed_form(grid8):
    f = ScalarField(grid8, real_ylm(grid8, 2, 0))
    theta = np.array([0.1, 1.0, 2.5])
    want = np.sqrt(5 / (16 * np.pi)) * (3 * np.cos(theta) ** 2 - 1)
    assert_allclose(f(theta, np.zeros(3)), want, atol=1e-14)


def test_spherical_angles_invert_cartesian_points():
    theta, phi = np.array([0.3, 1.7]), np.array([-2.0, 0.4])
    t, p = spherical_angles(cartesian_points(theta, phi))
    assert_allclose(t, theta, atol=1e-15)
    assert_allclose(np.mod(p - phi, 2 * np.pi), 0.0, atol=1e-15)


def test_json_roundtrip(grid8, rng):
    f = ScalarField(grid8, sum(rng.standard_normal() * real_ylm(grid8, l, m)
                               for l in range(4) for m in range(-l, l + 1)))
    entries = coeffs_to_json(f.coeffs)
    assert_allclose(coeffs_from_json(entries, grid8.L), f.coeffs, atol=1e-15)


def test_json_rejects_unknown_fields():
    with pytest.raises(ValueError, match="unknown"):
        coeffs_from_json([{"l": 0, "m": 0, "re": 1.0, "extra": 2}], 3)
    with pytest.raises(ValueError, match="outside"):
        coeffs_from_json([{"l": 5, "m": 0, "re": 1.0}], 3)


def test_gradient_of_linear_function_is_projection(grid8):
    # grad of x . a on the unit sphere is the tangential part of a
    a = np.array([0.3, -1.2, 0.7])
    f = ScalarField(grid8, np.einsum("a,a...->...", a, grid8.normal))
    want = np.einsum("ab...,b->a...", grid8.projector, a)
    assert_allclose(grad_cart(f), want, atol=1e-13)
    q = cartesian_points(0.4, 2.0)
    assert_allclose(gradient_at(f, 0.4, 2.0), a - np.dot(a, q) * q, atol=1e-13)


@pytest.mark.parametrize("l", [1, 2, 5])
def test_laplacian_eigenvalue(grid8, l):
    f = ScalarField(grid8, real_ylm(grid8, l, 1))
    assert_allclose(laplacian_round(f).values, -l * (l + 1) * f.values, atol=1e-12)


def test_hessian_trace_is_laplacian(grid8):
    f = ScalarField(grid8, real_ylm(grid8, 3, -1) + 0.5 * real_ylm(grid8, 2, 2))
    tr = np.einsum("aa...->...", hessian_cart(f))
    assert_allclose(tr, laplacian_round(f).values, atol=1e-12)


def test_hessian_of_degree_one_is_minus_f_times_metric(grid8):
    f = ScalarField(grid8, real_ylm(grid8, 1, 0))
    assert_allclose(hessian_cart(f), -f.values * grid8.projector, atol=1e-12)


def test_killing_fields_are_annihilated(grid8):
    # both d Y_1 (conformal) and *d Y_1 (isometric) are conformal Killing
    for m in (-1, 0, 1):
        w = grad_cart(ScalarField(grid8, real_ylm(grid8, 1, m)))
        assert np.abs(conformal_killing_cart(w, grid8)).max() < 1e-12
        assert np.abs(conformal_killing_cart(star_cart(w, grid8), grid8)).max() < 1e-12


def test_divergence_of_conformal_killing_on_dy2(grid8):
    w = grad_cart(ScalarField(grid8, real_ylm(grid8, 2, 0)))
    assert_allclose(div_cart(conformal_killing_cart(w, grid8), grid8), -2.0 * w, atol=1e-11)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_conformal_killing_is_minus_adjoint_of_divergence(seed):
    grid = build_grid(6)
    rng = np.random.default_rng(seed)
    w = sum(rng.standard_normal() * grad_cart(ScalarField(grid, real_ylm(grid, l, m)))
            for l in range(1, 4) for m in range(-l, l + 1))
    v = sum(rng.standard_normal() * grad_cart(ScalarField(grid, real_ylm(grid, l, m)))
            for l in range(2, 4) for m in range(-l, l + 1))
    t = conformal_killing_cart(star_cart(v, grid) + v, grid)
    lhs = l2_inner_cart(t, conformal_killing_cart(w, grid), grid)
    rhs = -l2_inner_cart(div_cart(t, grid), w, grid)
    assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_cov_deriv_of_metric_vanishes(grid8):
    assert np.abs(cov_deriv(grid8.projector, grid8)).max() < 1e-12


def test_star_is_a_rotation(grid8):
    w = grad_cart(ScalarField(grid8, real_ylm(grid8, 3, 1)))
    sw = star_cart(w, grid8)
    assert_allclose(np.sum(w * sw, axis=0), 0.0, atol=1e-14)
    assert_allclose(star_cart(sw, grid8), -w, atol=1e-13)


def test_scalar_field_arithmetic_and_grid_mismatch(grid8, grid12):
    f = ScalarField(grid8, real_ylm(grid8, 2, 0))
    assert_allclose((f * 2 - f).values, f.values)
    assert_allclose((1.0 - f).values, 1.0 - f.values)
    with pytest.raises(ValueError):
        f + ScalarField.constant(grid12, 1.0)


def test_evaluate_accepts_leading_axes(grid8):
    f = ScalarField(grid8, real_ylm(grid8, 2, 1))
    stacked = np.stack([f.coeffs, 2 * f.coeffs])
    out = evaluate(stacked, np.array([0.5, 1.0]), np.array([0.1, 0.2]))
    assert out.shape == (2, 2)
    assert_allclose(out[1], 2 * out[0], atol=1e-15)
