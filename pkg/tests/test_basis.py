import numpy as np
import pytest
from numpy.testing import assert_allclose

from s2uniform.sht.basis import (
    basis_element,
    basis_norms,
    eigenvalue,
    elliptic_constant,
    real_harmonic_matrix,
    scaling_ratio,
    sobolev_inner,
)

# Squared round norms of the l = 2 conformal Killing tensor: int |nabla^k T|^2 for
# k = 0, 1, 2, frozen from a symbolic computation in (theta, phi) coordinates.
LDY2_DERIVATIVE_NORMS = (12.0, 24.0, 120.0)


@pytest.mark.parametrize("l", [1, 2, 3, 6])
def test_one_form_norms_closed_form(grid12, l):
    lam = eigenvalue(l)
    # ||dY||^2 = lambda and, by Bochner on the unit sphere, ||Hess Y||^2 = lambda^2 - lambda
    assert_allclose(basis_norms(grid12, l, 0, "dY"), lam, rtol=1e-12)
    assert_allclose(basis_norms(grid12, l, 1, "dY"), lam**2, rtol=1e-12)
    assert_allclose(basis_norms(grid12, l, 1, "*dY"), lam**2, rtol=1e-12)


@pytest.mark.parametrize("l", [2, 3, 5])
def test_conformal_killing_norm_closed_form(grid12, l):
    lam = eigenvalue(l)
    assert_allclose(basis_norms(grid12, l, 0, "LdY"), 0.5 * lam * (lam - 2), rtol=1e-12)
    assert_allclose(basis_norms(grid12, l, 0, "L*dY"), 0.5 * lam * (lam - 2), rtol=1e-12)


def test_conformal_killing_higher_norms_match_symbolic_values(grid12):
    got = [basis_norms(grid12, 2, n, "LdY") for n in range(3)]
    assert_allclose(np.diff([0.0] + got), LDY2_DERIVATIVE_NORMS, rtol=1e-11)


def test_negative_order_is_dual_norm(grid12):
    n0 = basis_norms(grid12, 3, 0, "dY")
    n1 = basis_norms(grid12, 3, 1, "dY")
    assert_allclose(basis_norms(grid12, 3, -1, "dY"), n0**2 / n1, rtol=1e-13)
    # for dY the dual norm is exactly lambda^0
    assert_allclose(scaling_ratio(grid12, 3, -1, "dY"), 1.0, rtol=1e-12)


def test_families_are_orthogonal(grid8):
    a = basis_element(grid8, 3, 1, "dY")
    b = basis_element(grid8, 3, 1, "*dY")
    c = basis_element(grid8, 4, 1, "dY")
    for n in (0, 1, 2):
        assert abs(sobolev_inner(a, b, grid8, n)) < 1e-10
        assert abs(sobolev_inner(a, c, grid8, n)) < 1e-10
    t1 = basis_element(grid8, 3, 0, "LdY")
    t2 = basis_element(grid8, 3, 0, "L*dY")
    assert abs(sobolev_inner(t1, t2, grid8, 1)) < 1e-9


def test_elliptic_constants(grid12):
    # ||w||_1^2 / ||L w||^2 = 2 lambda / (lambda - 2), largest at l = 2; ||L w||^2 / ||w||^2 = (lambda - 2) / 2
    c, s = elliptic_constant(grid12)
    assert_allclose(c, np.sqrt(3.0), rtol=1e-12)
    assert_allclose(s, np.sqrt(2.0), rtol=1e-12)


def test_basis_element_errors(grid8):
    with pytest.raises(ValueError, match="unknown"):
        basis_element(grid8, 2, 0, "dX")
    with pytest.raises(ValueError, match="vanishes"):
        basis_element(grid8, 1, 0, "LdY")
    with pytest.raises(ValueError, match="vanishes"):
        basis_element(grid8, 1, 0, "L*dY")
    with pytest.raises(ValueError):
        basis_element(grid8, grid8.L + 1, 0, "dY")
    with pytest.raises(ValueError):
        basis_element(grid8, 0, 0, "dY")


def test_real_harmonic_matrix_shape(grid8):
    vals, deg = real_harmonic_matrix(grid8)
    assert vals.shape == ((grid8.L + 1) ** 2,) + grid8.shape
    assert deg[0] == 0 and deg[-1] == grid8.L
