import numpy as np
import pytest
from numpy.testing import assert_allclose

from s2uniform.metric import (
    ConformalMetric,
    PerturbedMetric,
    christoffel_difference,
    gauss_bonnet_defect,
    gauss_curvature_conformal,
    gauss_curvature_general,
    metric_distance,
    rotation_matrix,
    sobolev_norm,
)
from s2uniform.sht import ScalarField, real_ylm


def _u(grid, amp=0.1):
    return ScalarField(grid, amp * (real_ylm(grid, 2, 0) + 0.5 * real_ylm(grid, 3, 1)))


def test_round_metric_has_unit_curvature(grid8):
    m = ConformalMetric.round(grid8)
    assert_allclose(gauss_curvature_conformal(m).values, 1.0, atol=1e-14)
    assert_allclose(gauss_curvature_general(m).values, 1.0, atol=1e-12)
    assert_allclose(m.area(), 4 * np.pi, rtol=1e-14)


def test_constant_scaling(grid8):
    m = ConformalMetric(ScalarField.constant(grid8, 0.3))
    assert_allclose(gauss_curvature_conformal(m).values, np.exp(-0.6), rtol=1e-13)
    assert np.abs(m.christoffel).max() < 1e-13


def test_general_curvature_agrees_with_conformal_formula(grid16):
    m = ConformalMetric(_u(grid16))
    assert_allclose(gauss_curvature_general(m.as_perturbed()).values,
                    gauss_curvature_conformal(m).values, atol=1e-10)


def test_gauss_bonnet(grid16):
    m = ConformalMetric(_u(grid16, 0.2))
    assert abs(gauss_bonnet_defect(m, gauss_curvature_conformal(m))) < 1e-12
    h = np.einsum("xy,ab...->ab...", 0.05 * real_ylm(grid16, 2, 1), grid16.projector)
    gz = grid16.projector[:, 2]
    h = h + 0.03 * np.einsum("a...,b...->ab...", gz, gz)
    assert abs(gauss_bonnet_defect(PerturbedMetric(grid16, h))) < 1e-8


def test_metric_compatibility(grid16):
    m = ConformalMetric(_u(grid16)).as_perturbed()
    assert np.abs(m.covariant_derivative(m.G)).max() < 1e-10


def test_christoffel_difference_is_symmetric_and_linear(grid16):
    base = ConformalMetric.round(grid16)
    h = np.einsum("xy,ab...->ab...", real_ylm(grid16, 2, 1), grid16.projector)
    small = christoffel_difference(base, PerturbedMetric(grid16, 1e-4 * h)).sup()
    smaller = christoffel_difference(base, PerturbedMetric(grid16, 0.5e-4 * h))
    assert smaller.asymmetry() < 1e-14
    assert_allclose(small / smaller.sup(), 2.0, rtol=1e-3)


def test_rotation_pullback_of_conformal_metric(grid16):
    u = _u(grid16)
    rot = rotation_matrix([0.2, 1.0, -0.4], 0.7)
    pulled = ConformalMetric(u).pullback(rot)
    pts = np.einsum("ab,b...->a...", rot, grid16.normal)
    assert_allclose(pulled.log_omega.values, u.at_points(pts), atol=1e-14)
    as_tensor = ConformalMetric(u).as_perturbed().pullback(rot)
    assert_allclose(as_tensor.G, pulled.G, atol=1e-12)


def test_rotation_matrix_is_orthogonal():
    r = rotation_matrix([1.0, 2.0, 3.0], 1.1)
    assert_allclose(r.T @ r, np.eye(3), atol=1e-15)
    assert_allclose(np.linalg.det(r), 1.0)


def test_sobolev_norms_of_harmonics(grid12):
    rnd = ConformalMetric.round(grid12)
    y = ScalarField(grid12, real_ylm(grid12, 2, 0))
    assert_allclose(sobolev_norm(y, rnd, 0, 2), 1.0, rtol=1e-13)
    assert_allclose(sobolev_norm(y, rnd, 1, 2, include_zeroth=False) ** 2, 6.0, rtol=1e-13)
    # ||Hess Y||^2 = lambda^2 - lambda
    assert_allclose(sobolev_norm(y, rnd, 2, 2) ** 2, 1 + 6 + 30, rtol=1e-12)


def test_sobolev_norm_validation(grid8):
    rnd = ConformalMetric.round(grid8)
    y = ScalarField(grid8, real_ylm(grid8, 2, 0))
    with pytest.raises(ValueError):
        sobolev_norm(y, rnd, 1, p=1.0)
    with pytest.raises(ValueError):
        sobolev_norm(y, rnd, -1)
    with pytest.warns(RuntimeWarning):
        sobolev_norm(y, rnd, grid8.pad + 1)


def test_metric_distance_scales_linearly(grid16):
    base = ConformalMetric.round(grid16)
    h = np.einsum("xy,ab...->ab...", real_ylm(grid16, 3, 2), grid16.projector)
    d1 = metric_distance(base, PerturbedMetric(grid16, 0.02 * h), 2, 4)
    d2 = metric_distance(base, PerturbedMetric(grid16, 0.01 * h), 2, 4)
    assert_allclose(d1 / d2, 2.0, rtol=1e-12)
    assert metric_distance(base, base) == 0.0


def test_degenerate_metric_rejected(grid8):
    with pytest.raises(ValueError, match="positive definite"):
        PerturbedMetric(grid8, -1.5 * grid8.projector)
