import numpy as np
import pytest
from numpy.testing import assert_allclose

from s2uniform.metric import ConformalMetric, rotation_matrix
from s2uniform.sht import ScalarField, real_ylm
from s2uniform.stability import (
    EXACT,
    Embedding,
    SpectralClusterError,
    build_embedding,
    eigenspace_projection,
    first_embedding,
    fit_rigid_motion,
    galerkin_spectrum,
    gram_matrix,
    gram_schmidt,
    procrustes_spot_check,
    project_first_eigenspace,
    pushed_round_metric,
    random_orthogonal,
    stability_experiment,
)

Q = (np.pi / 2, 0.0)


def _coords(grid):
    return [ScalarField(grid, c) for c in grid.normal]


def _w(grid, amp):
    return ScalarField(grid, amp * (real_ylm(grid, 2, 0) + 0.5 * real_ylm(grid, 3, 2)))


def test_round_spectrum(grid8):
    spec = galerkin_spectrum(ConformalMetric.round(grid8), 16)
    assert_allclose(spec.eigenvalues, [0] + [2] * 3 + [6] * 5 + [12] * 7, atol=1e-12)
    assert spec.weak_residual < 1e-12
    assert spec.strong_residual(2) < 1e-10


def test_constant_rescaling_scales_spectrum(grid8):
    c = 0.3
    spec = galerkin_spectrum(ConformalMetric(ScalarField.constant(grid8, c)), 9)
    assert_allclose(spec.eigenvalues[1:4], 2 * np.exp(-2 * c), rtol=1e-12)


def test_pushed_round_metric_keeps_first_eigenvalue(grid16):
    f = ScalarField(grid16, real_ylm(grid16, 2, 1))
    spec = galerkin_spectrum(pushed_round_metric(grid16, f, 0.02), 9)
    assert_allclose(spec.eigenvalues[1:4], 2.0, atol=1e-8)


def test_perturbed_cluster_and_projection(grid12):
    g = ConformalMetric(_w(grid12, 0.05))
    spec = galerkin_spectrum(g, 9)
    cluster = spec.first_cluster()
    assert len(cluster) == 3
    assert np.all(np.abs(spec.eigenvalues[1:4] - 2) < 0.5)
    assert_allclose(gram_matrix(cluster, g), np.eye(3), atol=1e-12)
    # projecting an eigenfunction onto its own eigenspace changes nothing
    for f in cluster:
        assert_allclose(project_first_eigenspace(f, spec).values, f.values, atol=1e-12)


def test_cluster_errors(grid8):
    rnd = ConformalMetric.round(grid8)
    with pytest.raises(SpectralClusterError, match="at least"):
        galerkin_spectrum(rnd, 4).first_cluster()
    with pytest.raises(SpectralClusterError, match="not separated"):
        galerkin_spectrum(rnd, 9).cluster(min_gap=3.0)
    with pytest.raises(ValueError):
        galerkin_spectrum(ConformalMetric.round(grid8), 10**6)


def test_gram_schmidt(grid8):
    rnd = ConformalMetric.round(grid8)
    scale = np.sqrt(3 / (4 * np.pi))
    ortho = [c * scale for c in _coords(grid8)]
    res = gram_schmidt(ortho, rnd)
    assert res.orthonormality_defect < 1e-13 and res.deviation < 1e-13
    mixed = [ortho[0], ortho[1] + 0.1 * ortho[0], ortho[2] - 0.05 * ortho[1]]
    res = gram_schmidt(mixed, rnd)
    assert_allclose(gram_matrix(res.basis, rnd), np.eye(3), atol=1e-13)
    # the first vector is only normalized
    assert_allclose(res.basis[0].values, ortho[0].values, atol=1e-13)
    with pytest.raises(ValueError, match="singular"):
        gram_schmidt([ortho[0], ortho[0], ortho[1]], rnd)


def test_round_embedding_is_isometric(grid12):
    rnd = ConformalMetric.round(grid12)
    phi, _ = first_embedding(rnd)
    assert phi.radius_defect() < 1e-12
    assert phi.isometry_defect(rnd) < 1e-11
    assert_allclose(phi.image_area(), 4 * np.pi, rtol=1e-12)
    with pytest.raises(ValueError):
        build_embedding(_coords(grid12)[:2])


def test_procrustes_recovers_rotation_and_is_equivariant(grid8, rng):
    rnd = ConformalMetric.round(grid8)
    phi = Embedding(grid8, grid8.normal.copy())
    o = random_orthogonal(1, rng)[0]
    target = Embedding(grid8, np.einsum("ab,b...->a...", o, phi.values))
    fit = fit_rigid_motion(phi, target, rnd)
    assert_allclose(fit.motion.matrix, o, atol=1e-12)
    assert fit.residual_l2 < 1e-12 and fit.residual_sup < 1e-12
    # composing the source with R turns the optimal motion into O R^T
    r = rotation_matrix([0.3, -0.2, 1.0], 0.4)
    fit_r = fit_rigid_motion(phi.compose(r), target, rnd)
    assert_allclose(fit_r.motion.matrix, o @ r.T, atol=1e-11)
    assert fit.motion.orthogonality_defect() < 1e-13


def test_random_orthogonal_is_orthogonal_with_both_signs(rng):
    o = random_orthogonal(2000, rng)
    assert_allclose(np.einsum("nba,nbc->nac", o, o), np.broadcast_to(np.eye(3), o.shape), atol=1e-12)
    dets = np.sign(np.linalg.det(o))
    assert 0.4 < np.mean(dets > 0) < 0.6


def test_spot_check_never_beats_fit(grid8):
    rnd = ConformalMetric.round(grid8)
    phi = Embedding(grid8, grid8.normal.copy())
    target = Embedding(grid8, (grid8.normal + 0.05 * grid8.normal**2))
    fit = fit_rigid_motion(phi, target, rnd)
    check = procrustes_spot_check(fit, samples=20000, seed=3)
    assert check["beaten"] == 0
    assert check["best_random"] >= check["fit"] - 1e-12
    assert_allclose(check["fit"], fit.residual_l2**2, rtol=1e-9, atol=1e-14)


def test_projection_between_close_metrics(grid12):
    g1 = ConformalMetric(_w(grid12, 0.02))
    g2 = ConformalMetric(_w(grid12, 0.021))
    rep = eigenspace_projection(g1, g2)
    assert rep.delta > 0
    assert rep.projection_ratio < 1e3 and rep.orthonormality_ratio < 1e3
    assert rep.orthogonality_residual < 1e-10


def test_identical_metrics_are_exact(grid12):
    g = ConformalMetric(_w(grid12, 0.03))
    rep = stability_experiment(g, g, Q)
    assert rep.delta == 0.0
    assert all(v == EXACT for v in rep.ratios.values())
    assert rep.passed
    assert rep.to_json()["pass"] is True


def test_stability_scales_with_distance(grid12):
    g1 = ConformalMetric(_w(grid12, 0.03))
    bump = ScalarField(grid12, real_ylm(grid12, 4, -1))
    reps = [stability_experiment(g1, ConformalMetric(g1.log_omega + t * bump), Q) for t in (0.004, 0.002)]
    for key in reps[0].ratios:
        if getattr(reps[0], key) < 1e-9:
            continue  # vanishes to roundoff, e.g. when both round metrics agree
        assert_allclose(reps[0].ratios[key], reps[1].ratios[key], rtol=0.05)
    with pytest.raises(ValueError, match="too far"):
        stability_experiment(g1, ConformalMetric(g1.log_omega + 0.5 * bump), Q)
