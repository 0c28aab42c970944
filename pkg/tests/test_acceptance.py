"""Acceptance criteria at the stated tolerances.

Each test records its outcome through the ``acceptance`` fixture, and the
terminal summary prints one PASS/FAIL line per criterion.  Sub-checks that
cannot be met in floating point are strict xfails, so they still report
FAIL in the summary and would flag an unexpected pass.
"""

import numpy as np
import pytest

from s2uniform.experiments import (
    ExperimentConfig,
    basis_scaling_table,
    manufactured_defect,
    round_spectrum_defect,
    run_suite,
    without_timing,
)
from s2uniform.io import dumps
from s2uniform.lightcone import divergence_identity_residual
from s2uniform.sht import ScalarField, build_grid, real_ylm


@pytest.fixture(scope="module")
def suite():
    return run_suite(ExperimentConfig())


def _value(report, name):
    (rec,) = [r for r in report["records"] if r["name"] == name]
    return rec["value"]


def _check(acceptance, number, title, report, name, tol):
    v = _value(report, name)
    return acceptance(number, title, v <= tol, f"{name} = {v:.3g} (tol {tol:g})")


def _divergence(L):
    grid = build_grid(L)
    return divergence_identity_residual(ScalarField(grid, 0.05 * real_ylm(grid, 2, 0))).sup()


def test_01_divergence_identity_residual(acceptance):
    r = _divergence(32)
    assert acceptance(1, "divergence identity", r < 1e-8, f"residual at L=32 = {r:.2e} (tol 1e-8)")


@pytest.mark.xfail(strict=True, reason="residual is already at roundoff for L = 12, see decisions ledger")
def test_01_divergence_identity_refinement(acceptance):
    r12, r24 = _divergence(12), _divergence(24)
    ok = r12 / r24 >= 1e3
    acceptance(1, "divergence identity", ok,
               f"L12->L24 decrease = {r12 / r24:.3g} (need >= 1e3; {r12:.1e} -> {r24:.1e})")
    assert ok


def test_02_lightcone_equivalence(suite, acceptance):
    title = "lightcone equivalence"
    oks = [_check(acceptance, 2, title, suite, "lightcone_chibar_minus_xi", 1e-9),
           _check(acceptance, 2, title, suite, "lightcone_chi_minus_metric", 1e-9),
           _check(acceptance, 2, title, suite, "lightcone_conjugacy", 1e-10)]
    assert all(oks)


def test_03_structure_equations(suite, acceptance):
    title = "trace, Gauss and Codazzi equations"
    oks = [_check(acceptance, 3, title, suite, "lightcone_trace_relation", 1e-9),
           _check(acceptance, 3, title, suite, "lightcone_gauss_equation", 1e-7),
           _check(acceptance, 3, title, suite, "lightcone_codazzi_equation", 1e-7)]
    assert all(oks)


def test_04_round_spectrum(acceptance):
    d = round_spectrum_defect(16)
    assert acceptance(4, "round spectrum", d < 1e-10, f"max |mu - l(l+1)| for l <= 5 at L=16 = {d:.2e}")


def test_05_effective_bound_scaling(suite, acceptance):
    title = "effective bound scaling"
    oks = [_check(acceptance, 5, title, suite, "log_omega_over_epsilon_variation", 0.10),
           _check(acceptance, 5, title, suite, "omega_w24_ratio_variation", 0.10),
           _check(acceptance, 5, title, suite, "normalization_value_max", 1e-9),
           _check(acceptance, 5, title, suite, "normalization_gradient_max", 1e-9)]
    assert all(oks)


def test_06_manufactured_solution(acceptance):
    d = manufactured_defect(24)
    assert acceptance(6, "manufactured solution", d < 1e-8, f"sup defect = {d:.2e} (tol 1e-8)")


def test_07_geodesic_transport(suite, acceptance):
    assert _check(acceptance, 7, "geodesic ODE consistency", suite, "geodesic_transport_deviation", 1e-6)


def test_08_xi_hat_ratios(suite, acceptance):
    title = "Xi-hat estimate ratios"
    v = _value(suite, "xi_hat_ratio_max")
    oks = [acceptance(8, title, np.isfinite(v), f"max ratio = {v:.3g} (finite)"),
           _check(acceptance, 8, title, suite, "xi_hat_ratio_halving_variation", 0.20)]
    assert all(oks)


def test_09_projection_estimate(suite, acceptance):
    title = "eigenspace projection"
    oks = [_check(acceptance, 9, title, suite, "projection_ratio_variation", 0.25),
           _check(acceptance, 9, title, suite, "orthonormality_ratio_variation", 0.25)]
    assert all(oks)


def test_10_rigid_motion_stability(suite, acceptance):
    title = "rigid-motion stability"
    oks = [_check(acceptance, 10, title, suite, "rotation_pullback_recovery", 1e-10),
           _check(acceptance, 10, title, suite, "embedding_residual_over_delta_variation", 0.25),
           _check(acceptance, 10, title, suite, "procrustes_beaten_by_random", 0)]
    assert all(oks)


@pytest.fixture(scope="module")
def basis_table():
    return basis_scaling_table(24)


def _band(acceptance, table, kind, n, band):
    ratios = np.array(table[(kind, n)])
    ok = bool(np.all((ratios >= 1 / band) & (ratios <= band)))
    worst = ratios[np.argmax(np.abs(np.log(ratios)))]
    acceptance(11, "basis scalings", ok, f"{kind} n={n} worst {worst:.4g} in [1/{band:g}, {band:g}]")
    return ok


def test_11_one_form_scaling(basis_table, acceptance):
    assert all([_band(acceptance, basis_table, "dY", n, 4.0) for n in (0, 1, 2, -1)])


def test_11_conformal_killing_scaling(basis_table, acceptance):
    assert all([_band(acceptance, basis_table, "LdY", n, 8.0) for n in (0, 1, -1)])


@pytest.mark.xfail(strict=True, reason="exact l = 2 ratio is 0.1204 < 1/8, see decisions ledger")
def test_11_conformal_killing_scaling_second_order(basis_table, acceptance):
    assert _band(acceptance, basis_table, "LdY", 2, 8.0)


def test_12_determinism(suite, acceptance):
    again = run_suite(ExperimentConfig())
    same = dumps(without_timing(suite)) == dumps(without_timing(again))
    assert acceptance(12, "determinism", same, "two default runs byte-identical excluding timing")
