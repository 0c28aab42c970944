"""Differential operators of the round metric.

Tangential tensors are handled through their ambient Cartesian components,
arrays of shape ``(3,)*k + grid.shape``.  Those components are smooth on the
whole sphere, so they can be expanded in harmonics and differentiated
spectrally; the round connection is the tangential projection of the
ambient derivative.  Derivative indices are always prepended.
"""

from __future__ import annotations

import numpy as np

from .fields import OneFormField, ScalarField, STTensorField, _same_grid
from .transform import SphGrid, analyze, evaluate, synthesize_gradient


def degrees(lmax: int) -> np.ndarray:
    """Degree l of every slot of a coefficient array, shape (lmax+1, 1)."""
    return np.arange(lmax + 1)[:, None]


def _frame_to_cart(grid: SphGrid, d_theta, d_phi) -> np.ndarray:
    return (np.einsum("axy,...xy->a...xy", grid.e_theta, d_theta)
            + np.einsum("axy,...xy->a...xy", grid.e_phi, d_phi))


def tangential_gradient(values, grid: SphGrid, lmax: int | None = None) -> np.ndarray:
    """Surface gradient of every component of a stacked field.

    ``values`` has shape ``(...,) + grid.shape``; it is expanded up to degree
    ``lmax`` (default ``grid.lmax``) and the result has shape
    ``(3, ...) + grid.shape``.
    """
    coeffs = analyze(values, grid, grid.lmax if lmax is None else lmax)
    return _frame_to_cart(grid, *synthesize_gradient(coeffs, grid))


def project_slot(tensor: np.ndarray, grid: SphGrid, axis: int) -> np.ndarray:
    """Apply the tangential projector to one tensor index."""
    t = np.moveaxis(tensor, axis, 0)
    t = np.einsum("abxy,b...xy->a...xy", grid.projector, t)
    return np.moveaxis(t, 0, axis)


def cov_deriv(tensor: np.ndarray, grid: SphGrid) -> np.ndarray:
    """Round covariant derivative of a tangential tensor, derivative index first."""
    d = tangential_gradient(tensor, grid)
    for axis in range(1, d.ndim - 2):
        d = project_slot(d, grid, axis)
    return d


def grad_cart(f: ScalarField) -> np.ndarray:
    """Cartesian components of df, computed from the degree-L coefficients."""
    return _frame_to_cart(f.grid, *synthesize_gradient(f.coeffs, f.grid))


def grad(f: ScalarField) -> OneFormField:
    return OneFormField(f.grid, *synthesize_gradient(f.coeffs, f.grid))


def hessian_cart(f: ScalarField) -> np.ndarray:
    return cov_deriv(grad_cart(f), f.grid)


def laplacian_round(f: ScalarField) -> ScalarField:
    """Delta = div grad, so Y_l^m has eigenvalue -l(l+1)."""
    l = degrees(f.grid.L)
    return ScalarField.from_coeffs(f.grid, -l * (l + 1) * f.coeffs)


def star_cart(vec: np.ndarray, grid: SphGrid) -> np.ndarray:
    """Hodge star of a 1-form as the rotation n x w."""
    return np.cross(grid.normal, vec, axis=0)


def hodge_star(w: OneFormField) -> OneFormField:
    return OneFormField(w.grid, -w.w2, w.w1)


def div_cart(tensor: np.ndarray, grid: SphGrid) -> np.ndarray:
    """Contract the derivative index with the first tensor index."""
    d = cov_deriv(tensor, grid)
    return np.trace(d, axis1=0, axis2=1)


def conformal_killing_cart(vec: np.ndarray, grid: SphGrid) -> np.ndarray:
    d = cov_deriv(vec, grid)
    tr = np.trace(d, axis1=0, axis2=1)
    return 0.5 * (d + d.swapaxes(0, 1)) - 0.5 * tr * grid.projector


def conformal_killing(w: OneFormField) -> STTensorField:
    """Trace-free symmetrized covariant derivative of a 1-form."""
    return STTensorField.from_cart(w.grid, conformal_killing_cart(w.cart, w.grid))


def div_oneform(w: OneFormField) -> ScalarField:
    return ScalarField(w.grid, div_cart(w.cart, w.grid))


def div_st(t: STTensorField) -> OneFormField:
    return OneFormField.from_cart(t.grid, div_cart(t.cart, t.grid))


def trace_free(mat: np.ndarray, grid: SphGrid) -> np.ndarray:
    """Round-trace-free part of a tangential 2-tensor in Cartesian components."""
    return mat - 0.5 * np.einsum("aa...->...", mat) * grid.projector


def l2_inner(a, b) -> float:
    """L2 pairing of two fields of the same kind under the round measure."""
    if type(a) is not type(b):
        raise TypeError(f"cannot pair {type(a).__name__} with {type(b).__name__}")
    _same_grid(a.grid, b.grid)
    if isinstance(a, ScalarField):
        dens = a.values * b.values
    elif isinstance(a, OneFormField):
        dens = a.w1 * b.w1 + a.w2 * b.w2
    else:
        dens = 2.0 * (a.t11 * b.t11 + a.t12 * b.t12)
    return float(a.grid.integrate(dens))


def l2_inner_cart(a: np.ndarray, b: np.ndarray, grid: SphGrid) -> float:
    k = a.ndim - 2
    return float(grid.integrate(np.sum(a * b, axis=tuple(range(k)))))


def gradient_at(f: ScalarField, theta, phi) -> np.ndarray:
    """Cartesian gradient of f at arbitrary points, shape (3,) + broadcast shape."""
    coeffs = analyze(grad_cart(f), f.grid, f.grid.lmax)
    return evaluate(coeffs, theta, phi)


def tensor_at(tensor: np.ndarray, grid: SphGrid, theta, phi) -> np.ndarray:
    """Spectral evaluation of Cartesian tensor components at arbitrary points."""
    return evaluate(analyze(tensor, grid, grid.lmax), theta, phi)
