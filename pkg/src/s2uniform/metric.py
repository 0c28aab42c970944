"""Metrics on the sphere, their curvature and Sobolev norms.

Every metric is carried in ambient Cartesian components: ``G`` is the
tangential symmetric tensor with g(X, Y) = X.G.Y for tangent X, Y, ``Ginv``
its tangential inverse, and ``christoffel`` the difference between its
Levi-Civita connection and the round one, indexed ``[i, j, k]`` with ``k``
the raised index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .sht.calculus import cov_deriv, degrees, grad_cart, laplacian_round, project_slot
from .sht.fields import OneFormField, ScalarField, STTensorField, _same_grid, frame_components
from .sht.transform import SphGrid, analyze, evaluate, spherical_angles


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[:, None] * b[None, :]


def _from_frame(grid: SphGrid, m11, m12, m22) -> np.ndarray:
    e1, e2 = grid.e_theta, grid.e_phi
    return m11 * _outer(e1, e1) + m12 * (_outer(e1, e2) + _outer(e2, e1)) + m22 * _outer(e2, e2)


def _apply(delta: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vector delta(X, Y) for a (1,2)-tensor indexed [i, j, k]."""
    return np.einsum("ijk...,i...,j...->k...", delta, x, y)


def raise_all(tensor: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Raise every index of a covariant Cartesian tensor with ``ginv``."""
    for axis in range(tensor.ndim - 2):
        t = np.moveaxis(tensor, axis, 0)
        t = np.einsum("ab...,b...->a...", ginv, t)
        tensor = np.moveaxis(t, 0, axis)
    return tensor


class SphereMetric:
    """Common interface of the two metric representations."""

    grid: SphGrid

    @property
    def G(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def Ginv(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def sqrt_det(self) -> np.ndarray:
        """Density of dvol_g with respect to the round measure."""
        raise NotImplementedError

    @property
    def christoffel(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def volume_weights(self) -> np.ndarray:
        return self.sqrt_det * self.grid.weights

    def area(self) -> float:
        return float(self.volume_weights.sum())

    def integrate(self, values) -> np.ndarray:
        return np.tensordot(np.asarray(values), self.volume_weights, axes=([-2, -1], [0, 1]))

    @cached_property
    def frame_matrix(self) -> np.ndarray:
        """Components g_ab in the round orthonormal frame, shape (2, 2) + grid.shape."""
        return frame_components(self.grid, self.G)

    def pointwise_norm_sq(self, tensor: np.ndarray) -> np.ndarray:
        if tensor.ndim == 2:
            return tensor**2
        return np.sum(tensor * raise_all(tensor, self.Ginv), axis=tuple(range(tensor.ndim - 2)))

    def covariant_derivative(self, tensor: np.ndarray) -> np.ndarray:
        """Derivative of a covariant tangential tensor in this metric's connection."""
        d = cov_deriv(tensor, self.grid)
        delta = self.christoffel
        for slot in range(tensor.ndim - 2):
            t = np.moveaxis(tensor, slot, 0)
            corr = np.einsum("abc...,c...->ab...", delta, t)
            d = d - np.moveaxis(corr, 1, slot + 1)
        return d

    def gradient_vector(self, f: ScalarField) -> np.ndarray:
        """The vector field g^{-1} df in Cartesian components."""
        return np.einsum("ab...,b...->a...", self.Ginv, grad_cart(f))

    def as_perturbed(self) -> "PerturbedMetric":
        return PerturbedMetric(self.grid, self.G - self.grid.projector)


@dataclass(frozen=True, eq=False)
class ConformalMetric(SphereMetric):
    """g = exp(2u) times the round metric, with an optional basepoint (theta, phi)."""

    log_omega: ScalarField
    basepoint: tuple[float, float] | None = None

    @property
    def grid(self) -> SphGrid:
        return self.log_omega.grid

    @classmethod
    def round(cls, grid: SphGrid, basepoint=None) -> "ConformalMetric":
        return cls(ScalarField.constant(grid, 0.0), basepoint)

    @cached_property
    def omega_sq(self) -> np.ndarray:
        return np.exp(2.0 * self.log_omega.values)

    @cached_property
    def G(self) -> np.ndarray:
        return self.omega_sq * self.grid.projector

    @cached_property
    def Ginv(self) -> np.ndarray:
        return self.grid.projector / self.omega_sq

    @property
    def sqrt_det(self) -> np.ndarray:
        return self.omega_sq

    @cached_property
    def christoffel(self) -> np.ndarray:
        p = self.grid.projector
        du = grad_cart(self.log_omega)
        pdu = p[:, None, :] * du[None, :, None]
        return pdu + pdu.swapaxes(0, 1) - p[:, :, None] * du[None, None, :]

    def pullback(self, rotation) -> "ConformalMetric":
        """Pull back by x -> R x."""
        rotation = np.asarray(rotation, float)
        pts = np.einsum("ab,b...->a...", rotation, self.grid.normal)
        u = ScalarField(self.grid, self.log_omega.at_points(pts))
        return ConformalMetric(u, self.basepoint)


@dataclass(frozen=True, eq=False)
class PerturbedMetric(SphereMetric):
    """g = round metric + h, with h a tangential symmetric tensor field."""

    grid: SphGrid
    H: np.ndarray
    basepoint: tuple[float, float] | None = None

    def __post_init__(self):
        h = np.asarray(self.H, float)
        if h.shape != (3, 3) + self.grid.shape:
            raise ValueError(f"h must have shape (3, 3) + {self.grid.shape}, got {h.shape}")
        # keep only the tangential symmetric part
        h = 0.5 * (h + h.swapaxes(0, 1))
        h = project_slot(project_slot(h, self.grid, 0), self.grid, 1)
        object.__setattr__(self, "H", h)
        ev = np.linalg.eigvalsh(np.moveaxis(self.frame_matrix, (0, 1), (-2, -1)))
        if ev.min() <= 0.0:
            raise ValueError(f"metric is not positive definite (min eigenvalue {ev.min():.3g})")

    @classmethod
    def from_frame(cls, grid: SphGrid, h11, h12, h22, basepoint=None) -> "PerturbedMetric":
        return cls(grid, _from_frame(grid, h11, h12, h22), basepoint)

    @classmethod
    def from_cartesian_coeffs(cls, grid: SphGrid, coeffs: np.ndarray, basepoint=None) -> "PerturbedMetric":
        """Build h from harmonic coefficients of its six Cartesian components."""
        from .sht.transform import synthesize

        vals = synthesize(coeffs, grid)
        idx = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
        h = np.zeros((3, 3) + grid.shape)
        for c, (a, b) in enumerate(idx):
            h[a, b] = h[b, a] = vals[c]
        return cls(grid, h, basepoint)

    def cartesian_coeffs(self) -> np.ndarray:
        idx = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
        return analyze(np.stack([self.H[a, b] for a, b in idx]), self.grid, self.grid.lmax)

    @property
    def h_frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h = frame_components(self.grid, self.H)
        return h[0, 0], h[0, 1], h[1, 1]

    @cached_property
    def G(self) -> np.ndarray:
        return self.grid.projector + self.H

    @cached_property
    def frame_matrix(self) -> np.ndarray:
        return frame_components(self.grid, self.grid.projector + self.H)

    @cached_property
    def Ginv(self) -> np.ndarray:
        m = self.frame_matrix
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        return _from_frame(self.grid, m[1, 1] / det, -m[0, 1] / det, m[0, 0] / det)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        m = self.frame_matrix
        return np.sqrt(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    @cached_property
    def christoffel(self) -> np.ndarray:
        d = cov_deriv(self.H, self.grid)  # d[i, j, l] = D_i h_jl
        t = d + d.swapaxes(0, 1) - np.moveaxis(d, 0, 2)
        return 0.5 * np.einsum("ijl...,lk...->ijk...", t, self.Ginv)

    def pullback(self, rotation) -> "PerturbedMetric":
        """Pull back by x -> R x: h'(x) = R^T h(R x) R."""
        rotation = np.asarray(rotation, float)
        pts = np.einsum("ab,b...->a...", rotation, self.grid.normal)
        hc = analyze(self.H, self.grid, self.grid.lmax)
        h_at = evaluate(hc, *spherical_angles(pts))
        h = np.einsum("ca,cd...,db->ab...", rotation, h_at, rotation)
        return PerturbedMetric(self.grid, h, self.basepoint)


@dataclass(frozen=True, eq=False)
class ChristoffelDifference:
    """Difference of two Levi-Civita connections, indexed [i, j, k] with k raised."""

    grid: SphGrid
    components: np.ndarray

    def pointwise_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.components**2, axis=(0, 1, 2)))

    def sup(self) -> float:
        return float(self.pointwise_norm().max())

    def asymmetry(self) -> float:
        return float(np.abs(self.components - self.components.swapaxes(0, 1)).max())


def gauss_curvature_conformal(m: ConformalMetric) -> ScalarField:
    """K = exp(-2u) (1 - Delta u) for g = exp(2u) times the round metric."""
    u = m.log_omega
    return ScalarField(u.grid, np.exp(-2.0 * u.values) * (1.0 - laplacian_round(u).values))


def curvature_vector(delta: np.ndarray, grid: SphGrid) -> np.ndarray:
    """R(e1, e2) e2 for the connection round + delta, in Cartesian components."""
    e1, e2 = grid.e_theta, grid.e_phi
    dd = cov_deriv(delta, grid)  # dd[a, i, j, k] = (D_a delta)_ij^k
    d1 = np.einsum("a...,aijk...->ijk...", e1, dd)
    d2 = np.einsum("a...,aijk...->ijk...", e2, dd)
    return (e1 + _apply(d1, e2, e2) - _apply(d2, e1, e2)
            + _apply(delta, e1, _apply(delta, e2, e2)) - _apply(delta, e2, _apply(delta, e1, e2)))


def gauss_curvature_general(m: SphereMetric) -> ScalarField:
    """K = g(R(e1, e2) e2, e1) / det g, with the Riemann tensor built from the Christoffel difference."""
    r = curvature_vector(m.christoffel, m.grid)
    num = np.einsum("a...,ab...,b...->...", r, m.G, m.grid.e_theta)
    return ScalarField(m.grid, num / m.sqrt_det**2)


def gauss_bonnet_defect(m: SphereMetric, curvature: ScalarField | None = None) -> float:
    k = gauss_curvature_general(m) if curvature is None else curvature
    return float(m.integrate(k.values) - 4.0 * np.pi)


def christoffel_difference(g1: SphereMetric, g2: SphereMetric) -> ChristoffelDifference:
    _same_grid(g1.grid, g2.grid)
    return ChristoffelDifference(g1.grid, g2.christoffel - g1.christoffel)


def _as_tensor(f):
    if isinstance(f, ScalarField):
        return f
    if isinstance(f, (OneFormField, STTensorField)):
        return f.cart
    return np.asarray(f, float)


def sobolev_norm(f, g: SphereMetric, n: int, p: float = 2.0, include_zeroth: bool = True) -> float:
    """(sum_k int |nabla^k f|_g^p dvol_g)^(1/p), k from 0 (or 1) to n.

    ``f`` is a ScalarField, a OneFormField/STTensorField, or a covariant
    Cartesian tensor array.
    """
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if n < 0:
        raise ValueError("sobolev_norm needs n >= 0")
    if n > g.grid.pad:
        warnings.warn(f"{n} derivatives exceed the grid's resolved degree padding ({g.grid.pad})",
                      RuntimeWarning, stacklevel=2)
    f = _as_tensor(f)
    total = 0.0
    for k in range(n + 1):
        if k == 0:
            t = f.values if isinstance(f, ScalarField) else f
        elif k == 1 and isinstance(f, ScalarField):
            t = grad_cart(f)
        else:
            t = g.covariant_derivative(t)
        if k == 0 and not include_zeroth:
            continue
        dens = np.sqrt(np.clip(g.pointwise_norm_sq(t), 0.0, None)) ** p
        total += float(g.integrate(dens))
    return total ** (1.0 / p)


def lp_norm(values, g: SphereMetric, p: float) -> float:
    return float(g.integrate(np.abs(values) ** p)) ** (1.0 / p)


def metric_distance(g1: SphereMetric, g2: SphereMetric, n: int = 2, p: float = 2.0) -> float:
    """Sobolev size of g2 - g1 measured with g1."""
    _same_grid(g1.grid, g2.grid)
    return sobolev_norm(g2.G - g1.G, g1, n, p)


def rotation_matrix(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * k @ k


__all__ = [
    "SphereMetric",
    "ConformalMetric",
    "PerturbedMetric",
    "ChristoffelDifference",
    "gauss_curvature_conformal",
    "gauss_curvature_general",
    "gauss_bonnet_defect",
    "christoffel_difference",
    "sobolev_norm",
    "lp_norm",
    "metric_distance",
    "rotation_matrix",
    "degrees",
]
