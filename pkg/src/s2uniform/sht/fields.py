"""Scalar, 1-form and trace-free 2-tensor fields sampled on a SphGrid.

Tensor fields are stored by their components in the orthonormal frame
(e_theta, e_phi) of the round metric.  Those components are not smooth
functions near the poles, so every derivative is taken on the ambient
Cartesian components instead (see ``calculus``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .transform import SphGrid, analyze, cartesian_points, evaluate, spherical_angles, synthesize


def _same_grid(a: SphGrid, b: SphGrid) -> None:
    if a is not b and (a.L, a.lmax) != (b.L, b.lmax):
        raise ValueError(f"grid mismatch: (L={a.L}, lmax={a.lmax}) vs (L={b.L}, lmax={b.lmax})")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real function on the sphere, held as grid values.

    ``coeffs`` is the degree-``grid.L`` projection; derivatives act on it,
    so a non band-limited field is differentiated through its truncation.
    """

    grid: SphGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values of shape {values.shape} do not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    @cached_property
    def coeffs(self) -> np.ndarray:
        return analyze(self.values, self.grid)

    @classmethod
    def from_coeffs(cls, grid: SphGrid, coeffs) -> "ScalarField":
        coeffs = np.asarray(coeffs, dtype=complex)
        field = cls(grid, synthesize(coeffs, grid))
        if coeffs.shape[-2] - 1 == grid.L:
            field.__dict__["coeffs"] = coeffs
        return field

    @classmethod
    def from_function(cls, grid: SphGrid, fn) -> "ScalarField":
        """Sample ``fn(x, y, z)`` at the grid nodes."""
        x, y, z = grid.normal
        return cls(grid, np.broadcast_to(fn(x, y, z), grid.shape))

    @classmethod
    def constant(cls, grid: SphGrid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    def truncated(self) -> "ScalarField":
        """Band-limited representative at degree grid.L."""
        return ScalarField.from_coeffs(self.grid, self.coeffs)

    def __call__(self, theta, phi) -> np.ndarray:
        return evaluate(self.coeffs, theta, phi)

    def at_points(self, points) -> np.ndarray:
        return evaluate(self.coeffs, *spherical_angles(points))

    def map(self, fn) -> "ScalarField":
        return ScalarField(self.grid, fn(self.values))

    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def integral(self) -> float:
        return float(self.grid.integrate(self.values))

    def _other(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class OneFormField:
    """1-form with frame components (w1, w2) along (e_theta, e_phi)."""

    grid: SphGrid
    w1: np.ndarray
    w2: np.ndarray

    @classmethod
    def from_cart(cls, grid: SphGrid, vec: np.ndarray) -> "OneFormField":
        return cls(grid, np.einsum("a...,a...->...", vec, grid.e_theta),
                   np.einsum("a...,a...->...", vec, grid.e_phi))

    @cached_property
    def cart(self) -> np.ndarray:
        return self.w1 * self.grid.e_theta + self.w2 * self.grid.e_phi

    def pointwise_norm(self) -> np.ndarray:
        return np.hypot(self.w1, self.w2)

    def sup(self) -> float:
        return float(self.pointwise_norm().max())

    def __add__(self, other: "OneFormField") -> "OneFormField":
        _same_grid(self.grid, other.grid)
        return OneFormField(self.grid, self.w1 + other.w1, self.w2 + other.w2)

    def __sub__(self, other: "OneFormField") -> "OneFormField":
        _same_grid(self.grid, other.grid)
        return OneFormField(self.grid, self.w1 - other.w1, self.w2 - other.w2)

    def __mul__(self, c) -> "OneFormField":
        c = c.values if isinstance(c, ScalarField) else c
        return OneFormField(self.grid, self.w1 * c, self.w2 * c)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class STTensorField:
    """Trace-free symmetric 2-tensor; T22 = -T11 and T21 = T12 implicitly."""

    grid: SphGrid
    t11: np.ndarray
    t12: np.ndarray

    @classmethod
    def from_cart(cls, grid: SphGrid, mat: np.ndarray) -> "STTensorField":
        """Trace-free part of a tangential symmetric 3x3 tensor field."""
        e1, e2 = grid.e_theta, grid.e_phi
        m11 = np.einsum("a...,ab...,b...->...", e1, mat, e1)
        m22 = np.einsum("a...,ab...,b...->...", e2, mat, e2)
        m12 = np.einsum("a...,ab...,b...->...", e1, mat, e2)
        m21 = np.einsum("a...,ab...,b...->...", e2, mat, e1)
        return cls(grid, 0.5 * (m11 - m22), 0.5 * (m12 + m21))

    @cached_property
    def cart(self) -> np.ndarray:
        e1, e2 = self.grid.e_theta, self.grid.e_phi
        d = e1[:, None] * e1[None, :] - e2[:, None] * e2[None, :]
        o = e1[:, None] * e2[None, :] + e2[:, None] * e1[None, :]
        return self.t11 * d + self.t12 * o

    def pointwise_norm(self) -> np.ndarray:
        return np.sqrt(2.0 * (self.t11**2 + self.t12**2))

    def sup(self) -> float:
        return float(self.pointwise_norm().max())

    def __add__(self, other: "STTensorField") -> "STTensorField":
        _same_grid(self.grid, other.grid)
        return STTensorField(self.grid, self.t11 + other.t11, self.t12 + other.t12)

    def __sub__(self, other: "STTensorField") -> "STTensorField":
        _same_grid(self.grid, other.grid)
        return STTensorField(self.grid, self.t11 - other.t11, self.t12 - other.t12)

    def __mul__(self, c) -> "STTensorField":
        c = c.values if isinstance(c, ScalarField) else c
        return STTensorField(self.grid, self.t11 * c, self.t12 * c)

    __rmul__ = __mul__


def frame_components(grid: SphGrid, tensor: np.ndarray) -> np.ndarray:
    """Components of a Cartesian tangential tensor in the (e_theta, e_phi) frame."""
    k = tensor.ndim - 2
    cart, fr = "abcdef"[:k], "ijklmn"[:k]
    subs = ",".join(f"{f}{c}xy" for f, c in zip(fr, cart))
    return np.einsum(f"{cart}xy,{subs}->{fr}xy", tensor, *([grid.frame] * k), optimize=True)


__all__ = [
    "ScalarField",
    "OneFormField",
    "STTensorField",
    "frame_components",
    "cartesian_points",
]
