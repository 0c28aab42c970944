"""Harmonic bases of 1-forms and trace-free 2-tensors and their Sobolev norms.

The four families are dY, *dY, L dY and L *dY with L the conformal Killing
operator.  They are mutually orthogonal in every round Sobolev inner
product, so norms of basis elements and elliptic constants reduce to
per-degree quantities.
"""

from __future__ import annotations

import functools

import numpy as np

from .calculus import conformal_killing_cart, cov_deriv, grad_cart, star_cart
from .fields import ScalarField
from .transform import SphGrid, real_ylm

KINDS = ("dY", "*dY", "LdY", "L*dY")


def eigenvalue(l: int) -> int:
    """Magnitude l(l+1) of the round Laplace-Beltrami eigenvalue."""
    return l * (l + 1)


def basis_element(grid: SphGrid, l: int, m: int, kind: str) -> np.ndarray:
    """Cartesian components of a basis element built on the real harmonic of (l, m)."""
    if kind not in KINDS:
        raise ValueError(f"unknown basis kind {kind!r}; expected one of {KINDS}")
    if not (1 <= l <= grid.L and -l <= m <= l):
        raise ValueError(f"need 1 <= l <= {grid.L} and |m| <= l, got l={l}, m={m}")
    y = ScalarField(grid, real_ylm(grid, l, m))
    w = grad_cart(y)
    if kind.endswith("*dY"):
        w = star_cart(w, grid)
    if kind.startswith("L"):
        if l == 1:
            raise ValueError(f"{kind} vanishes for l = 1 (conformal Killing fields)")
        w = conformal_killing_cart(w, grid)
    return w


def sobolev_inner(a: np.ndarray, b: np.ndarray, grid: SphGrid, n: int) -> float:
    """Round inner product summing L2 pairings of derivatives of order 0..n."""
    if n < 0:
        raise ValueError("use basis_norms for negative orders")
    total = 0.0
    for k in range(n + 1):
        if k:
            a, b = cov_deriv(a, grid), cov_deriv(b, grid)
        total += float(grid.integrate(np.sum(a * b, axis=tuple(range(a.ndim - 2)))))
    return total


def sobolev_sq(a: np.ndarray, grid: SphGrid, n: int) -> float:
    total = 0.0
    for k in range(n + 1):
        if k:
            a = cov_deriv(a, grid)
        total += float(grid.integrate(np.sum(a * a, axis=tuple(range(a.ndim - 2)))))
    return total


def basis_norms(grid: SphGrid, l: int, n: int, kind: str, m: int = 0) -> float:
    """Squared order-n norm of a basis element.

    Non-negative orders use iterated covariant derivatives on the grid.  For
    negative orders the dual norm is evaluated over the orthogonal basis,
    where the supremum is attained at the element itself, giving
    ``<<b, b>>_0**2 / <<b, b>>_|n|``.
    """
    b = basis_element(grid, l, m, kind)
    if n >= 0:
        return sobolev_sq(b, grid, n)
    return sobolev_sq(b, grid, 0) ** 2 / sobolev_sq(b, grid, -n)


def scaling_ratio(grid: SphGrid, l: int, n: int, kind: str, m: int = 0) -> float:
    """Norm divided by its predicted power of the eigenvalue."""
    # lambda^(n+1) for 1-forms, lambda^(n+2) for tensors, for either sign of n
    power = n + 1 if kind in ("dY", "*dY") else n + 2
    return basis_norms(grid, l, n, kind, m) / float(eigenvalue(l)) ** power


def elliptic_constant(grid: SphGrid, l_min: int = 2) -> tuple[float, float]:
    """Constants of the conformal Killing operator on degrees l_min..L.

    Returns ``(c, s)`` where ``||w||_{1,2} <= c ||L w||_{0,2}`` and ``s`` is
    the smallest singular value of L relative to the L2 norm.  Both are
    Rayleigh quotients maximized/minimized over basis elements.
    """
    c, s = 0.0, np.inf
    for l in range(max(l_min, 2), grid.L + 1):
        for kind in ("dY", "*dY"):
            w = basis_element(grid, l, 0, kind)
            lw = conformal_killing_cart(w, grid)
            h1 = sobolev_sq(w, grid, 1)
            l2 = sobolev_sq(w, grid, 0)
            lw2 = sobolev_sq(lw, grid, 0)
            c = max(c, np.sqrt(h1 / lw2))
            s = min(s, np.sqrt(lw2 / l2))
    return float(c), float(s)


@functools.lru_cache(maxsize=8)
def real_harmonic_matrix(grid: SphGrid, L: int | None = None):
    """Grid values of the real orthonormal harmonics of degree <= L.

    Returns ``(values, degree)`` with ``values`` of shape
    ``((L+1)**2,) + grid.shape`` ordered by degree then order.
    """
    L = grid.L if L is None else L
    rows, degs = [], []
    for l in range(L + 1):
        for m in range(-l, l + 1):
            rows.append(real_ylm(grid, l, m))
            degs.append(l)
    return np.stack(rows), np.asarray(degs)
