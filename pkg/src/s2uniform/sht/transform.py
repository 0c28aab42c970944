"""Gauss-Legendre grids and spherical-harmonic transforms on the unit sphere.

Coefficient arrays are complex with shape ``(..., lmax+1, 2*lmax+1)`` and are
indexed ``a[l, m + lmax]``.  Harmonics are the orthonormal complex ``Y_l^m``
with the Condon-Shortley phase, so a real field satisfies
``a[l, -m] = (-1)^m conj(a[l, m])``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

FOUR_PI = 4.0 * np.pi


@functools.lru_cache(maxsize=None)
def _recurrence_tables(lmax: int):
    m = np.arange(lmax + 1)[:, None].astype(float)
    l = np.arange(lmax + 1)[None, :].astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.sqrt((4 * l * l - 1) / (l * l - m * m))
        b = np.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
    a[~np.isfinite(a)] = 0.0
    b[~np.isfinite(b)] = 0.0
    return a, b


def legendre(lmax: int, x, derivative: bool = False):
    """Orthonormal associated Legendre functions.

    Returns ``p`` with shape ``(lmax+1, lmax+1) + x.shape`` indexed ``[m, l]``
    such that ``p[m, l](cos t) * exp(i m phi)`` is the unit-norm harmonic
    ``Y_l^m`` for ``m >= 0``.  Entries with ``l < m`` are zero.  With
    ``derivative=True`` the colatitude derivative ``d/dtheta`` is returned too;
    it is computed by the ladder relation and stays finite at the poles.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    a, b = _recurrence_tables(lmax)
    tail = (1,) * x.ndim
    p = np.zeros((lmax + 1, lmax + 1) + x.shape)
    pmm = np.full(x.shape, 1.0 / np.sqrt(FOUR_PI))
    for m in range(lmax + 1):
        if m > 0:
            pmm = -np.sqrt((2 * m + 1) / (2 * m)) * s * pmm
        p[m, m] = pmm
    if lmax >= 1:
        ms = np.arange(lmax)
        p[ms, ms + 1] = np.sqrt(2 * ms + 3).reshape((-1,) + tail) * x * p[ms, ms]
    for l in range(2, lmax + 1):
        rows = slice(0, l - 1)
        al = a[rows, l].reshape((-1,) + tail)
        bl = b[rows, l].reshape((-1,) + tail)
        p[rows, l] = al * (x * p[rows, l - 1] - bl * p[rows, l - 2])
    if not derivative:
        return p

    m = np.arange(lmax + 1)[:, None].astype(float)
    l = np.arange(lmax + 1)[None, :].astype(float)
    up = np.sqrt(np.clip((l - m) * (l + m + 1), 0.0, None)).reshape(p.shape[:2] + tail)
    down = np.sqrt(np.clip((l + m) * (l - m + 1), 0.0, None)).reshape(p.shape[:2] + tail)
    p_up = np.zeros_like(p)
    p_up[:-1] = p[1:]
    p_down = np.zeros_like(p)
    p_down[1:] = p[:-1]
    # P_l^{-1} = -P_l^1 under the Condon-Shortley phase
    p_down[0] = -p[1] if lmax >= 1 else 0.0
    dp = 0.5 * (up * p_up - down * p_down)
    return p, dp


@dataclass(frozen=True, eq=False)
class SphGrid:
    """Gauss-Legendre colatitude nodes times equispaced longitudes.

    ``L`` is the bandlimit of scalar fields; ``lmax = L + pad`` is the degree
    up to which tensor components are resolved (Cartesian components of the
    k-th derivative of a degree-L field have degree at most L + k).
    """

    L: int
    lmax: int
    x: np.ndarray
    w: np.ndarray

    @property
    def pad(self) -> int:
        return self.lmax - self.L

    @property
    def n_theta(self) -> int:
        return self.x.size

    @property
    def n_phi(self) -> int:
        return 2 * self.lmax + 2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @cached_property
    def theta(self) -> np.ndarray:
        return np.arccos(self.x)

    @cached_property
    def phi(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi

    @cached_property
    def sin_theta(self) -> np.ndarray:
        return np.sqrt(1.0 - self.x**2)

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature measure at every node; sums to 4*pi."""
        return np.outer(self.w, np.full(self.n_phi, 2.0 * np.pi / self.n_phi))

    @cached_property
    def _legendre(self):
        return legendre(self.lmax, self.x, derivative=True)

    @functools.lru_cache(maxsize=4)
    def _tables(self, lmax: int):
        """Legendre tables over signed m, shape (n_theta, l, 2*lmax+1)."""
        p, dp = self._legendre
        p, dp = p[: lmax + 1, : lmax + 1], dp[: lmax + 1, : lmax + 1]
        ms = np.arange(-lmax, lmax + 1)
        sign = np.where((ms < 0) & (ms % 2 == 1), -1.0, 1.0)
        full = p[np.abs(ms)] * sign[:, None, None]
        dfull = dp[np.abs(ms)] * sign[:, None, None]
        full = np.transpose(full, (2, 1, 0))
        dfull = np.transpose(dfull, (2, 1, 0))
        return full, dfull, full * self.w[:, None, None]

    @cached_property
    def normal(self) -> np.ndarray:
        st, ct = self.sin_theta[:, None], self.x[:, None]
        cp, sp = np.cos(self.phi)[None, :], np.sin(self.phi)[None, :]
        return np.stack([st * cp, st * sp, np.broadcast_to(ct, (self.n_theta, self.n_phi))])

    @cached_property
    def e_theta(self) -> np.ndarray:
        st, ct = self.sin_theta[:, None], self.x[:, None]
        cp, sp = np.cos(self.phi)[None, :], np.sin(self.phi)[None, :]
        return np.stack([ct * cp, ct * sp, np.broadcast_to(-st, (self.n_theta, self.n_phi))])

    @cached_property
    def e_phi(self) -> np.ndarray:
        cp, sp = np.cos(self.phi)[None, :], np.sin(self.phi)[None, :]
        zero = np.zeros((self.n_theta, self.n_phi))
        return np.stack([np.broadcast_to(-sp, zero.shape), np.broadcast_to(cp, zero.shape), zero])

    @cached_property
    def frame(self) -> np.ndarray:
        """Orthonormal tangent frame, shape (2, 3, n_theta, n_phi)."""
        return np.stack([self.e_theta, self.e_phi])

    @cached_property
    def projector(self) -> np.ndarray:
        """Tangential projector I - n n^T, shape (3, 3, n_theta, n_phi)."""
        n = self.normal
        return np.eye(3)[:, :, None, None] - n[:, None] * n[None, :]

    def integrate(self, values) -> np.ndarray:
        return np.tensordot(np.asarray(values), self.weights, axes=([-2, -1], [0, 1]))


@functools.lru_cache(maxsize=None)
def build_grid(L: int, pad: int = 4) -> SphGrid:
    """Grid exact for products of harmonics up to degree L + pad."""
    if int(L) != L or L < 4:
        raise ValueError(f"bandlimit must be an integer >= 4, got {L!r}")
    if pad < 0:
        raise ValueError("pad must be non-negative")
    lmax = int(L) + int(pad)
    x, w = np.polynomial.legendre.leggauss(lmax + 1)
    return SphGrid(L=int(L), lmax=lmax, x=x[::-1].copy(), w=w[::-1].copy())


def _check_grid_values(values: np.ndarray, grid: SphGrid) -> None:
    if values.shape[-2:] != grid.shape:
        raise ValueError(f"grid values of shape {values.shape[-2:]} do not match grid {grid.shape}")


def analyze(values, grid: SphGrid, lmax: int | None = None) -> np.ndarray:
    """Project grid values onto harmonics of degree <= lmax (default grid.L)."""
    values = np.asarray(values)
    _check_grid_values(values, grid)
    lmax = grid.L if lmax is None else lmax
    if lmax > grid.lmax:
        raise ValueError(f"degree {lmax} exceeds grid resolution {grid.lmax}")
    f = np.fft.fft(values, axis=-1) * (2.0 * np.pi / grid.n_phi)
    f = f[..., np.arange(-lmax, lmax + 1) % grid.n_phi]
    _, _, pw = grid._tables(lmax)
    return np.einsum("tlm,...tm->...lm", pw, f)


def _to_longitude(fm: np.ndarray, grid: SphGrid, lmax: int, real: bool) -> np.ndarray:
    g = np.zeros(fm.shape[:-1] + (grid.n_phi,), dtype=complex)
    g[..., np.arange(-lmax, lmax + 1) % grid.n_phi] = fm
    out = np.fft.ifft(g, axis=-1) * grid.n_phi
    return out.real if real else out


def coeff_degree(coeffs: np.ndarray) -> int:
    lmax = coeffs.shape[-2] - 1
    if coeffs.shape[-1] != 2 * lmax + 1:
        raise ValueError(f"malformed coefficient array of shape {coeffs.shape}")
    return lmax


def synthesize(coeffs, grid: SphGrid, real: bool = True) -> np.ndarray:
    coeffs = np.asarray(coeffs)
    lmax = coeff_degree(coeffs)
    if lmax > grid.lmax:
        raise ValueError(f"coefficients of degree {lmax} exceed grid resolution {grid.lmax}")
    p, _, _ = grid._tables(lmax)
    fm = np.einsum("tlm,...lm->...tm", p, coeffs)
    return _to_longitude(fm, grid, lmax, real)


def synthesize_gradient(coeffs, grid: SphGrid) -> tuple[np.ndarray, np.ndarray]:
    """Frame components (d/dtheta, (1/sin theta) d/dphi) of a real field."""
    coeffs = np.asarray(coeffs)
    lmax = coeff_degree(coeffs)
    p, dp, _ = grid._tables(lmax)
    ms = np.arange(-lmax, lmax + 1)
    d_theta = _to_longitude(np.einsum("tlm,...lm->...tm", dp, coeffs), grid, lmax, True)
    d_phi = _to_longitude(np.einsum("tlm,...lm->...tm", p, coeffs * (1j * ms)), grid, lmax, True)
    return d_theta, d_phi / grid.sin_theta[:, None]


def evaluate(coeffs, theta, phi, real: bool = True) -> np.ndarray:
    """Evaluate expansions at arbitrary points.

    ``coeffs`` may carry leading field axes; the result has shape
    ``coeffs.shape[:-2] + broadcast(theta, phi).shape``.
    """
    coeffs = np.asarray(coeffs)
    lmax = coeff_degree(coeffs)
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    p = legendre(lmax, np.cos(theta).ravel())  # (m, l, npts)
    ms = np.arange(-lmax, lmax + 1)
    sign = np.where((ms < 0) & (ms % 2 == 1), -1.0, 1.0)
    full = p[np.abs(ms)] * sign[:, None, None]  # (m, l, npts)
    phase = np.exp(1j * np.outer(ms, phi.ravel()))  # (m, npts)
    out = np.einsum("...lm,mlk,mk->...k", coeffs, full, phase)
    out = out.reshape(coeffs.shape[:-2] + theta.shape)
    return out.real if real else out


def cartesian_points(theta, phi) -> np.ndarray:
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def spherical_angles(points) -> tuple[np.ndarray, np.ndarray]:
    points = np.asarray(points, float)
    r = np.linalg.norm(points, axis=0)
    theta = np.arccos(np.clip(points[2] / r, -1.0, 1.0))
    phi = np.mod(np.arctan2(points[1], points[0]), 2.0 * np.pi)
    return theta, phi


def ylm(grid: SphGrid, l: int, m: int) -> np.ndarray:
    """Grid values of the complex harmonic Y_l^m."""
    lmax = max(l, 1)
    a = np.zeros((lmax + 1, 2 * lmax + 1), dtype=complex)
    a[l, m + lmax] = 1.0
    return synthesize(a, grid, real=False)


def real_ylm(grid: SphGrid, l: int, m: int) -> np.ndarray:
    """Real orthonormal harmonic: sqrt2 P cos(m phi) for m > 0, sqrt2 P sin(|m| phi) for m < 0."""
    p = grid._legendre[0][abs(m), l][:, None]
    if m == 0:
        return np.broadcast_to(p, grid.shape).copy()
    trig = np.cos if m > 0 else np.sin
    return np.sqrt(2.0) * p * trig(abs(m) * grid.phi)[None, :]


def pad_coeffs(coeffs: np.ndarray, lmax: int) -> np.ndarray:
    """Zero-extend or truncate a coefficient array to degree lmax."""
    cur = coeff_degree(coeffs)
    out = np.zeros(coeffs.shape[:-2] + (lmax + 1, 2 * lmax + 1), dtype=complex)
    k = min(cur, lmax)
    out[..., : k + 1, lmax - k : lmax + k + 1] = coeffs[..., : k + 1, cur - k : cur + k + 1]
    return out


def coeffs_to_json(coeffs: np.ndarray, tol: float = 0.0) -> list[dict]:
    """Serialize the m >= 0 half of a real field's coefficients."""
    lmax = coeff_degree(coeffs)
    out = []
    for l in range(lmax + 1):
        for m in range(0, l + 1):
            c = coeffs[l, m + lmax]
            if abs(c) > tol:
                out.append({"l": l, "m": m, "re": float(c.real), "im": float(c.imag)})
    return out


def coeffs_from_json(entries: list[dict], lmax: int) -> np.ndarray:
    """Rebuild a real field's coefficient array, filling m < 0 by conjugate symmetry."""
    a = np.zeros((lmax + 1, 2 * lmax + 1), dtype=complex)
    given = set()
    for e in entries:
        unknown = set(e) - {"l", "m", "re", "im"}
        if unknown:
            raise ValueError(f"unknown coefficient fields {sorted(unknown)}")
        l, m = int(e["l"]), int(e["m"])
        if not (0 <= l <= lmax and -l <= m <= l):
            raise ValueError(f"coefficient index (l={l}, m={m}) outside bandlimit {lmax}")
        c = complex(e["re"], e.get("im", 0.0))
        if m < 0:
            m, c = -m, (-1) ** m * np.conj(c)
            if (l, m) in given:
                if abs(a[l, m + lmax] - c) > 1e-12 * max(1.0, abs(c)):
                    raise ValueError(f"inconsistent conjugate pair at l={l}, m={m}")
                continue
        a[l, m + lmax] = c
        given.add((l, m))
    for l in range(lmax + 1):
        a[l, lmax] = a[l, lmax].real
        for m in range(1, l + 1):
            a[l, lmax - m] = (-1) ** m * np.conj(a[l, lmax + m])
    return a
