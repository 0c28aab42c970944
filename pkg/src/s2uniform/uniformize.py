"""Conformal-factor solver and basepoint normalization.

Given positive curvature data K on the round chart, ``solve_liouville`` finds
u with Delta u = 1 - K exp(2u), so that exp(2u) times the round metric has
curvature K.  ``normalize_at`` then removes the Moebius freedom by dividing
by a round-to-round conformal factor Q that matches the value and gradient
of exp(u) at a basepoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .metric import ConformalMetric, gauss_curvature_conformal, sobolev_norm
from .sht.basis import real_harmonic_matrix
from .sht.calculus import gradient_at, laplacian_round
from .sht.fields import ScalarField
from .sht.transform import SphGrid, cartesian_points

NEWTON_TOL = 1e-10
MAX_NEWTON = 50
BOUND_EXPONENTS = (3, 4, 6)
EXACT = "exact"


class ConvergenceError(RuntimeError):
    """Newton iteration failed; ``residual`` holds the last residual sup norm."""

    def __init__(self, message: str, residual: float, history: list[float]):
        super().__init__(message)
        self.residual = residual
        self.history = history


@dataclass(frozen=True)
class MobiusParams:
    """Boost vector b (rapidity |b|, direction b/|b|) followed by a rotation."""

    boost: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    @property
    def rapidity(self) -> float:
        return float(np.linalg.norm(self.boost))

    @property
    def direction(self) -> np.ndarray:
        s = self.rapidity
        return np.array([0.0, 0.0, 1.0]) if s == 0.0 else np.asarray(self.boost) / s

    def factor_at(self, points) -> np.ndarray:
        """Q(x) = 1 / (cosh s + sinh s <R x, n>) at Cartesian points of shape (3, ...)."""
        s = self.rapidity
        rx = np.einsum("ab,b...->a...", np.asarray(self.rotation, float), np.asarray(points, float))
        return 1.0 / (np.cosh(s) + np.sinh(s) * np.einsum("a,a...->...", self.direction, rx))

    def to_json(self) -> dict:
        return {"boost": [float(b) for b in self.boost],
                "rotation": [[float(r) for r in row] for row in self.rotation]}


def mobius_factor(params: MobiusParams, grid: SphGrid) -> ScalarField:
    """Conformal factor Q with Q^2 times the round metric again round."""
    return ScalarField(grid, params.factor_at(grid.normal))


def _residual(u: ScalarField, K: np.ndarray) -> np.ndarray:
    return laplacian_round(u).values - 1.0 + K * np.exp(2.0 * u.values)


def solve_liouville(K: ScalarField, u0: ScalarField | None = None, tol: float = NEWTON_TOL,
                    max_iters: int = MAX_NEWTON) -> tuple[ScalarField, list[float]]:
    """Galerkin Newton solve of Delta u = 1 - K exp(2u) over harmonics of degree <= L.

    The Jacobian is singular on degree one at the round sphere, so each step
    is the minimal-norm least-squares solution.  Steps are halved until the
    projected residual decreases.  Returns the solution and the history of
    grid residual sup norms.
    """
    grid = K.grid
    kv = K.values
    if kv.min() <= 0.0:
        raise ValueError(f"curvature must be positive; min K = {kv.min():.3g}")
    basis, deg = real_harmonic_matrix(grid)
    flat = basis.reshape(basis.shape[0], -1)
    w = grid.weights.ravel()
    lam = (deg * (deg + 1)).astype(float)

    u = ScalarField.constant(grid, 0.0) if u0 is None else u0.truncated()
    coef = flat @ (w * u.values.ravel())

    def project(res):
        return flat @ (w * res.ravel())

    res = _residual(u, kv)
    r = project(res)
    history = [float(np.abs(res).max())]
    for it in range(max_iters + 1):
        if np.abs(r).max() <= tol and history[-1] <= max(tol, 1e2 * np.abs(r).max()):
            return u, history
        if it == max_iters:
            break
        jac = (flat * (w * 2.0 * (kv * np.exp(2.0 * u.values)).ravel())) @ flat.T
        jac[np.diag_indices_from(jac)] -= lam
        step = scipy.linalg.lstsq(jac, -r, cond=1e-12, lapack_driver="gelsy")[0]
        t, rnorm = 1.0, np.linalg.norm(r)
        for _ in range(30):
            trial_coef = coef + t * step
            trial = ScalarField(grid, (trial_coef @ flat).reshape(grid.shape))
            trial_res = _residual(trial, kv)
            trial_r = project(trial_res)
            if np.linalg.norm(trial_r) < rnorm or rnorm == 0.0:
                break
            t *= 0.5
        else:
            break
        coef, u, res, r = trial_coef, trial, trial_res, trial_r
        history.append(float(np.abs(res).max()))
    raise ConvergenceError(f"Newton did not converge; last residual {history[-1]:.3g}",
                           history[-1], history)


def _point(q) -> np.ndarray:
    return cartesian_points(*q)


def value_and_gradient_at(u: ScalarField, q) -> tuple[float, np.ndarray]:
    theta, phi = q
    return float(u(theta, phi)), gradient_at(u, theta, phi)


def normalize_at(u: ScalarField, q) -> tuple[ScalarField, MobiusParams]:
    """Divide exp(u) by the round-to-round factor matching its 1-jet at q.

    With a = u(q) and v = grad u(q), the factor Q = 1 / (A + B.x) with
    A^2 - |B|^2 = 1 satisfies log Q(q) = a and d log Q(q) = v exactly when
    B_tan = -exp(-a) v and A -/+ B.q are fixed by the unit-hyperboloid
    constraint, so no iteration is required.
    """
    a, v = value_and_gradient_at(u, q)
    x = _point(q)
    v = v - np.dot(v, x) * x
    ea = np.exp(a)
    plus = 1.0 / ea
    minus = ea * (1.0 + np.dot(v, v) / ea**2)
    cosh_s = 0.5 * (plus + minus)
    b = 0.5 * (plus - minus) * x - v / ea
    s = np.arccosh(max(cosh_s, 1.0))
    nb = np.linalg.norm(b)
    boost = np.zeros(3) if nb == 0.0 or s == 0.0 else s * b / nb
    params = MobiusParams(boost=boost)
    logq = np.log(params.factor_at(u.grid.normal))
    return ScalarField(u.grid, u.values - logq), params


def normalization_residual(u: ScalarField, q) -> tuple[float, float]:
    a, v = value_and_gradient_at(u, q)
    x = _point(q)
    return abs(a), float(np.linalg.norm(v - np.dot(v, x) * x))


@dataclass(frozen=True, eq=False)
class UniformizationResult:
    log_omega: ScalarField
    K_in: ScalarField
    mobius: MobiusParams
    basepoint: tuple[float, float]
    newton_iters: int
    residual_linf: float
    normalization_residual: tuple[float, float]
    curvature_mismatch: float
    roundtrip_defect: float
    bound_ratios: dict
    log_omega_ratio: float | str
    history: list[float]
    curvature_range: tuple[float, float] = (1.0, 1.0)  # stands in for the unavailable diameter

    def to_json(self) -> dict:
        from .sht.transform import coeffs_to_json

        return {
            "logOmega": coeffs_to_json(self.log_omega.coeffs, tol=1e-15),
            "basepoint": {"theta": float(self.basepoint[0]), "phi": float(self.basepoint[1])},
            "mobius": self.mobius.to_json(),
            "newton_iters": self.newton_iters,
            "residual_linf": self.residual_linf,
            "normalization_residual": list(self.normalization_residual),
            "curvature_mismatch": self.curvature_mismatch,
            "roundtrip_defect": self.roundtrip_defect,
            "bound_ratios": {str(p): r for p, r in self.bound_ratios.items()},
            "log_omega_ratio": self.log_omega_ratio,
            "curvature_range": list(self.curvature_range),
            "solver_trace": self.history,
        }


def _ratio(num: float, den: float, floor: float = 1e-13):
    if den <= floor:
        return EXACT if num <= floor else float("inf")
    return num / den


def effective_ratios(m: ConformalMetric, omega: ScalarField, K: ScalarField,
                     exponents=BOUND_EXPONENTS) -> dict:
    """||Omega - 1||_{g,2,p} / ||K - 1||_{g,0,p} for each exponent p."""
    out = {}
    for p in exponents:
        num = sobolev_norm(omega - 1.0, m, 2, p)
        den = sobolev_norm(K - 1.0, m, 0, p)
        out[p] = _ratio(num, den)
    return out


def uniformize(m: ConformalMetric, basepoint=None, tol: float = NEWTON_TOL,
               u0: ScalarField | None = None) -> UniformizationResult:
    """Curvature, Liouville solve and basepoint normalization for a conformal metric."""
    q = basepoint if basepoint is not None else (m.basepoint or (np.pi / 2, 0.0))
    q = (float(q[0]), float(q[1]))
    K = gauss_curvature_conformal(m)
    u, history = solve_liouville(K, u0=u0, tol=tol)
    un, params = normalize_at(u, q)
    logq = np.log(mobius_factor(params, m.grid).values)
    k_back = gauss_curvature_conformal(ConformalMetric(ScalarField(m.grid, un.values + logq)))
    # the round chart metric divided by Omega^2 must be round again
    round_back = gauss_curvature_conformal(ConformalMetric(m.log_omega - un))
    omega = un.map(np.exp)
    ratios = effective_ratios(m, omega, K)
    return UniformizationResult(
        log_omega=un,
        K_in=K,
        mobius=params,
        basepoint=q,
        newton_iters=len(history) - 1,
        residual_linf=history[-1],
        normalization_residual=normalization_residual(un, q),
        curvature_mismatch=float(np.abs(k_back.values - K.values).max()),
        roundtrip_defect=float(np.abs(round_back.values - 1.0).max()),
        bound_ratios=ratios,
        log_omega_ratio=_ratio(un.sup(), (K - 1.0).sup()),
        history=history,
        curvature_range=(float(K.values.min()), float(K.values.max())),
    )


__all__ = [
    "ConvergenceError",
    "MobiusParams",
    "mobius_factor",
    "solve_liouville",
    "normalize_at",
    "normalization_residual",
    "UniformizationResult",
    "uniformize",
    "effective_ratios",
    "EXACT",
]
