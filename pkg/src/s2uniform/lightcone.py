"""The Xi tensor of a conformal factor and its lightcone interpretation.

For g = exp(2u) times the round metric, the surface x -> (Omega(x), Omega(x) x)
lies on the future lightcone of the origin in Minkowski space with
eta = diag(-1, 1, 1, 1) and is isometric to (S^2, g).  The second
fundamental form of its ingoing null normal reproduces Xi.  Four-vectors are
stored as arrays of shape (4,) + grid.shape in Minkowski Cartesian
components (t, x, y, z).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp

from .metric import ConformalMetric, curvature_vector, gauss_curvature_conformal, sobolev_norm
from .sht.calculus import (
    div_cart,
    grad_cart,
    hessian_cart,
    laplacian_round,
    tangential_gradient,
    trace_free,
)
from .sht.fields import OneFormField, ScalarField, STTensorField
from .sht.transform import analyze, cartesian_points, evaluate

ETA = np.array([-1.0, 1.0, 1.0, 1.0])
EXACT = "exact"


def minkowski(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minkowski pairing over the leading axis of two four-vector fields."""
    return np.einsum("m,m...,m...->...", ETA, a, b)


def _four(time, space) -> np.ndarray:
    time = np.broadcast_to(time, space.shape[1:])
    return np.concatenate([time[None], space])


@dataclass(frozen=True, eq=False)
class XiTensor:
    """Xi in Cartesian components with its round trace and trace-free part."""

    log_omega: ScalarField
    cart: np.ndarray

    @property
    def grid(self):
        return self.log_omega.grid

    @cached_property
    def trace(self) -> ScalarField:
        return ScalarField(self.grid, np.einsum("aa...->...", self.cart))

    @cached_property
    def hat_cart(self) -> np.ndarray:
        return trace_free(self.cart, self.grid)

    @cached_property
    def hat(self) -> STTensorField:
        return STTensorField.from_cart(self.grid, self.hat_cart)

    @cached_property
    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        e1, e2 = self.grid.e_theta, self.grid.e_phi
        comp = lambda a, b: np.einsum("a...,ab...,b...->...", a, self.cart, b)  # noqa: E731
        return comp(e1, e1), comp(e1, e2), comp(e2, e2)

    def reassembly_defect(self) -> float:
        back = self.hat_cart + 0.5 * self.trace.values * self.grid.projector
        return float(np.abs(back - self.cart).max())

    def curvature(self) -> ScalarField:
        """K = -tr_g Xi / 2 = -exp(-2u) tr Xi / 2."""
        return ScalarField(self.grid, -0.5 * np.exp(-2.0 * self.log_omega.values) * self.trace.values)


def xi_from_logOmega(u: ScalarField) -> XiTensor:
    """Xi = -g + |du|^2 g - 2 du (x) du + 2 Hess u, all in the round metric."""
    grid = u.grid
    du = grad_cart(u)
    p = grid.projector
    xi = (-1.0 + np.sum(du * du, axis=0)) * p - 2.0 * du[:, None] * du[None, :] + 2.0 * hessian_cart(u)
    return XiTensor(u, xi)


def xi_hat_alt(u: ScalarField) -> STTensorField:
    """Trace-free part through the reciprocal factor: -Omega (2 Hess w - Delta w g), w = 1/Omega."""
    grid = u.grid
    w = u.map(lambda v: np.exp(-v))
    hess = hessian_cart(w)
    lap = laplacian_round(w).values
    return STTensorField.from_cart(grid, -np.exp(u.values) * (2.0 * hess - lap * grid.projector))


def divergence_identity_residual(u: ScalarField) -> OneFormField:
    """div Xi_hat + Omega^2 dK, which vanishes identically."""
    grid = u.grid
    xi = xi_from_logOmega(u)
    K = gauss_curvature_conformal(ConformalMetric(u))
    rho = div_cart(xi.hat_cart, grid) + np.exp(2.0 * u.values) * grad_cart(K)
    return OneFormField.from_cart(grid, rho)


@dataclass(frozen=True, eq=False)
class NullFrame:
    """Conjugate null normals of the cone section and its tangent frame."""

    log_omega: ScalarField
    position: np.ndarray
    L: np.ndarray
    Lbar: np.ndarray
    tangents: np.ndarray  # (2, 4) + grid.shape, pushforwards of e_theta and e_phi

    @property
    def grid(self):
        return self.log_omega.grid

    def null_coordinates(self, vec: np.ndarray) -> np.ndarray:
        """Components along (d_ubar, d_u, Omega e_theta, Omega e_phi)."""
        x = self.grid.normal
        omega = np.exp(self.log_omega.values)
        radial = np.einsum("a...,a...->...", vec[1:], x)
        a, b = 0.5 * (vec[0] + radial), 0.5 * (vec[0] - radial)
        c1 = np.einsum("a...,a...->...", vec[1:], self.grid.e_theta) / omega
        c2 = np.einsum("a...,a...->...", vec[1:], self.grid.e_phi) / omega
        return np.stack([a, b, c1, c2])

    def invariants(self) -> dict:
        """Sup-norm defects of nullity, conjugacy and normality."""
        tang = max(float(np.abs(minkowski(v, t)).max()) for v in (self.L, self.Lbar) for t in self.tangents)
        return {
            "null_L": float(np.abs(minkowski(self.L, self.L)).max()),
            "null_Lbar": float(np.abs(minkowski(self.Lbar, self.Lbar)).max()),
            "conjugacy": float(np.abs(minkowski(self.Lbar, self.L) + 2.0).max()),
            "normality": tang,
        }


def _jets(u: ScalarField):
    """Values and ambient derivatives of the building blocks of the frames.

    Returns exp(u), grad u and, for each Cartesian direction a, the ambient
    derivative of the Cartesian vector field grad u, which is
    Hess u(a, .) - <grad u, a> x.
    """
    grid = u.grid
    du = grad_cart(u)
    hess = hessian_cart(u)
    # grad u is tangential, so its ambient derivative along P e_a is Hess[a, :] - du_a x
    d_du = hess - du[:, None] * grid.normal[None, :]
    return np.exp(u.values), du, hess, d_du


def lightcone_frames(u: ScalarField) -> NullFrame:
    """L = Omega d_ubar and Lbar = Omega^-1 (d_u + Omega^-2 |dOmega|^2 d_ubar + 2 Omega^-2 grad Omega)."""
    grid = u.grid
    omega, du, _, _ = _jets(u)
    x = grid.normal
    ones = np.ones(grid.shape)
    d_ub = _four(ones, x)
    d_u = _four(ones, -x)
    position = omega * d_ub
    grad_omega = omega * du
    lbar = (d_u + np.sum(du * du, axis=0) * d_ub + _four(0.0 * ones, 2.0 * du)) / omega
    # tangent pushforward of a round unit vector v: Omega[(v.du)(1, x) + (0, v)]
    tangents = []
    for e in (grid.e_theta, grid.e_phi):
        dv = np.einsum("a...,a...->...", e, grad_omega)
        tangents.append(dv * d_ub + omega * _four(0.0 * ones, e))
    return NullFrame(u, position, position.copy(), lbar, np.stack(tangents))


@dataclass(frozen=True, eq=False)
class SecondForms:
    """chi and chibar in round-chart Cartesian components, with the induced metric."""

    log_omega: ScalarField
    chi: np.ndarray
    chibar: np.ndarray
    induced: np.ndarray

    @property
    def grid(self):
        return self.log_omega.grid

    @cached_property
    def metric(self) -> ConformalMetric:
        return ConformalMetric(self.log_omega)

    def trace_chibar(self) -> np.ndarray:
        return np.einsum("ab...,ab...->...", self.metric.Ginv, self.chibar)

    def chibar_hat(self) -> np.ndarray:
        return self.chibar - 0.5 * self.trace_chibar() * self.metric.G

    def expansions(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.metric
        return (np.einsum("ab...,ab...->...", g.Ginv, self.chi), self.trace_chibar())

    def asymmetry(self) -> float:
        return float(np.abs(self.chibar - self.chibar.swapaxes(0, 1)).max())


def _ambient_derivatives(u: ScalarField):
    """Ambient derivatives of the position and of Lbar along each Cartesian direction.

    Both are differentiated by the product rule from grad u and Hess u, so
    the result is exact for band-limited u.
    """
    grid = u.grid
    omega, du, hess, d_du = _jets(u)
    x = grid.normal
    ones = np.ones(grid.shape)
    d_ub = _four(ones, x)
    d_u = _four(ones, -x)
    sq = np.sum(du * du, axis=0)
    lbar = (d_u + sq * d_ub + _four(0.0 * ones, 2.0 * du)) / omega
    p = grid.projector
    # D_a x = P[a, :], D_a (1, x) = (0, P[a]), D_a (1, -x) = (0, -P[a])
    d_lbar = []
    d_pos = []
    for a in range(3):
        pa = p[a]
        da_u = du[a]
        da_sq = 2.0 * np.einsum("b...,b...->...", hess[a], du)
        d_sp = d_du[a]
        term = (_four(0.0 * ones, -pa) + da_sq * d_ub + sq * _four(0.0 * ones, pa)
                + _four(0.0 * ones, 2.0 * d_sp)) / omega
        d_lbar.append(-da_u * lbar + term)
        d_pos.append(omega * (da_u * d_ub + _four(0.0 * ones, pa)))
    return np.stack(d_pos), np.stack(d_lbar)


def second_forms(u: ScalarField) -> SecondForms:
    """chi(X, Y) = eta(D_X L, Y) and chibar(X, Y) = eta(D_X Lbar, Y) on the cone section."""
    d_pos, d_lbar = _ambient_derivatives(u)
    pair = lambda a, b: np.einsum("m,am...,bm...->ab...", ETA, a, b)  # noqa: E731
    induced = pair(d_pos, d_pos)
    # L is the position vector, so D_X L = D_X P
    return SecondForms(u, pair(d_pos, d_pos), pair(d_lbar, d_pos), induced)


def chibar_spectral(u: ScalarField) -> np.ndarray:
    """chibar from spectral differentiation of the Lbar components (independent check)."""
    frames = lightcone_frames(u)
    grid = u.grid
    d_lbar = tangential_gradient(frames.Lbar, grid)
    d_pos = tangential_gradient(frames.position, grid)
    return np.einsum("m,am...,bm...->ab...", ETA, d_lbar, d_pos)


def structure_equation_report(u: ScalarField) -> dict:
    """Sup-norm residuals of the Gauss, Codazzi, trace and divergence equations."""
    grid = u.grid
    forms = second_forms(u)
    m = forms.metric
    chib = forms.chibar
    G = m.G
    e1, e2 = grid.e_theta, grid.e_phi
    comp = lambda t, a, b: np.einsum("a...,ab...,b...->...", a, t, b)  # noqa: E731

    # Gauss: R_1212 = g(R(e1, e2) e1, e2) = -g(R(e1, e2) e2, e1)
    r = curvature_vector(m.christoffel, grid)
    r1212 = -np.einsum("a...,ab...,b...->...", r, G, e1)
    g11, g12, g22 = comp(G, e1, e1), comp(G, e1, e2), comp(G, e2, e2)
    c11, c12, c22 = comp(chib, e1, e1), comp(chib, e1, e2), comp(chib, e2, e2)
    gauss_rhs = 0.5 * (g11 * c22 + c11 * g22 - g12 * c12 - c12 * g12)
    gauss = float(np.abs(r1212 - gauss_rhs).max())

    dchib = m.covariant_derivative(chib)
    codazzi = float(np.abs(dchib - dchib.swapaxes(0, 1)).max())

    K = gauss_curvature_conformal(m)
    tr = forms.trace_chibar()
    trace = float(np.abs(K.values + 0.5 * tr).max())

    hat = forms.chibar_hat()
    div_hat = np.einsum("ab...,abc...->c...", m.Ginv, m.covariant_derivative(hat))
    d_tr = tangential_gradient(tr, grid)
    div_eq = div_hat - 0.5 * d_tr
    divergence = float(np.sqrt(m.pointwise_norm_sq(div_eq)).max())

    rho = divergence_identity_residual(u).cart
    consistency = float(np.abs(m.omega_sq * div_eq - rho).max())
    return {
        "gauss": gauss,
        "codazzi": codazzi,
        "trace": trace,
        "divergence": divergence,
        "divergence_consistency": consistency,
    }


# ---------------------------------------------------------------- geodesics


def _geodesic_basis(q, direction: float) -> tuple[np.ndarray, np.ndarray]:
    theta, phi = q
    x = cartesian_points(theta, phi)
    if np.sin(theta) < 1e-12:
        e1, e2 = np.array([1.0, 0.0, 0.0]), np.array([0.0, np.sign(x[2]), 0.0])
    else:
        e1 = np.array([np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), -np.sin(theta)])
        e2 = np.array([-np.sin(phi), np.cos(phi), 0.0])
    t = np.cos(direction) * e1 + np.sin(direction) * e2
    return x, t


@dataclass(frozen=True)
class GeodesicTrace:
    """Integrated and directly evaluated quantities along one great circle."""

    s: np.ndarray
    direct: dict
    integrated: dict
    integral_formula: np.ndarray

    def deviations(self) -> dict:
        out = {k: float(np.abs(self.integrated[k] - self.direct[k]).max()) for k in self.integrated}
        out["integral_formula"] = float(np.abs(self.integral_formula - self.direct["e2_log_omega"]).max())
        return out

    def max_deviation(self) -> float:
        return max(self.deviations().values())


class _Sources:
    """Spectral coefficients of u, du, Xi_hat and K for evaluation off the grid."""

    def __init__(self, u: ScalarField):
        grid = u.grid
        xi = xi_from_logOmega(u)
        K = gauss_curvature_conformal(ConformalMetric(u))
        stack = np.concatenate([u.values[None], grad_cart(u), xi.hat_cart.reshape(9, *grid.shape),
                                K.values[None]])
        self.coeffs = analyze(stack, grid, grid.lmax)
        self.lmax = grid.lmax

    def at(self, points: np.ndarray):
        th = np.arccos(np.clip(points[2], -1.0, 1.0))
        ph = np.arctan2(points[1], points[0])
        vals = evaluate(self.coeffs, th, ph)
        return vals[0], vals[1:4], vals[4:13].reshape((3, 3) + vals.shape[1:]), vals[13]


class _CircleSeries:
    """Exact trigonometric interpolation of band-limited data along a great circle.

    A harmonic of degree N restricted to a great circle is a trigonometric
    polynomial of degree N in arclength, and contracting with the rotating
    tangent raises the degree by at most two, so equispaced samples
    determine every quantity exactly.
    """

    def __init__(self, src: _Sources, x0: np.ndarray, t0: np.ndarray):
        e2 = np.cross(x0, t0)
        n = 2 * (src.lmax + 3) + 2
        s = 2.0 * np.pi * np.arange(n) / n
        pts = np.cos(s) * x0[:, None] + np.sin(s) * t0[:, None]
        e1 = -np.sin(s) * x0[:, None] + np.cos(s) * t0[:, None]
        u, du, xi, k = src.at(pts)
        rows = np.stack([
            u,
            np.einsum("as,as->s", du, e1),
            np.einsum("as,a->s", du, e2),
            np.einsum("as,abs,bs->s", e1, xi, e1),
            np.einsum("as,abs,b->s", e1, xi, e2),
            k,
        ])
        self.names = ("log_omega", "d_log_omega", "e2_log_omega", "xi11", "xi12", "K")
        self.coef = np.fft.rfft(rows, axis=-1) / n
        self.coef[:, 1:] *= 2.0
        if n % 2 == 0:
            self.coef[:, -1] *= 0.5
        self.freq = np.arange(self.coef.shape[1])

    def __call__(self, s) -> np.ndarray:
        phase = np.exp(1j * np.multiply.outer(np.atleast_1d(s), self.freq))
        return (phase @ self.coef.T).real.T


def geodesic_ode_check(u: ScalarField, q, direction: float, s_max: float = np.pi - 0.2,
                       n_samples: int = 200, rtol: float = 1e-12, atol: float = 1e-13,
                       sources: _Sources | None = None) -> GeodesicTrace:
    """Integrate the along-geodesic equations for log Omega and compare with the field.

    State: U = log Omega, U', Z = e2 log Omega, w = Omega^(-1/2), w', and
    V = e2 (1/Omega).  The great circle leaves q in the given direction,
    measured from e_theta towards e_phi.  Sources Xi_hat(e1, e1),
    Xi_hat(e1, e2) and K are sampled spectrally along it.
    """
    src = _Sources(u) if sources is None else sources
    x0, t0 = _geodesic_basis(q, direction)
    u0, du0, _, _ = src.at(x0[:, None])
    du0 = du0[:, 0] - np.dot(du0[:, 0], x0) * x0
    if abs(u0[0]) > 1e-8 or np.linalg.norm(du0) > 1e-8:
        raise ValueError(f"u is not normalized at the basepoint (|u| = {abs(u0[0]):.2e}, "
                         f"|du| = {np.linalg.norm(du0):.2e})")
    series = _CircleSeries(src, x0, t0)

    def rhs(s, y):
        U, Up, Z, w, wp, V = y
        _, _, _, xi11, xi12, k = series(s)[:, 0]
        eU = np.exp(2.0 * U)
        Upp = 0.5 * (Up**2 - eU + 1.0 - Z**2 + xi11 + (1.0 - k) * eU)
        wpp = 0.25 * (w**-3 - w + w * Z**2 - w * xi11 + (k - 1.0) * w**-3)
        return [Up, Upp, Up * Z + 0.5 * xi12, wp, wpp, -0.5 * np.exp(-U) * xi12]

    s = np.linspace(0.0, s_max, n_samples)
    sol = solve_ivp(rhs, (0.0, s_max), [0.0, 0.0, 0.0, 1.0, 0.0, 0.0], method="DOP853",
                    t_eval=s, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"geodesic integration failed: {sol.message}")

    uu, _, z, _, _, _ = series(s)
    direct = {
        "log_omega": uu,
        "e2_log_omega": z,
        "omega_inv_sqrt": np.exp(-0.5 * uu),
        "e2_omega_inv": -np.exp(-uu) * z,
    }
    integrated = {
        "log_omega": sol.y[0],
        "e2_log_omega": sol.y[2],
        "omega_inv_sqrt": sol.y[3],
        "e2_omega_inv": sol.y[5],
    }

    # integral formula: Z(s) = int_0^s exp(U(s) - U(s')) Xi_hat(e1, e2)(s') / 2 ds'
    nodes, weights = np.polynomial.legendre.leggauss(64)
    sp = 0.5 * s[:, None] * (nodes[None, :] + 1.0)
    vals = series(sp.ravel()).reshape(6, *sp.shape)
    integrand = np.exp(uu[:, None] - vals[0]) * 0.5 * vals[4]
    formula = 0.5 * s * np.sum(weights * integrand, axis=1)
    return GeodesicTrace(s, direct, integrated, formula)


def geodesic_sweep(u: ScalarField, q, n_directions: int = 8, **kwargs) -> dict:
    """Run the geodesic check over equally spaced directions at q."""
    src = _Sources(u)
    traces = [geodesic_ode_check(u, q, 2.0 * np.pi * k / n_directions, sources=src, **kwargs)
              for k in range(n_directions)]
    along = max(float(np.abs(t.direct["log_omega"]).max()) for t in traces)
    return {
        "max_deviation": max(t.max_deviation() for t in traces),
        "per_direction": [t.deviations() for t in traces],
        "sup_along_geodesics": along,
        "sup_global": u.sup(),
    }


# ------------------------------------------------------------- estimate ratios


def _ratio(num: float, den: float, floor: float = 1e-13):
    if den <= floor:
        return EXACT if num <= floor else float("inf")
    return num / den


def check_exponents(p: float, q: float, r: float | None = None) -> dict:
    """Validate exponents for the L2 estimate and report whether the Lp one applies.

    The L2 estimate needs p >= 2 and 1/p + 1/q < 1.  The Lp estimate uses the
    triple (p, q, r) with 1/q + 1/r = 1/2 + 1/p and q >= p.
    """
    if p < 2 or 1.0 / p + 1.0 / q >= 1.0:
        raise ValueError(f"L2 estimate needs p >= 2 and 1/p + 1/q < 1; got p={p}, q={q}")
    lp_ok = r is not None and abs(1.0 / q + 1.0 / r - 0.5 - 1.0 / p) < 1e-12 and q >= p and p > 2
    return {"l2": True, "lp": bool(lp_ok)}


def xi_hat_ratios(u: ScalarField, p: float, q: float, r: float | None = None, k: float = 1.0) -> dict:
    """Empirical constants of the L2 and Lp estimates of Xi_hat.

    L2: ||Xi_hat||_{0,2} / (||Omega^2||_{1,q} ||K - k||_{0,p}).
    Lp: ||Xi_hat||_{0,p} / (||Omega^2||_{1,r} ||K - k||_{0,q}), only when the
    exponents satisfy its constraint.  All norms are round.
    """
    flags = check_exponents(p, q, r)
    grid = u.grid
    rnd = ConformalMetric.round(grid)
    xi = xi_from_logOmega(u).hat_cart
    K = gauss_curvature_conformal(ConformalMetric(u))
    om2 = u.map(lambda v: np.exp(2.0 * v))
    out = {"l2": _ratio(sobolev_norm(xi, rnd, 0, 2),
                        sobolev_norm(om2, rnd, 1, q) * sobolev_norm(K - k, rnd, 0, p))}
    if flags["lp"]:
        out["lp"] = _ratio(sobolev_norm(xi, rnd, 0, p),
                           sobolev_norm(om2, rnd, 1, r) * sobolev_norm(K - k, rnd, 0, q))
    else:
        out["lp"] = "not applicable"
    return out


def xi_hat_estimate_check(members, p: float, q: float, r: float | None = None, k: float = 1.0,
                           ceiling: float = 1e3) -> dict:
    """Ratios over an ensemble of log-conformal factors, with the maximum and ceiling flags."""
    per = [xi_hat_ratios(u, p, q, r, k) for u in members]
    numeric = [x["l2"] for x in per if not isinstance(x["l2"], str)]
    mx = max(numeric) if numeric else EXACT
    return {
        "ratios": per,
        "max_l2": mx,
        "exceeds_ceiling": [i for i, x in enumerate(per)
                            if not isinstance(x["l2"], str) and x["l2"] > ceiling],
        "exponents": {"p": p, "q": q, "r": r, "k": k},
    }


def xi_hat_k_sweep(u: ScalarField, p: float, q: float, ks) -> dict:
    """L2 ratio as a function of the subtracted constant k."""
    return {float(k): xi_hat_ratios(u, p, q, None, k)["l2"] for k in ks}


__all__ = [
    "ETA",
    "minkowski",
    "XiTensor",
    "xi_from_logOmega",
    "xi_hat_alt",
    "divergence_identity_residual",
    "NullFrame",
    "lightcone_frames",
    "SecondForms",
    "second_forms",
    "chibar_spectral",
    "structure_equation_report",
    "GeodesicTrace",
    "geodesic_ode_check",
    "geodesic_sweep",
    "check_exponents",
    "xi_hat_ratios",
    "xi_hat_estimate_check",
    "xi_hat_k_sweep",
]
