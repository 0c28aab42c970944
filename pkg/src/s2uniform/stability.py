"""First eigenspaces, isometric embeddings and stability of uniformization.

The Laplacian of a metric g is discretized by Galerkin projection onto the
real harmonics of degree <= L, which gives the generalized symmetric problem
``S c = mu M c`` with stiffness ``int g^{-1}(df, dh) dvol_g`` and mass
``int f h dvol_g``.  Eigenvalues follow the positive convention (spectrum of
-Delta_g), so the first nonzero cluster of a unit round metric sits at 2.
Its L2(g)-orthonormal bases give embeddings sqrt(4 pi / 3) (v1, v2, v3) into
the unit sphere, and two such embeddings are compared by orthogonal
Procrustes alignment.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .metric import ConformalMetric, PerturbedMetric, SphereMetric, metric_distance, sobolev_norm
from .sht.basis import real_harmonic_matrix
from .sht.calculus import div_cart, grad_cart, tangential_gradient
from .sht.fields import ScalarField, _same_grid
from .sht.transform import SphGrid
from .uniformize import EXACT, NEWTON_TOL, uniformize

FIRST_EIGENVALUE = 2.0
CLUSTER_SIZE = 3
MIN_GAP = 0.5
MAX_GRAM_CONDITION = 10.0
EMBEDDING_SCALE = np.sqrt(4.0 * np.pi / 3.0)
DELTA_0 = 0.2


class SpectralClusterError(ValueError):
    """No isolated three-dimensional cluster near the first round eigenvalue."""


@functools.lru_cache(maxsize=4)
def _basis_gradients(grid: SphGrid):
    values, deg = real_harmonic_matrix(grid)
    grads = tangential_gradient(values, grid, grid.L)  # (3, N) + grid.shape
    return values, np.moveaxis(grads, 0, 1), deg


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Lowest eigenpairs of -Delta_g with L2(g)-orthonormal eigenfields."""

    metric: SphereMetric
    eigenvalues: np.ndarray
    coefficients: np.ndarray  # (count, N) in the real harmonic basis
    weak_residual: float

    @property
    def grid(self) -> SphGrid:
        return self.metric.grid

    @functools.cached_property
    def fields(self) -> list[ScalarField]:
        values, _, _ = _basis_gradients(self.grid)
        vals = np.tensordot(self.coefficients, values, axes=(1, 0))
        return [ScalarField(self.grid, v) for v in vals]

    def strong_residual(self, index: int) -> float:
        """||-Delta_g v - mu v||_{L2(g)} evaluated on the grid."""
        g, v = self.metric, self.fields[index]
        flux = g.sqrt_det * np.einsum("ab...,b...->a...", g.Ginv, grad_cart(v))
        lap = div_cart(flux, self.grid) / g.sqrt_det
        r = -lap - self.eigenvalues[index] * v.values
        return float(np.sqrt(g.integrate(r**2)))

    def cluster(self, target: float = FIRST_EIGENVALUE, size: int = CLUSTER_SIZE,
                min_gap: float = MIN_GAP) -> np.ndarray:
        """Indices of the isolated cluster of ``size`` eigenvalues closest to ``target``."""
        mu = self.eigenvalues
        if len(mu) < size + 2:
            raise SpectralClusterError(f"need at least {size + 2} eigenvalues, have {len(mu)}")
        starts = range(1, len(mu) - size)
        best = min(starts, key=lambda i: np.abs(mu[i:i + size] - target).max())
        below = mu[best] - mu[best - 1]
        above = mu[best + size] - mu[best + size - 1]
        if min(below, above) < min_gap:
            raise SpectralClusterError(
                f"cluster {np.round(mu[best:best + size], 4).tolist()} is not separated: "
                f"gaps {below:.3g} below and {above:.3g} above, need {min_gap}")
        return np.arange(best, best + size)

    def first_cluster(self) -> list[ScalarField]:
        return [self.fields[i] for i in self.cluster()]


def galerkin_spectrum(g: SphereMetric, count: int = 16) -> EigenDecomposition:
    """Lowest ``count`` eigenpairs of -Delta_g over harmonics of degree <= L."""
    grid = g.grid
    values, grads, _ = _basis_gradients(grid)
    n = values.shape[0]
    if not 1 <= count <= n:
        raise ValueError(f"count must lie in 1..{n}, got {count}")
    w = g.volume_weights
    flat = values.reshape(n, -1)
    mass = (flat * w.ravel()) @ flat.T
    flux = np.einsum("ab...,nb...->na...", g.Ginv, grads) * w
    stiff = flux.reshape(n, -1) @ grads.reshape(n, -1).T
    stiff = 0.5 * (stiff + stiff.T)
    try:
        mu, vec = scipy.linalg.eigh(stiff, mass, subset_by_index=[0, count - 1])
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"mass matrix is not positive definite: {exc}") from exc
    res = stiff @ vec - (mass @ vec) * mu
    scale = max(1.0, float(np.abs(mu).max()))
    weak = float(np.abs(res).max() / scale)
    return EigenDecomposition(g, mu, vec.T, weak)


def _inner(a: ScalarField, b: ScalarField, g: SphereMetric) -> float:
    return float(g.integrate(a.values * b.values))


def project_first_eigenspace(v: ScalarField, target: EigenDecomposition) -> ScalarField:
    """L2(g)-orthogonal projection of v onto the first cluster of ``target``."""
    _same_grid(v.grid, target.grid)
    g = target.metric
    out = np.zeros(v.grid.shape)
    for e in target.first_cluster():
        out = out + _inner(v, e, g) * e.values
    return ScalarField(v.grid, out)


def projection_orthogonality(v: ScalarField, vbar: ScalarField, target: EigenDecomposition) -> float:
    """max_k |<v - vbar, e_k>_g| over the first cluster; zero for an exact projection."""
    g = target.metric
    return max(abs(_inner(v - vbar, e, g)) for e in target.first_cluster())


def gram_matrix(fields, g: SphereMetric) -> np.ndarray:
    vals = np.stack([f.values for f in fields])
    return np.einsum("kxy,lxy,xy->kl", vals, vals, g.volume_weights)


@dataclass(frozen=True, eq=False)
class GramSchmidtResult:
    basis: list[ScalarField]
    gram: np.ndarray
    orthonormality_defect: float  # max |<vbar_k, vbar_l> - delta_kl|
    deviation: float  # max_k ||vbar_k - vbar'_k||_{L2(g)}


def gram_schmidt(vbars, g2: SphereMetric) -> GramSchmidtResult:
    """Orthonormalize in L2(g2), in order, via the Cholesky factor of the Gram matrix."""
    gram = gram_matrix(vbars, g2)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond >= MAX_GRAM_CONDITION:
        raise ValueError(f"Gram matrix is nearly singular (condition number {cond:.3g})")
    lower = np.linalg.cholesky(gram)
    mix = np.linalg.inv(lower)  # row k combines vbar_0..vbar_k
    vals = np.stack([f.values for f in vbars])
    new = np.tensordot(mix, vals, axes=(1, 0))
    basis = [ScalarField(g2.grid, v) for v in new]
    dev = max(float(np.sqrt(g2.integrate((a.values - b.values) ** 2))) for a, b in zip(vbars, basis))
    return GramSchmidtResult(basis, gram, float(np.abs(gram - np.eye(len(vbars))).max()), dev)


@dataclass(frozen=True, eq=False)
class Embedding:
    """Map x -> sqrt(4 pi / 3) (v1, v2, v3)(x) into Euclidean space."""

    grid: SphGrid
    values: np.ndarray  # (3,) + grid.shape

    @property
    def components(self) -> list[ScalarField]:
        return [ScalarField(self.grid, v) for v in self.values]

    def radius_defect(self) -> float:
        """sup | |Phi|^2 - 1 |."""
        return float(np.abs(np.sum(self.values**2, axis=0) - 1.0).max())

    def pullback_metric(self) -> np.ndarray:
        """Phi^* of the Euclidean metric in Cartesian components."""
        d = np.stack([grad_cart(c) for c in self.components])  # (3, 3) + shape: [component, a]
        return np.einsum("ca...,cb...->ab...", d, d)

    def isometry_defect(self, g: SphereMetric) -> float:
        return float(np.abs(self.pullback_metric() - g.G).max())

    def image_area(self) -> float:
        """Area of the pulled-back metric, integrated over the round measure."""
        pm = PerturbedMetric(self.grid, self.pullback_metric() - self.grid.projector)
        return pm.area()

    def at_points(self, points) -> np.ndarray:
        return np.stack([c.at_points(points) for c in self.components])

    def compose(self, rotation) -> "Embedding":
        """The embedding x -> Phi(R x)."""
        pts = np.einsum("ab,b...->a...", np.asarray(rotation, float), self.grid.normal)
        return Embedding(self.grid, self.at_points(pts))


def build_embedding(basis) -> Embedding:
    grid = basis[0].grid
    for b in basis:
        _same_grid(grid, b.grid)
    if len(basis) != 3:
        raise ValueError(f"an embedding needs three functions, got {len(basis)}")
    return Embedding(grid, EMBEDDING_SCALE * np.stack([b.values for b in basis]))


@dataclass(frozen=True)
class RigidMotion:
    matrix: np.ndarray

    @property
    def determinant(self) -> int:
        return int(np.sign(np.linalg.det(self.matrix)))

    def orthogonality_defect(self) -> float:
        return float(np.abs(self.matrix.T @ self.matrix - np.eye(3)).max())

    def apply(self, emb: Embedding) -> Embedding:
        return Embedding(emb.grid, np.einsum("ab,b...->a...", self.matrix, emb.values))

    def to_json(self) -> dict:
        return {"matrix": [[float(x) for x in row] for row in self.matrix],
                "determinant": self.determinant}


@dataclass(frozen=True, eq=False)
class RigidFit:
    motion: RigidMotion
    cross_covariance: np.ndarray
    residual_l2: float
    residual_sup: float
    residual_sobolev: float
    weights_total: float = field(repr=False, default=0.0)
    self_terms: float = field(repr=False, default=0.0)

    def residual_sq_for(self, matrix: np.ndarray) -> np.ndarray:
        """Weighted squared L2 residual for candidate orthogonal matrices (..., 3, 3)."""
        return self.self_terms - 2.0 * np.einsum("...ab,ab->...", matrix, self.cross_covariance)


def fit_rigid_motion(phi1: Embedding, phi2: Embedding, g1: SphereMetric,
                     n: int = 3, p: float = 4.0) -> RigidFit:
    """Weighted orthogonal Procrustes: O in O(3) minimizing int |Phi2 - O Phi1|^2 dvol_g1.

    The optimum over the full orthogonal group is U V^T for the singular
    value decomposition U S V^T of the cross-covariance.  The residual is
    reported in L2(g1), in sup norm and in the order-n, exponent-p Sobolev
    norm of g1 (the three components combined in l^p).
    """
    _same_grid(phi1.grid, phi2.grid)
    w = g1.volume_weights
    cross = np.einsum("axy,bxy,xy->ab", phi2.values, phi1.values, w)
    u, s, vt = np.linalg.svd(cross)
    if s[-1] <= 1e-10 * max(s[0], 1e-300):
        raise ValueError(f"cross-covariance is rank deficient (singular values {s})")
    motion = RigidMotion(u @ vt)
    diff = phi2.values - motion.apply(phi1).values
    l2 = float(np.sqrt(np.sum(g1.integrate(diff**2))))
    sob = sum(sobolev_norm(ScalarField(g1.grid, d), g1, n, p) ** p for d in diff) ** (1.0 / p)
    self_terms = float(np.sum(g1.integrate(phi1.values**2 + phi2.values**2)))
    return RigidFit(motion, cross, l2, float(np.abs(diff).max()), float(sob),
                    float(w.sum()), self_terms)


def random_orthogonal(count: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed matrices of O(3), both determinants, shape (count, 3, 3)."""
    q, r = np.linalg.qr(rng.standard_normal((count, 3, 3)))
    return q * np.sign(np.einsum("...ii->...i", r))[:, None, :]


@functools.lru_cache(maxsize=2)
def _candidates(samples: int, seed: int) -> np.ndarray:
    out = random_orthogonal(samples, np.random.default_rng(seed))
    out.setflags(write=False)
    return out


def procrustes_spot_check(fit: RigidFit, samples: int = 10**6, seed: int = 0) -> dict:
    """Compare the fitted residual with random orthogonal candidates.

    Returns the fitted squared residual, the best random one and the number
    of candidates that beat the fit beyond roundoff.  Candidates are cached
    per (samples, seed), so repeated checks reuse the same draw.
    """
    best_fit = float(fit.residual_sq_for(fit.motion.matrix))
    res = fit.residual_sq_for(_candidates(samples, seed))
    tol = 1e-12 * max(1.0, fit.self_terms)
    return {"fit": best_fit, "best_random": float(res.min()),
            "beaten": int(np.count_nonzero(res < best_fit - tol)), "samples": samples}


def first_embedding(g: SphereMetric, count: int = 9) -> tuple[Embedding, EigenDecomposition]:
    spectrum = galerkin_spectrum(g, count)
    return build_embedding(spectrum.first_cluster()), spectrum


@dataclass(frozen=True, eq=False)
class ProjectionReport:
    """Eigenspace projection between two metrics measured against their distance."""

    delta: float
    relative_errors: list[float]  # ||v_k - vbar_k||_{g1,n+1,p} / ||v_k||_{g1,n+1,p}
    orthonormality_defect: float
    gram_schmidt_deviation: float
    orthogonality_residual: float
    eigenvalues_1: np.ndarray
    eigenvalues_2: np.ndarray
    basis_1: list[ScalarField]
    basis_2: list[ScalarField]

    @property
    def projection_ratio(self) -> float:
        return max(self.relative_errors) / self.delta

    @property
    def orthonormality_ratio(self) -> float:
        return self.orthonormality_defect / self.delta


def eigenspace_projection(g1: SphereMetric, g2: SphereMetric, n: int = 2, p: float = 4.0,
                          count: int = 9, delta: float | None = None) -> ProjectionReport:
    """Project an orthonormal first-eigenbasis of g1 onto the first eigenspace of g2."""
    s1, s2 = galerkin_spectrum(g1, count), galerkin_spectrum(g2, count)
    v = s1.first_cluster()
    vbar = [project_first_eigenspace(f, s2) for f in v]
    d = metric_distance(g1, g2, n, p) if delta is None else delta
    rel = [sobolev_norm(a - b, g1, n + 1, p) / sobolev_norm(a, g1, n + 1, p) for a, b in zip(v, vbar)]
    gs = gram_schmidt(vbar, g2)
    orth = max(projection_orthogonality(a, b, s2) for a, b in zip(v, vbar))
    return ProjectionReport(d, rel, gs.orthonormality_defect, gs.deviation, orth,
                            s1.eigenvalues, s2.eigenvalues, v, gs.basis)


def _ratio(value: float, delta: float, floor: float = 1e-13):
    if delta <= floor:
        return EXACT if value <= 1e-10 else float("inf")
    return value / delta


def _scaled(m: ConformalMetric, log_factor: float) -> ConformalMetric:
    return ConformalMetric(m.log_omega + log_factor, m.basepoint)


@dataclass(frozen=True, eq=False)
class StabilityReport:
    delta: float
    p: float
    log_ratio_sup: float
    log_ratio_sobolev: float
    round_distance: float
    embedding_residual: float
    embedding_residual_l2: float
    rigid_motion: RigidMotion
    ratios: dict
    ceilings: dict
    embeddings: tuple[Embedding, Embedding] = field(repr=False)
    round_metrics: tuple[ConformalMetric, ConformalMetric] = field(repr=False)
    fit: RigidFit | None = field(repr=False, default=None)

    @property
    def passed(self) -> bool:
        return all(r == EXACT or r <= self.ceilings[k] for k, r in self.ratios.items())

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "p": self.p,
            "log_ratio_sup": self.log_ratio_sup,
            "log_ratio_sobolev": self.log_ratio_sobolev,
            "round_distance": self.round_distance,
            "embedding_residual": self.embedding_residual,
            "embedding_residual_l2": self.embedding_residual_l2,
            "rigid_motion": self.rigid_motion.to_json(),
            "ratios": self.ratios,
            "ceilings": self.ceilings,
            "pass": self.passed,
        }


DEFAULT_CEILINGS = {"log_ratio_sup": 1e3, "log_ratio_sobolev": 1e3,
                    "round_distance": 1e3, "embedding_residual": 1e3}


@dataclass(frozen=True, eq=False)
class UniformizedSide:
    """One metric after area scaling, uniformization at q and embedding of its round metric."""

    metric: ConformalMetric
    log_shift: float
    log_omega: ScalarField
    round_metric: ConformalMetric
    embedding: Embedding


def uniformized_side(g: ConformalMetric, q, log_shift: float | None = None, count: int = 9,
                     tol: float = NEWTON_TOL) -> UniformizedSide:
    """Scale g by exp(2 log_shift) (default: to area 4 pi), uniformize and embed."""
    if not isinstance(g, ConformalMetric):
        raise TypeError("the uniformizer needs the metric in conformal form")
    shift = 0.5 * np.log(4.0 * np.pi / g.area()) if log_shift is None else log_shift
    g = _scaled(g, shift)
    u = uniformize(g, q, tol=tol).log_omega
    rnd = ConformalMetric(g.log_omega - u)
    phi, _ = first_embedding(rnd, count)
    return UniformizedSide(g, float(shift), u, rnd, phi)


def stability_experiment(g1: ConformalMetric, g2: ConformalMetric, q, p: float = 4.0,
                         delta0: float = DELTA_0, ceilings: dict | None = None,
                         count: int = 9, tol: float = NEWTON_TOL,
                         reference: UniformizedSide | None = None) -> StabilityReport:
    """Uniformize two nearby metrics at q and compare factors, round metrics and embeddings.

    Both metrics are first scaled by the common constant that gives g1 area
    4 pi.  delta is the order-2, exponent-p distance of the scaled metrics.
    The embeddings are built from first eigenfunctions of the round metrics
    g_a / Omega_a^2 and aligned by a rigid motion; residuals are measured in
    the order-3 Sobolev norm of g1.  Ratios are value / delta, or "exact"
    when both vanish.  ``reference`` reuses a precomputed side for g1.
    """
    if not isinstance(g1, ConformalMetric) or not isinstance(g2, ConformalMetric):
        raise TypeError("the uniformizer needs both metrics in conformal form")
    _same_grid(g1.grid, g2.grid)
    side1 = uniformized_side(g1, q, count=count, tol=tol) if reference is None else reference
    shift = side1.log_shift
    g1s, g2s = side1.metric, _scaled(g2, shift)
    delta = metric_distance(g1s, g2s, 2, p)
    if delta >= delta0:
        raise ValueError(f"metrics too far apart: delta = {delta:.3g} >= {delta0}")
    side2 = uniformized_side(g2, q, shift, count, tol)
    log_ratio = side2.log_omega - side1.log_omega
    phi1, phi2 = side1.embedding, side2.embedding
    fit = fit_rigid_motion(phi1, phi2, g1s, 3, p)
    values = {
        "log_ratio_sup": log_ratio.sup(),
        "log_ratio_sobolev": sobolev_norm(log_ratio, g1s, 2, p),
        "round_distance": sobolev_norm(side2.round_metric.G - side1.round_metric.G, g1s, 2, p),
        "embedding_residual": fit.residual_sobolev,
    }
    ratios = {k: _ratio(v, delta) for k, v in values.items()}
    return StabilityReport(
        delta=delta, p=p,
        log_ratio_sup=values["log_ratio_sup"],
        log_ratio_sobolev=values["log_ratio_sobolev"],
        round_distance=values["round_distance"],
        embedding_residual=values["embedding_residual"],
        embedding_residual_l2=fit.residual_l2,
        rigid_motion=fit.motion,
        ratios=ratios,
        ceilings=dict(DEFAULT_CEILINGS if ceilings is None else ceilings),
        embeddings=(phi1, phi2),
        round_metrics=(side1.round_metric, side2.round_metric),
        fit=fit,
    )


def pushed_round_metric(grid: SphGrid, f: ScalarField, delta: float) -> PerturbedMetric:
    """Pullback of the round metric by x -> (x + delta grad f) / |x + delta grad f|.

    A unit round metric in a non-conformal chart, so its first eigenvalue is
    exactly 2 and its first eigenfunctions are the coordinates of the map.
    """
    y = grid.normal + delta * grad_cart(f)
    psi = y / np.linalg.norm(y, axis=0)
    d = tangential_gradient(psi, grid)  # d[a, c] = D_a psi_c
    h = np.einsum("ac...,bc...->ab...", d, d) - grid.projector
    return PerturbedMetric(grid, h)


__all__ = [
    "FIRST_EIGENVALUE",
    "EMBEDDING_SCALE",
    "SpectralClusterError",
    "EigenDecomposition",
    "galerkin_spectrum",
    "project_first_eigenspace",
    "projection_orthogonality",
    "gram_matrix",
    "GramSchmidtResult",
    "gram_schmidt",
    "Embedding",
    "build_embedding",
    "RigidMotion",
    "RigidFit",
    "fit_rigid_motion",
    "random_orthogonal",
    "procrustes_spot_check",
    "first_embedding",
    "ProjectionReport",
    "eigenspace_projection",
    "StabilityReport",
    "UniformizedSide",
    "uniformized_side",
    "stability_experiment",
    "pushed_round_metric",
]
