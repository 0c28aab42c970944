"""Spectral core: grids, transforms, fields, round calculus and harmonic bases."""

from .basis import KINDS, real_harmonic_matrix, basis_element, basis_norms, eigenvalue, elliptic_constant, scaling_ratio, sobolev_sq
from .calculus import (
    conformal_killing,
    conformal_killing_cart,
    cov_deriv,
    div_cart,
    div_oneform,
    div_st,
    grad,
    grad_cart,
    gradient_at,
    tensor_at,
    hessian_cart,
    hodge_star,
    l2_inner,
    laplacian_round,
    star_cart,
    tangential_gradient,
    trace_free,
)
from .fields import OneFormField, ScalarField, STTensorField, frame_components
from .transform import (
    SphGrid,
    analyze,
    build_grid,
    cartesian_points,
    coeffs_from_json,
    coeffs_to_json,
    evaluate,
    real_ylm,
    spherical_angles,
    synthesize,
    ylm,
)
