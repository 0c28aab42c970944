"""Versioned JSON metric specifications.

A spec is an object with ``"schema": "1"``, a ``"kind"`` of ``"conformal"``
or ``"perturbed"`` and a ``"bandlimit"``.  Conformal specs carry the
harmonic coefficients of log Omega; perturbed specs carry coefficients of
the six Cartesian components of h.  Unknown keys are rejected.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .metric import ConformalMetric, PerturbedMetric, SphereMetric
from .sht.fields import ScalarField
from .sht.transform import build_grid, coeffs_from_json, coeffs_to_json

SCHEMA = "1"
H_COMPONENTS = ("xx", "xy", "xz", "yy", "yz", "zz")
_COMMON = {"schema", "kind", "bandlimit", "basepoint", "meta"}
_KEYS = {"conformal": _COMMON | {"log_omega"}, "perturbed": _COMMON | {"h"}}


class SpecError(ValueError):
    """Malformed metric specification."""


def _basepoint_json(q):
    return None if q is None else {"theta": float(q[0]), "phi": float(q[1])}


def metric_to_spec(m: SphereMetric, meta: dict | None = None, tol: float = 1e-15) -> dict:
    spec = {"schema": SCHEMA, "bandlimit": m.grid.L}
    if isinstance(m, ConformalMetric):
        spec["kind"] = "conformal"
        spec["log_omega"] = coeffs_to_json(m.log_omega.coeffs, tol)
    elif isinstance(m, PerturbedMetric):
        spec["kind"] = "perturbed"
        coeffs = m.cartesian_coeffs()
        spec["h"] = {name: coeffs_to_json(c, tol) for name, c in zip(H_COMPONENTS, coeffs)}
    else:
        raise TypeError(f"cannot serialize {type(m).__name__}")
    if m.basepoint is not None:
        spec["basepoint"] = _basepoint_json(m.basepoint)
    if meta:
        spec["meta"] = dict(meta)
    return spec


def _require(cond: bool, message: str):
    if not cond:
        raise SpecError(message)


def metric_from_spec(spec: dict, bandlimit: int | None = None) -> SphereMetric:
    """Rebuild a metric; ``bandlimit`` overrides the stored one (coefficients must fit)."""
    _require(isinstance(spec, dict), "metric spec must be a JSON object")
    _require(spec.get("schema") == SCHEMA, f"unsupported schema {spec.get('schema')!r}; expected {SCHEMA!r}")
    kind = spec.get("kind")
    _require(kind in _KEYS, f"unknown metric kind {kind!r}")
    unknown = set(spec) - _KEYS[kind]
    _require(not unknown, f"unknown fields {sorted(unknown)}")
    L = int(spec["bandlimit"] if bandlimit is None else bandlimit)
    _require(L >= 1, f"bandlimit must be positive, got {L}")
    grid = build_grid(L)
    q = spec.get("basepoint")
    if q is not None:
        _require(set(q) == {"theta", "phi"}, "basepoint needs exactly theta and phi")
        q = (float(q["theta"]), float(q["phi"]))
    try:
        if kind == "conformal":
            u = ScalarField.from_coeffs(grid, coeffs_from_json(spec["log_omega"], grid.L))
            return ConformalMetric(u, q)
        h = spec["h"]
        _require(set(h) == set(H_COMPONENTS), f"h needs components {list(H_COMPONENTS)}")
        coeffs = np.stack([coeffs_from_json(h[name], grid.lmax) for name in H_COMPONENTS])
        return PerturbedMetric.from_cartesian_coeffs(grid, coeffs, q)
    except KeyError as exc:
        raise SpecError(f"missing field {exc}") from exc


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def load_metric(path, bandlimit: int | None = None) -> SphereMetric:
    return metric_from_spec(json.loads(Path(path).read_text(encoding="utf-8")), bandlimit)


def save_json(obj, path) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


__all__ = ["SCHEMA", "SpecError", "metric_to_spec", "metric_from_spec", "load_metric", "save_json", "dumps"]
