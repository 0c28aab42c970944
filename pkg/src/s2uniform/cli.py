"""Command-line driver.

Subcommands read and write UTF-8 JSON; the exit status is 1 whenever a
reported check fails and 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .experiments import SECTIONS, ExperimentConfig, emit_table, generate_random_metric, run_suite
from .io import SpecError, dumps, load_metric, metric_to_spec
from .lightcone import divergence_identity_residual, geodesic_sweep, lightcone_frames, second_forms
from .lightcone import structure_equation_report, xi_from_logOmega
from .metric import ConformalMetric
from .stability import galerkin_spectrum, stability_experiment
from .uniformize import ConvergenceError, uniformize

DEFAULT_SEED = ExperimentConfig.seed


def _basepoint(text: str) -> tuple[float, float]:
    try:
        theta, phi = (float(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"basepoint must be 'theta,phi', got {text!r}") from exc
    if not 0.0 <= theta <= np.pi:
        raise argparse.ArgumentTypeError(f"theta must lie in [0, pi], got {theta}")
    return theta, phi


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _emit(text: str, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _record(name: str, value: float, tolerance: float) -> dict:
    return {"name": name, "value": float(value), "tolerance": float(tolerance), "pass": bool(value <= tolerance)}


def _finish(payload: dict, records: list[dict], path) -> int:
    payload["records"] = records
    payload["passed"] = all(r["pass"] for r in records)
    _emit(dumps(payload), path)
    return 0 if payload["passed"] else 1


def _conformal(path, bandlimit) -> ConformalMetric:
    m = load_metric(path, bandlimit)
    if not isinstance(m, ConformalMetric):
        raise SpecError(f"{path}: this command needs a conformal metric spec")
    return m


def cmd_uniformize(args) -> int:
    m = _conformal(args.metric, args.bandlimit)
    r = uniformize(m, args.basepoint)
    s = args.tolerance_scale
    records = [
        _record("newton_residual", r.residual_linf, 1e-10 * s),
        _record("normalization_value", r.normalization_residual[0], 1e-9 * s),
        _record("normalization_gradient", r.normalization_residual[1], 1e-9 * s),
        _record("round_roundtrip_defect", r.roundtrip_defect, 1e-8 * s),
    ]
    return _finish({"result": r.to_json()}, records, args.report or args.out)


def cmd_verify(args) -> int:
    m = _conformal(args.metric, args.bandlimit)
    q = args.basepoint or m.basepoint or (np.pi / 2, 0.0)
    u = uniformize(m, q).log_omega
    s = args.tolerance_scale
    forms = second_forms(u)
    structure = structure_equation_report(u)
    sweep = geodesic_sweep(u, q, args.directions)
    records = [
        _record("divergence_identity", divergence_identity_residual(u).sup(), 1e-8 * s),
        _record("chibar_minus_xi", np.abs(forms.chibar - xi_from_logOmega(u).cart).max(), 1e-9 * s),
        _record("chi_minus_metric", np.abs(forms.chi - forms.metric.G).max(), 1e-9 * s),
        _record("conjugacy", lightcone_frames(u).invariants()["conjugacy"], 1e-10 * s),
        _record("trace_relation", structure["trace"], 1e-9 * s),
        _record("gauss_equation", structure["gauss"], 1e-7 * s),
        _record("codazzi_equation", structure["codazzi"], 1e-7 * s),
        _record("geodesic_transport", sweep["max_deviation"], 1e-6 * s),
    ]
    payload = {"basepoint": list(q), "structure": structure,
               "geodesics": {k: v for k, v in sweep.items() if k != "per_direction"}}
    return _finish(payload, records, args.out)


def cmd_stability(args) -> int:
    g1 = _conformal(args.g1, args.bandlimit)
    g2 = _conformal(args.g2, args.bandlimit)
    q = args.basepoint or g1.basepoint or (np.pi / 2, 0.0)
    rep = stability_experiment(g1, g2, q, args.p, delta0=args.delta0)
    records = [{"name": f"{k}_over_delta", "value": v, "tolerance": rep.ceilings[k],
                "pass": v == "exact" or v <= rep.ceilings[k]} for k, v in rep.ratios.items()]
    return _finish({"stability": rep.to_json()}, records, args.report or args.out)


def cmd_spectrum(args) -> int:
    m = load_metric(args.metric, args.bandlimit)
    spec = galerkin_spectrum(m, args.count)
    records = [_record("weak_residual", spec.weak_residual, 1e-8 * args.tolerance_scale)]
    payload = {"eigenvalues": [float(x) for x in spec.eigenvalues]}
    return _finish(payload, records, args.out)


def cmd_gen(args) -> int:
    spec = generate_random_metric(args.seed, args.epsilon, args.shape, args.l_max_perturbation,
                                  args.bandlimit or 24)
    if args.basepoint is not None:
        spec["basepoint"] = {"theta": args.basepoint[0], "phi": args.basepoint[1]}
    _emit(dumps(spec), args.out)
    return 0


def cmd_suite(args) -> int:
    cfg = ExperimentConfig(
        bandlimit=args.bandlimit or 24,
        seed=args.seed,
        ensemble_size=args.ensemble_size,
        epsilons=args.epsilons,
        deltas=args.deltas,
        p=args.p,
        tolerance_scale=args.tolerance_scale,
        round_only=args.round_only,
    )
    report = run_suite(cfg, args.sections)
    _emit(dumps(report), args.out)
    for r in report["records"]:
        print(f"{'PASS' if r['pass'] else 'FAIL'}  {r['name']}  {r['value']}  (tol {r['tolerance']})",
              file=sys.stderr)
    return 0 if report["passed"] else 1


def cmd_table(args) -> int:
    import json

    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    _emit(emit_table(report, args.kind), args.out)
    return 0


def _globals(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)  # noqa: E731
    parser.add_argument("--bandlimit", type=int, default=d(None), help="harmonic bandlimit L")
    parser.add_argument("--seed", type=int, default=d(DEFAULT_SEED), help="random seed")
    parser.add_argument("--out", default=d(None), help="output path (default: stdout)")
    parser.add_argument("--tolerance-scale", type=float, default=d(1.0),
                        help="multiply residual tolerances by this factor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="s2uniform", description=__doc__.splitlines()[0])
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        _globals(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("uniformize", cmd_uniformize, "solve for the normalized conformal factor")
    p.add_argument("--metric", required=True)
    p.add_argument("--basepoint", type=_basepoint)
    p.add_argument("--report")

    p = add("verify-identities", cmd_verify, "residuals of the lightcone and divergence identities")
    p.add_argument("--metric", required=True)
    p.add_argument("--basepoint", type=_basepoint)
    p.add_argument("--directions", type=int, default=8)

    p = add("stability", cmd_stability, "compare the uniformizations of two nearby metrics")
    p.add_argument("--g1", required=True)
    p.add_argument("--g2", required=True)
    p.add_argument("--basepoint", type=_basepoint)
    p.add_argument("--p", type=float, default=4.0)
    p.add_argument("--delta0", type=float, default=0.2)
    p.add_argument("--report")

    p = add("spectrum", cmd_spectrum, "lowest Laplace-Beltrami eigenvalues")
    p.add_argument("--metric", required=True)
    p.add_argument("--count", type=int, default=16)

    p = add("gen", cmd_gen, "generate a random metric spec")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--shape", choices=["conformal", "perturbed"], default="conformal")
    p.add_argument("--l-max-perturbation", type=int, default=6)
    p.add_argument("--basepoint", type=_basepoint)

    p = add("suite", cmd_suite, "run the seeded experiment suite")
    p.add_argument("--ensemble-size", type=int, default=16)
    p.add_argument("--epsilons", type=_floats, default=(0.04, 0.02, 0.01))
    p.add_argument("--deltas", type=_floats, default=(0.02, 0.01))
    p.add_argument("--p", type=float, default=4.0)
    p.add_argument("--round-only", action="store_true")
    p.add_argument("--sections", type=lambda t: t.split(","), default=None,
                   help=f"comma-separated subset of {','.join(SECTIONS)}")

    p = add("table", cmd_table, "CSV table from a suite report")
    p.add_argument("--report", required=True)
    p.add_argument("--kind", choices=["constants", "convergence"], required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, ValueError, TypeError, FileNotFoundError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
