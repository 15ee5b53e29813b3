"""Command-line interface.

Three subcommands:

* ``validate``: structural check of an experiment file, nonzero exit on
  any violation.
* ``design``: compute one of the five design types and write it as JSON.
* ``simulate``: run a reconstruction campaign over the qubit ball grid and
  write a per-state CSV plus a JSON summary.

Exit codes: 0 success, 1 validation failure (including unreadable input),
2 numerical failure (singular statistics or non-convergence).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .averaging import averaged_crb_direct, averaged_crb_fisher, \
    average_oed_crb, average_oed_fisher, averaging_context, state_space_radius
from .bloch import bloch_to_density, validate_setup
from .cholesky import cholesky_vector, optimize_design_cholesky
from .design import Design
from .design_numeric import optimize_design
from .errors import ConvergenceError, TomographyError, ValidationError
from .io import RunManifest, load_design_weights, load_experiment, load_state, \
    write_campaign_csv, write_campaign_summary, write_design_file
from .montecarlo import run_trials, sphere_grid
from .odt import crb_variance, odt_design, variance_matrix

_ESTIMATOR_ALIASES = {"inv": "inversion", "lsq": "least-squares",
                      "ml": "max-likelihood"}

METHODS = ("oed", "avg-oed-fisher", "avg-oed-crb", "odt", "oed-cholesky")


def _radius_for(setup, spec: str) -> float:
    if spec in ("min", "max"):
        return state_space_radius(setup.dimension, spec)
    try:
        value = float(spec)
    except ValueError:
        raise ValidationError(
            f"radius must be 'min', 'max' or a number, got {spec!r}") from None
    return state_space_radius(setup.dimension, "value", value)


def _cmd_validate(args) -> int:
    setup = load_experiment(args.spec)
    report = validate_setup(setup)
    print(report)
    return 0 if report.ok else 1


def _cmd_design(args) -> int:
    setup = load_experiment(args.spec)
    report = validate_setup(setup)
    if not report.ok:
        print(report, file=sys.stderr)
        return 1
    method = args.method
    diagnostics: dict = {}
    if method in ("oed", "oed-cholesky"):
        if args.state is None:
            raise ValidationError(f"method {method!r} requires --state")
        r = load_state(args.state, setup.basis)
        if method == "oed":
            result = optimize_design(setup, state=r)
            weights = result.weights
            name, value = "crb", result.objective
            diagnostics = {"residual": result.residual,
                           "iterations": result.iterations,
                           "boundary": result.boundary}
        else:
            theta = cholesky_vector(bloch_to_density(r, setup.basis)).theta
            result = optimize_design_cholesky(setup, theta)
            weights = result.weights
            name, value = "constrained_crb", result.objective
            diagnostics = {"residual": result.residual,
                           "iterations": result.iterations,
                           "boundary": result.boundary}
    else:
        radius = _radius_for(setup, args.radius)
        diagnostics = {"radius": radius}
        if method == "avg-oed-fisher":
            context = averaging_context(setup, radius)
            design = average_oed_fisher(setup, context=context)
            weights = design.weights
            name = "averaged_fisher_crb"
            value = averaged_crb_fisher(setup, design, context)
        elif method == "avg-oed-crb":
            design = average_oed_crb(setup, radius=radius)
            weights = design.weights
            name = "averaged_crb"
            value = averaged_crb_direct(setup, design, radius=radius)
        elif method == "odt":
            var = variance_matrix(setup, radius)
            result = odt_design(var)
            weights = result.design.weights
            name, value = "crb_variance", result.variance
            diagnostics.update({"residual": result.residual,
                                "iterations": result.iterations})
        else:
            raise ValidationError(f"unknown method {method!r}")

    manifest = RunManifest.build(
        command="design",
        inputs={"spec": str(args.spec),
                **({"state": str(args.state)} if args.state else {})},
        parameters={"method": method, "radius": args.radius},
    )
    write_design_file(args.out, method, weights, name, value, diagnostics,
                      manifest)
    print(f"{method}: lambda = {np.array2string(np.asarray(weights), precision=6)}"
          f"  {name} = {value:.6g}")
    return 0


def _parse_grid(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ValidationError(f"grid must be 'r,polar,azimuth', got {text!r}") from None
    if len(parts) != 3:
        raise ValidationError(f"grid must have three counts, got {text!r}")
    return parts


def _cmd_simulate(args) -> int:
    setup = load_experiment(args.spec)
    report = validate_setup(setup)
    if not report.ok:
        print(report, file=sys.stderr)
        return 1
    weights = load_design_weights(args.design)
    design = Design(weights)
    n_r, n_polar, n_azimuth = _parse_grid(args.grid)
    grid = sphere_grid(n_r, n_polar, n_azimuth)
    estimators = tuple(_ESTIMATOR_ALIASES.get(e.strip(), e.strip())
                       for e in args.estimators.split(",")) if args.runs else ()
    workers = int(os.environ.get("TOMOPLAN_THREADS", "1"))

    result = run_trials(setup, design, grid, args.ntot, args.runs,
                        estimators=estimators or ("inversion",),
                        seed=args.seed, workers=workers)
    if args.runs == 0:
        result_estimators = ()
    else:
        result_estimators = estimators

    improvement = None
    if args.compare_uniform and args.runs > 0:
        uniform = run_trials(setup, Design.uniform(setup.n_configs), grid,
                             args.ntot, args.runs, estimators=estimators,
                             seed=args.seed, workers=workers)
        improvement = {}
        for name in result_estimators:
            base = uniform.sphere_average_mse(name)
            new = result.sphere_average_mse(name)
            improvement[f"rms_{name.replace('-', '_')}_percent"] = \
                100.0 * (1.0 - (new / base) ** 0.5)

    manifest = RunManifest.build(
        command="simulate",
        inputs={"spec": str(args.spec), "design": str(args.design)},
        parameters={"grid": args.grid, "ntot": args.ntot, "runs": args.runs,
                    "estimators": args.estimators},
        seed=args.seed,
    )
    write_campaign_csv(f"{args.out}.csv", result)
    write_campaign_summary(f"{args.out}.json", result, manifest, improvement)
    avg_crb = result.sphere_average_crb()
    print(f"campaign complete: {len(grid)} states, {args.runs} runs, "
          f"sphere-averaged bound per shot {avg_crb:.6g}")
    for name in result_estimators:
        print(f"  {name}: sphere-averaged MSE {result.sphere_average_mse(name):.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tomoplan",
        description="Measurement-time allocation and precision analysis "
                    "for quantum state tomography.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_val = sub.add_parser("validate", help="check an experiment file")
    p_val.add_argument("--spec", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_des = sub.add_parser("design", help="compute an experiment design")
    p_des.add_argument("--spec", required=True)
    p_des.add_argument("--method", required=True, choices=METHODS)
    p_des.add_argument("--state", default=None,
                       help="state file (required for oed / oed-cholesky)")
    p_des.add_argument("--radius", default="min",
                       help="averaging-ball radius: min, max, or a number")
    p_des.add_argument("--out", required=True)
    p_des.set_defaults(func=_cmd_design)

    p_sim = sub.add_parser("simulate", help="run a reconstruction campaign")
    p_sim.add_argument("--spec", required=True)
    p_sim.add_argument("--design", required=True, help="design JSON file")
    p_sim.add_argument("--grid", default="6,6,6",
                       help="radial,polar,azimuth point counts")
    p_sim.add_argument("--ntot", type=int, required=True)
    p_sim.add_argument("--runs", type=int, required=True)
    p_sim.add_argument("--estimators", default="inv,lsq,ml")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--compare-uniform", action="store_true",
                       help="also run a uniform-design reference campaign")
    p_sim.add_argument("--out", required=True, help="output path stem")
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except ConvergenceError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2
    except TomographyError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
