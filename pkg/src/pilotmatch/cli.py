"""Command-line entry point.

Subcommands: generate | match | simulate | sensitivity | acplot.
Exit codes: 0 success, 2 configuration or usage error, 3 runtime error
(including infeasible matchings), 4 I/O error. Seed precedence:
--seed flag > PILOTMATCH_SEED environment variable > config file value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, RNG_ALGORITHM, acplot, core, harness, models
from .core import (InfeasibleMatchError, PROPENSITY_SCALAR, RAW_COVARIATES,
                   ValidationError)
from .datagen import make_spec, generate
from .distance import build_distances
from .estimate import satt_1k, satt_full
from .matching import full_match, optimal_k_match
from .pilot import FULL_MATCH, ModelOptions, run_pilot_pipeline
from .sensitivity import DegenerateStatisticError, max_gamma

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

_SPEC_KEYS = {"scenario", "rho", "seed", "n", "p", "sigma", "tau", "c"}


class ConfigError(ValueError):
    pass


def _load_json(path) -> dict:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return doc


def _resolve_seed(flag_seed, config_seed) -> int:
    if flag_seed is not None:
        return int(flag_seed)
    env = os.environ.get("PILOTMATCH_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"PILOTMATCH_SEED must be an integer, got {env!r}") from exc
    if config_seed is not None:
        return int(config_seed)
    return 0


def _parse_k(text):
    if text == FULL_MATCH:
        return FULL_MATCH
    try:
        k = int(text)
    except ValueError as exc:
        raise ConfigError(f"k must be a positive integer or 'full', got {text!r}") from exc
    if k < 1:
        raise ConfigError(f"k must be a positive integer or 'full', got {k}")
    return k


def cmd_generate(args) -> int:
    config = _load_json(args.config) if args.config else {}
    unknown = set(config) - _SPEC_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    seed = _resolve_seed(args.seed, config.pop("seed", None))
    scenario = config.pop("scenario", "base")
    rho = config.pop("rho", 0.5)
    try:
        spec = make_spec(scenario, rho, **config)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    dataset = generate(spec, seed)
    core.write_csv(dataset, args.out)
    print(f"wrote {args.out}: n={dataset.n} p={dataset.p} "
          f"n_treated={dataset.n_treated} seed={seed}")
    return EXIT_OK


def cmd_match(args) -> int:
    k = _parse_k(args.k)
    seed = _resolve_seed(args.seed, None)
    dataset = core.read_csv(args.dataset)
    opts = ModelOptions(specification=args.specification, lasso=args.lasso)
    pilot_indices = None

    if args.method == "pilot":
        res = run_pilot_pipeline(dataset, k, seed, opts)
        matching = res.matching
        phi_hat, psi_hat = res.phi_hat, res.psi_hat
        pilot_indices = res.split.pilot
    else:
        Xm = opts.design(dataset.X)
        phi_model = models.fit_logistic(Xm, dataset.T)
        phi_hat = models.predict_linear(phi_model, Xm)
        controls = dataset.control_indices()
        psi_model = models.fit_ols(Xm[controls], dataset.Y[controls])
        psi_hat = models.predict_linear(psi_model, Xm)
        if args.method == "mahalanobis":
            dm = build_distances(dataset, RAW_COVARIATES, dataset.X)
        else:
            dm = build_distances(dataset, PROPENSITY_SCALAR, phi_hat)
        matching = full_match(dm) if k == FULL_MATCH else optimal_k_match(dm, k)

    est = satt_full(matching, dataset.Y) if k == FULL_MATCH \
        else satt_1k(matching, dataset.Y)
    summary = {"method": args.method, "k": k, "seed": seed,
               "tau_hat": est.tau_hat, "estimator": est.estimator,
               "n_sets": est.n_sets}
    if k != FULL_MATCH:
        try:
            sens = max_gamma(matching, dataset.Y)
            summary["gamma_star"] = sens.gamma_star
            summary["significant_at_gamma_one"] = sens.significant_at_one
        except DegenerateStatisticError:
            summary["gamma_star"] = None

    prefix = args.out_prefix
    core.write_matching_csv(matching, prefix + ".matching.csv")
    with open(prefix + ".estimate.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    acplot.emit_ac_data(dataset, phi_hat, psi_hat, prefix + ".ac.csv",
                        matching=matching, pilot=pilot_indices)
    acplot.render_svg(prefix + ".ac.csv", prefix + ".ac.svg")
    print(f"tau_hat={est.tau_hat:.6g} n_sets={est.n_sets} "
          f"artifacts={prefix}.{{matching.csv,estimate.json,ac.csv,ac.svg}}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    doc = _load_json(args.config)
    seed = _resolve_seed(args.seed, doc.pop("base_seed", None))
    doc["base_seed"] = seed
    try:
        config = harness.SimConfig.from_dict(doc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    results, aggregates = harness.simulate_to_dir(config, args.out_dir,
                                                  jobs=args.jobs)
    failures = sum(a.failures for a in aggregates)
    print(f"wrote {args.out_dir}/results.csv ({len(results)} replicate rows), "
          f"aggregates.csv ({len(aggregates)} cells), manifest.json; "
          f"{failures} failed replicates")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    if not 0.0 < args.alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {args.alpha}")
    dataset = core.read_csv(args.dataset)
    matching = core.read_matching_csv(args.matching)
    core.validate_matching(matching, dataset)
    res = max_gamma(matching, dataset.Y, alpha=args.alpha)
    if not res.significant_at_one:
        print("gamma_star=1 (not significant at gamma=1)")
    elif res.at_ceiling:
        print(f"gamma_star>={res.gamma_star:g} (search ceiling)")
    else:
        print(f"gamma_star={res.gamma_star:.4g}")
    if args.curve:
        with open(args.curve, "w") as fh:
            json.dump({"alpha": res.alpha, "gamma_star": res.gamma_star,
                       "statistic": res.statistic,
                       "curve": [list(pair) for pair in res.p_at_gamma]},
                      fh, indent=2)
    return EXIT_OK


def cmd_acplot(args) -> int:
    acplot.render_svg(args.ac_csv, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pilotmatch",
        description="Prognostic-score pilot matching for observational studies.")
    parser.add_argument("--version", action="version",
                        version=f"pilotmatch {__version__} (rng: {RNG_ALGORITHM})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset CSV")
    p.add_argument("--config", help="JSON scenario config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("match", help="run one matching end to end")
    p.add_argument("dataset")
    p.add_argument("--method", required=True,
                   choices=("mahalanobis", "propensity", "pilot"))
    p.add_argument("--k", default="1", help="controls per treated, or 'full'")
    p.add_argument("--seed", type=int)
    p.add_argument("--specification", default="over_specified",
                   choices=("over_specified", "correct"))
    p.add_argument("--lasso", action="store_true")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("simulate", help="run a Monte Carlo sweep")
    p.add_argument("config", help="JSON sweep config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, help="override base_seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sensitivity", help="gamma sensitivity of a matching")
    p.add_argument("matching", help="matching CSV")
    p.add_argument("dataset", help="dataset CSV")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--curve", help="write the probed (gamma, p) curve as JSON")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("acplot", help="render an AC data CSV as SVG")
    p.add_argument("ac_csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_acplot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors already; pass through
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InfeasibleMatchError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
