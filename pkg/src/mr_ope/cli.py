"""Command-line entry point.

Subcommands:

* `synth-sweep`    embedding-mediated synthetic sweep over one axis
* `sin-sweep`      sine-score synthetic sweep
* `classify-bandit` labeled-CSV bandit conversion and sweep
* `ate`            binary-treatment experiment on a finite environment
* `oracle-check`   exact variance identity/inequality checks over seeded envs
* `estimate`       one estimator on a JSON-lines dataset with model files

Exit codes: 0 success, 1 configuration/ingestion error, 2 runtime or
numerical failure (including failed oracle checks). Output files are written
atomically, and every run given --out echoes its fully resolved
configuration to <out>/config.json. The environment variable MR_OPE_SEED
overrides the default seed when --seed is not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ._validation import ConfigurationError, DegenerateWeightsError
from .domain import PolicyRatio, policy_from_json, read_logged_dataset
from .estimators import DEFAULT_LAMBDA, DEFAULT_TAU, EstimatorInputs, estimate
from .weightfit import DEFAULT_RATIO_FLOOR, DISCRETE_MODE_THRESHOLD, ratio_model_from_json
from . import harness, oracle, synth

_SWEEP_ESTIMATORS = {
    "synth-sweep": "dm,ipw,dr,switch-dr,dros,snipw,sndr,mips,mr",
    "sin-sweep": "dm,ipw,dr,switch-dr,dros,snipw,sndr,gmips,mr",
    "classify-bandit": "dm,ipw,dr,switch-dr,dros,snipw,sndr,mr",
}


def _env_seed() -> int:
    return int(os.environ.get("MR_OPE_SEED", "0"))


def _parse_seeds(value) -> tuple:
    """`--seeds 10` means seeds 0..9; `--seeds 3,5,8` lists them explicitly."""
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    text = str(value)
    if "," in text:
        return tuple(int(p) for p in text.split(",") if p.strip())
    return tuple(range(int(text)))


def _parse_grid(value) -> tuple:
    if isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [p for p in str(value).split(",") if p.strip()]
    out = []
    all_int = True
    for item in items:
        f = float(item)
        if not f.is_integer():
            all_int = False
        out.append(f)
    if not out:
        raise ConfigurationError("grid must be nonempty")
    return tuple(int(v) for v in out) if all_int else tuple(out)


def _parse_list(value) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return tuple(p.strip() for p in str(value).split(",") if p.strip())


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="base seed (default: MR_OPE_SEED or 0)")
    parser.add_argument("--tau", type=float, default=DEFAULT_TAU,
                        help="weight-truncation threshold (default: 10)")
    parser.add_argument("--lam", type=float, default=DEFAULT_LAMBDA,
                        help="weight-shrinkage strength (default: 10)")
    parser.add_argument("--floor", type=float, default=DEFAULT_RATIO_FLOOR,
                        help="propensity floor for estimated ratios (default: 1e-6)")
    parser.add_argument("--discrete-threshold", type=int, default=DISCRETE_MODE_THRESHOLD,
                        help="max distinct keys for table-mode weight fits (default: 64)")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker processes (default: available cores)")
    parser.add_argument("--config", default=None,
                        help="JSON file whose entries override the flags")
    parser.add_argument("--out", default=None, help="output directory")


def _add_sweep_flags(parser: argparse.ArgumentParser, name: str) -> None:
    defaults = {"synth-sweep": (50, 20), "sin-sweep": (5, 10)}.get(name, (None, None))
    parser.add_argument("--axis", default="n", choices=list(harness.SWEEP_AXES),
                        help="sweep axis (default: n)")
    parser.add_argument("--grid", default=None,
                        help="comma-separated axis values, e.g. 100,400,1600")
    parser.add_argument("--seeds", default="10",
                        help="replication seeds: a count (10 -> 0..9) or a comma list")
    parser.add_argument("--estimators", default=_SWEEP_ESTIMATORS[name],
                        help="comma-separated estimator ids")
    parser.add_argument("--m", type=int, default=2000, help="training-split size")
    parser.add_argument("--n", type=int, default=800, help="evaluation-split size")
    parser.add_argument("--alpha-star", type=float, default=None,
                        help="target-policy greediness in [0, 1]")
    parser.add_argument("--truth-draws", type=int, default=synth.TRUE_VALUE_DRAWS,
                        help="Monte Carlo draws for the ground-truth value")
    parser.add_argument("--json", action="store_true", help="also write a JSON mirror")
    if name != "classify-bandit":
        parser.add_argument("--d", type=int, default=defaults[0], help="context dimension")
        parser.add_argument("--n-actions", type=int, default=defaults[1], help="action count")
        parser.add_argument("--noise-sd", type=float, default=0.1,
                            help="reward noise standard deviation")
    else:
        parser.add_argument("--csv", required=True, help="labeled CSV (features + `label`)")
        parser.add_argument("--train-fraction", type=float, default=0.5,
                            help="fraction of rows used to fit the classifier")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mr-ope",
        description="Off-policy evaluation with outcome-marginal importance weights.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    for name, blurb in (
        ("synth-sweep", "sweep the embedding-mediated synthetic setup"),
        ("sin-sweep", "sweep the sine-score synthetic setup"),
        ("classify-bandit", "sweep a labeled-CSV bandit conversion"),
    ):
        p = sub.add_parser(name, help=blurb)
        _add_sweep_flags(p, name)
        _add_common(p)

    p = sub.add_parser("ate", help="binary-treatment experiment with known effect")
    p.add_argument("--n", type=int, default=50, help="evaluation-split size")
    p.add_argument("--m", type=int, default=1600, help="training-split size")
    p.add_argument("--seeds", default="10",
                   help="replication seeds: a count or a comma list")
    p.add_argument("--methods", default=",".join(harness.ATE_METHODS),
                   help="comma-separated treatment-effect methods")
    p.add_argument("--env-seed", type=int, default=None,
                   help="seed for a random binary environment (default: fixed preset)")
    _add_common(p)

    p = sub.add_parser("oracle-check", help="run every exact check on seeded environments")
    p.add_argument("--seeds", default="100",
                   help="number of environment seeds (or a comma list)")
    _add_common(p)

    p = sub.add_parser("estimate", help="run one estimator on a logged dataset")
    p.add_argument("--data", required=True, help="JSON-lines logged dataset")
    p.add_argument("--estimator", required=True,
                   help="one of: mr, mr-alt, snmr, ipw, snipw")
    p.add_argument("--weights", required=True,
                   help="JSON weight model (fitted ratio model or policy-ratio spec)")
    p.add_argument("--target-policy", default=None,
                   help="JSON target policy (required for policy-ratio weights)")
    _add_common(p)
    return parser


def _apply_config_file(args: argparse.Namespace) -> argparse.Namespace:
    if getattr(args, "config", None):
        with open(args.config) as handle:
            overrides = json.load(handle)
        if not isinstance(overrides, dict):
            raise ConfigurationError("--config file must hold a JSON object")
        for key, value in overrides.items():
            setattr(args, key.replace("-", "_"), value)
    return args


def _resolved_seed(args: argparse.Namespace) -> int:
    return _env_seed() if args.seed is None else int(args.seed)


def _echo_config(out_dir, payload: dict) -> None:
    if out_dir:
        harness.atomic_write_text(
            os.path.join(str(out_dir), "config.json"),
            json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n",
        )


def _cmd_sweep(args: argparse.Namespace, name: str) -> int:
    generator = {"synth-sweep": "saito", "sin-sweep": "sin",
                 "classify-bandit": "classification"}[name]
    if args.out is None:
        raise ConfigurationError(f"{name} requires --out")
    default_alpha = 0.6 if generator == "classification" else 0.8
    alpha = default_alpha if args.alpha_star is None else float(args.alpha_star)
    if generator == "classification":
        fixed = {
            "csv_path": args.csv,
            "train_fraction": float(args.train_fraction),
            "alpha_star": alpha,
            "n": args.n,
        }
    else:
        fixed = {
            "d": int(args.d),
            "n_a": int(args.n_actions),
            "m": int(args.m),
            "n": int(args.n),
            "alpha_star": alpha,
            "noise_sd": float(args.noise_sd),
        }
    if int(args.discrete_threshold) != DISCRETE_MODE_THRESHOLD:
        fixed["weight_fit"] = {"discrete_threshold": int(args.discrete_threshold)}
    grid = _parse_grid(args.grid) if args.grid is not None else (
        (fixed.get("alpha_star"),) if args.axis == "alpha_star" else (fixed.get("n"),)
    )
    config = harness.SweepConfig(
        generator=generator,
        axis=args.axis,
        grid=grid,
        estimators=_parse_list(args.estimators),
        seeds=_parse_seeds(args.seeds),
        fixed=fixed,
        base_seed=_resolved_seed(args),
        tau=float(args.tau),
        lam=float(args.lam),
        floor=float(args.floor),
        truth_draws=int(args.truth_draws),
        jobs=int(args.jobs),
    )
    _echo_config(args.out, {"subcommand": name, **config.to_dict()})
    result = harness.run_sweep(config)
    paths = harness.write_sweep_outputs(result, args.out, json_mirror=bool(args.json))
    print(json.dumps({"written": paths}))
    return 0


def _cmd_ate(args: argparse.Namespace) -> int:
    if args.env_seed is not None:
        env = synth.random_tabular_env(seed=int(args.env_seed), n_actions=2)
    else:
        env = harness.ate_preset_env()
    outcome = harness.run_ate_experiment(
        env=env,
        methods=_parse_list(args.methods),
        n=int(args.n),
        m=int(args.m),
        seeds=_parse_seeds(args.seeds),
        tau=float(args.tau),
        lam=float(args.lam),
        floor=float(args.floor),
    )
    payload = {
        "true_ate": outcome["true_ate"],
        "methods": {
            method: {
                "estimate": report.value,
                "ate_error": harness.ate_error(report, outcome["true_ate"]),
                "mse": report.mse,
                "per_seed": list(report.per_seed_values),
            }
            for method, report in outcome["reports"].items()
        },
    }
    _echo_config(args.out, {
        "subcommand": "ate", "n": int(args.n), "m": int(args.m),
        "seeds": list(_parse_seeds(args.seeds)), "methods": list(_parse_list(args.methods)),
        "env_seed": args.env_seed, "tau": float(args.tau), "lam": float(args.lam),
        "floor": float(args.floor),
    })
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        harness.atomic_write_text(os.path.join(str(args.out), "ate.json"), text + "\n")
    print(text)
    return 0


def _cmd_oracle_check(args: argparse.Namespace) -> int:
    seeds = _parse_seeds(args.seeds)
    n_envs = len(seeds)
    base = seeds[0] if seeds else _resolved_seed(args)
    report = oracle.run_oracle_checks(
        n_envs=n_envs, base_seed=int(base), tau=float(args.tau), lam=float(args.lam),
    )
    _echo_config(args.out, {
        "subcommand": "oracle-check", "n_envs": n_envs, "base_seed": int(base),
        "tau": float(args.tau), "lam": float(args.lam),
    })
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        harness.atomic_write_text(os.path.join(str(args.out), "oracle-report.json"), text + "\n")
    print(text)
    return 0 if report["all_passed"] else 2


def _cmd_estimate(args: argparse.Namespace) -> int:
    dataset = read_logged_dataset(args.data).with_role("eval")
    with open(args.weights) as handle:
        weight_spec = json.load(handle)
    estimator_id = str(args.estimator)
    kind = weight_spec.get("kind")

    inputs_kwargs = {"dataset": dataset, "tau": float(args.tau), "lam": float(args.lam)}
    if kind == "policy-ratio":
        if args.target_policy is None:
            raise ConfigurationError("policy-ratio weights need --target-policy")
        with open(args.target_policy) as handle:
            target = policy_from_json(json.load(handle))
        behavior = policy_from_json(weight_spec["behavior"])
        floor = float(weight_spec.get("floor", args.floor))
        inputs_kwargs["policy_ratio"] = PolicyRatio(target, behavior, floor)
        inputs_kwargs["target_policy"] = target
    else:
        model = ratio_model_from_json(weight_spec)
        if model.kind == "marginal-ratio":
            inputs_kwargs["marginal_ratio"] = model
        elif model.kind == "h-model":
            inputs_kwargs["h_model"] = model
        else:
            raise ConfigurationError(
                f"weight model kind {model.kind!r} is not usable by `estimate`"
            )
    value = estimate(estimator_id, EstimatorInputs(**inputs_kwargs))
    line = json.dumps({"estimator": estimator_id, "value": value})
    if args.out:
        _echo_config(args.out, {
            "subcommand": "estimate", "data": args.data, "estimator": estimator_id,
            "weights": args.weights, "target_policy": args.target_policy,
            "tau": float(args.tau), "lam": float(args.lam), "floor": float(args.floor),
        })
        harness.atomic_write_text(os.path.join(str(args.out), "estimate.json"), line + "\n")
    print(line)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        args = _apply_config_file(args)
        if args.subcommand == "synth-sweep":
            return _cmd_sweep(args, "synth-sweep")
        if args.subcommand == "sin-sweep":
            return _cmd_sweep(args, "sin-sweep")
        if args.subcommand == "classify-bandit":
            return _cmd_sweep(args, "classify-bandit")
        if args.subcommand == "ate":
            return _cmd_ate(args)
        if args.subcommand == "oracle-check":
            return _cmd_oracle_check(args)
        if args.subcommand == "estimate":
            return _cmd_estimate(args)
        raise ConfigurationError(f"unknown subcommand {args.subcommand!r}")
    except DegenerateWeightsError as exc:
        # Valid flags and files, but the computation is undefined on the
        # supplied data: a runtime failure, not a configuration error.
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # numerical / runtime failures
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
