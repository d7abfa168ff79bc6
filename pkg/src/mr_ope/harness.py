"""Seed-replicated experiment harness.

`run_sweep` drives a generator over one sweep axis (n, m, alpha_star, d,
n_a), replicates every grid point over distinct seeds, fits models under the
split discipline (baselines get the full training split; marginal-ratio
weights are fitted on half the training split with policy ratios from the
other half), evaluates the configured estimators on the held-out evaluation
split, and aggregates per-seed estimates into MSE = bias^2 + variance
reports against the generator's ground truth.

Also here:

* `exact_weight_replication`: vectorized i.i.d. replication on a tabular
  environment with exact weights, for cross-checking empirical estimator
  variance against the enumeration oracle;
* `run_ate_experiment` and `ate_preset_env`: binary-treatment evaluation of
  the estimator family against a known average treatment effect;
* `ate_error`: the absolute-error metric |estimate - truth|;
* CSV/JSON writers with fixed column schemas and atomic file replacement.

Grid points x seeds form a pool of pure tasks; `jobs > 1` runs them in a
process pool and results are merged in canonical (grid, estimator, seed)
order either way.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import ConfigurationError
from .domain import (
    EstimateReport,
    FunctionRatio,
    LoggedDataset,
    PolicyRatio,
    TabularEnvironment,
    rng_from,
    sample_logged_dataset,
)
from .estimators import (
    ATE_METHODS,
    DEFAULT_LAMBDA,
    DEFAULT_TAU,
    ESTIMATORS,
    EstimatorInputs,
    ate_estimate,
    estimate,
)
from .weightfit import (
    DEFAULT_RATIO_FLOOR,
    fit_ate_weights,
    fit_behavior_policy,
    fit_h_model,
    fit_marginal_ratio,
    fit_outcome_model,
    fit_representation_ratio,
    make_ate_ratio,
    make_policy_ratio,
    split_dataset,
)
from . import oracle, synth

SWEEP_AXES = ("n", "m", "alpha_star", "d", "n_a")
GENERATOR_IDS = ("saito", "sin", "classification", "tabular")
DEFAULT_SEEDS = tuple(range(10))
DEFAULT_ESTIMATORS = ("dm", "ipw", "dr", "switch-dr", "dros", "snipw", "sndr", "mr")

PER_SEED_COLUMNS = ("estimator", "axis", "axis_value", "seed", "estimate", "true_value")
AGGREGATE_COLUMNS = ("estimator", "axis", "axis_value", "mse", "bias_sq", "variance", "n_seeds")

_REPLICATION_STREAM = 606

_MR_FAMILY = frozenset({"mr", "mr-alt", "snmr"})
_RHO_FAMILY = frozenset({"ipw", "dr", "switch-dr", "dros", "snipw", "sndr"})


def atomic_write_text(path, text: str) -> None:
    """Write text to `path` via a temp file in the same directory + rename."""
    path = str(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Sweep configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    """One sweep: a generator, an axis with its grid, seeds, and estimators.

    `fixed` holds the non-swept knobs (d, n_a, m, n, alpha_star, noise_sd for
    the synthetic setups; csv_path, train_fraction for classification;
    env/env_seed, structure, exact_weights for tabular) plus optional fit
    configs under 'behavior_fit', 'weight_fit', 'outcome_fit' and
    'outcome_mode'.
    """

    generator: str = "saito"
    axis: str = "n"
    grid: tuple = (100, 400, 1600)
    estimators: tuple = DEFAULT_ESTIMATORS
    seeds: tuple = DEFAULT_SEEDS
    fixed: dict = field(default_factory=dict)
    base_seed: int = 0
    tau: float = DEFAULT_TAU
    lam: float = DEFAULT_LAMBDA
    floor: float = DEFAULT_RATIO_FLOOR
    truth_draws: int = synth.TRUE_VALUE_DRAWS
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "fixed", dict(self.fixed))
        if self.generator not in GENERATOR_IDS:
            raise ConfigurationError(
                f"unknown generator {self.generator!r}; expected one of {GENERATOR_IDS}"
            )
        if self.axis not in SWEEP_AXES:
            raise ConfigurationError(f"unknown sweep axis {self.axis!r}; expected one of {SWEEP_AXES}")
        if not self.grid:
            raise ConfigurationError("grid must be nonempty")
        if not self.seeds:
            raise ConfigurationError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds must be distinct")
        if not self.estimators:
            raise ConfigurationError("estimator list must be nonempty")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise ConfigurationError(f"unknown estimators: {unknown}")
        if self.generator == "classification":
            if self.axis not in ("alpha_star", "n"):
                raise ConfigurationError(
                    "classification sweeps support axes 'alpha_star' and 'n' only"
                )
            if "csv_path" not in self.fixed:
                raise ConfigurationError("classification sweeps need fixed['csv_path']")
        if self.generator == "tabular" and self.axis not in ("n", "m"):
            raise ConfigurationError("tabular sweeps support axes 'n' and 'm' only")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "axis": self.axis,
            "grid": list(self.grid),
            "estimators": list(self.estimators),
            "seeds": list(self.seeds),
            "fixed": dict(self.fixed),
            "base_seed": self.base_seed,
            "tau": self.tau,
            "lam": self.lam,
            "floor": self.floor,
            "truth_draws": self.truth_draws,
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SweepConfig":
        return cls(**obj)


@dataclass(frozen=True)
class SweepResult:
    """Per-seed rows plus aggregated reports, in canonical order."""

    config: SweepConfig
    rows: tuple  # of (estimator, axis, axis_value, seed, estimate, true_value)
    reports: tuple  # of EstimateReport, one per (axis_value, estimator)

    def report_for(self, estimator: str, axis_value) -> EstimateReport:
        for report in self.reports:
            params = report.hyperparams
            if report.estimator_id == estimator and params.get("axis_value") == axis_value:
                return report
        raise KeyError(f"no report for ({estimator!r}, {axis_value!r})")


def _generator_defaults(generator: str) -> dict:
    if generator == "saito":
        return {"d": 50, "n_a": 20, "m": 2000, "n": 800, "alpha_star": 0.8, "noise_sd": 0.1}
    if generator == "sin":
        return {"d": 5, "n_a": 10, "m": 2000, "n": 800, "alpha_star": 0.8, "noise_sd": 0.1}
    if generator == "classification":
        return {"train_fraction": 0.5, "alpha_star": 0.6, "n": None}
    return {"m": 200, "n": 100}  # tabular


def _resolve_knobs(config: SweepConfig, axis_value) -> dict:
    knobs = _generator_defaults(config.generator)
    for key, value in config.fixed.items():
        knobs[key] = value
    knobs[config.axis] = axis_value
    for key in ("d", "n_a", "m", "n"):
        value = knobs.get(key)
        if value is None:
            continue
        if float(value) != int(value) or int(value) <= 0:
            raise ConfigurationError(
                f"knob {key!r} must be a positive integer, got {value!r}"
            )
        knobs[key] = int(value)
    return knobs


def _provenance(config: SweepConfig, estimator: str, knobs: dict) -> dict:
    exact = bool(knobs.get("exact_weights"))
    if exact:
        behavior_fit = weight_fit = outcome_fit = "exact"
    elif estimator in _MR_FAMILY:
        if config.generator == "classification":
            behavior_fit, weight_fit, outcome_fit = "full-train", "full-train", None
        else:
            behavior_fit, weight_fit, outcome_fit = "half-train", "half-train", None
    elif estimator in _RHO_FAMILY:
        behavior_fit, weight_fit, outcome_fit = "full-train", None, "full-train"
    elif estimator in ("mips", "gmips", "gmdr"):
        behavior_fit = "full-train" if config.generator == "saito" else "half-train"
        weight_fit = None if config.generator == "saito" else "half-train"
        outcome_fit = None
    else:  # dm
        behavior_fit, weight_fit, outcome_fit = None, None, "full-train"
    return {
        "axis": config.axis,
        "behavior_fit": behavior_fit,
        "weight_fit": weight_fit,
        "outcome_fit": outcome_fit,
        "tau": config.tau,
        "lam": config.lam,
        "floor": config.floor,
    }


# ---------------------------------------------------------------------------
# Per-seed evaluation pipelines
# ---------------------------------------------------------------------------


def _identity_ratio() -> FunctionRatio:
    return FunctionRatio(
        "representation-ratio",
        lambda values: np.asarray(values, dtype=np.float64).reshape(-1),
        backing="precomputed",
    )


def _estimate_synthetic(gt, config: SweepConfig, knobs: dict, seed: int) -> dict:
    """Fit models and evaluate every configured estimator for one seed."""
    m, n = knobs["m"], knobs["n"]
    data = gt.sample(m + n, seed=seed)
    train = data.subset(slice(0, m), role="train")
    eval_ds = data.subset(slice(m, m + n), role="eval")
    half1, half2 = split_dataset(train)

    # Mild ridge on the 1k-parameter softmax keeps estimated propensities
    # calibrated on 1-2k training rows; the weight net is kept small and fed
    # large batches because its targets are spiky ratios, not smooth labels.
    bcfg = dict(knobs.get("behavior_fit") or {"epochs": 500, "l2": 1e-2})
    behavior_full = fit_behavior_policy(train, dict(bcfg))
    behavior_half = fit_behavior_policy(half1, dict(bcfg))
    rho_full = make_policy_ratio(gt.target, behavior_full, config.floor)
    rho_half = make_policy_ratio(gt.target, behavior_half, config.floor)

    wcfg = dict(
        knobs.get("weight_fit")
        or {
            "hidden_layer_sizes": (64, 32),
            "batch_size": 256,
            "epochs": 1000,
            "learning_rate": 0.01,
        }
    )
    wcfg.setdefault("seed", seed)
    wanted = set(config.estimators)
    w_model = (
        fit_marginal_ratio(half2, rho_half, config=dict(wcfg))
        if wanted & {"mr", "snmr"} else None
    )
    h_model = fit_h_model(half2, rho_half, config=dict(wcfg)) if "mr-alt" in wanted else None

    q_model = None
    if wanted & {"dm", "dr", "switch-dr", "dros", "sndr"}:
        q_model = fit_outcome_model(
            train, n_actions=knobs["n_a"], mode=knobs.get("outcome_mode", "auto"),
            config=knobs.get("outcome_fit"),
        )

    representation = None
    representation_ratio = None
    if wanted & {"mips", "gmips"}:
        if hasattr(gt, "embedding_ratio"):
            representation = lambda ds: gt.embedding_ratio(ds, gt.target, behavior_full)
            representation_ratio = _identity_ratio()
        elif hasattr(gt, "representation"):
            representation = gt.representation
            representation_ratio = fit_representation_ratio(
                half2, rho_half, gt.representation, config=dict(wcfg)
            )

    inputs = EstimatorInputs(
        dataset=eval_ds,
        target_policy=gt.target,
        policy_ratio=rho_full,
        marginal_ratio=w_model,
        h_model=h_model,
        outcome_model=q_model,
        representation=representation,
        representation_ratio=representation_ratio,
        tau=config.tau,
        lam=config.lam,
    )
    return {est: estimate(est, inputs) for est in config.estimators}


def _tabular_env_from_knobs(config: SweepConfig, knobs: dict) -> TabularEnvironment:
    env = knobs.get("env")
    if env is not None:
        return env
    return synth.random_tabular_env(
        seed=int(knobs.get("env_seed", config.base_seed)),
        n_contexts=knobs.get("n_contexts"),
        n_actions=knobs.get("n_a"),
        n_outcomes=knobs.get("n_outcomes"),
        structure=knobs.get("structure"),
    )


def _exact_tabular_models(env: TabularEnvironment):
    w_map = oracle.true_marginal_ratio(env)
    w_fn = FunctionRatio(
        "marginal-ratio",
        lambda ys: np.asarray([w_map[float(v)] for v in np.asarray(ys).reshape(-1)]),
        backing="exact",
    )
    h_fn = FunctionRatio(
        "h-model",
        lambda ys: np.asarray(
            [w_map[float(v)] * float(v) for v in np.asarray(ys).reshape(-1)]
        ),
        backing="exact",
    )
    mu = oracle.conditional_mean_table(env)
    outcome_model = lambda contexts: mu[np.asarray(contexts, dtype=int)]
    return w_fn, h_fn, outcome_model


def _estimate_tabular(env: TabularEnvironment, config: SweepConfig, knobs: dict,
                      seed: int) -> dict:
    m, n = knobs["m"], knobs["n"]
    data = sample_logged_dataset(env, m + n, seed=seed)
    train = data.subset(slice(0, m), role="train")
    eval_ds = data.subset(slice(m, m + n), role="eval")
    target = env.target_policy()
    wanted = set(config.estimators)

    representation = None
    representation_ratio = None
    if knobs.get("exact_weights"):
        rho = PolicyRatio(target, env.behavior_policy(), config.floor)
        w_model, h_model, q_model = _exact_tabular_models(env)
        if wanted & {"mips", "gmips"} and env.has_embeddings:
            table = oracle.embedding_ratio_table(env)
            representation = lambda ds: np.column_stack([ds.contexts, ds.embeddings[:, 0]])
            representation_ratio = FunctionRatio(
                "representation-ratio",
                lambda vals: table[
                    np.asarray(vals)[:, 0].astype(int), np.asarray(vals)[:, 1].astype(int)
                ],
                backing="exact",
            )
    else:
        half1, half2 = split_dataset(train)
        bcfg = {"n_contexts": env.n_contexts, "n_actions": env.n_actions}
        behavior_full = fit_behavior_policy(train, dict(bcfg))
        behavior_half = fit_behavior_policy(half1, dict(bcfg))
        rho = make_policy_ratio(target, behavior_full, config.floor)
        rho_half = make_policy_ratio(target, behavior_half, config.floor)
        w_model = fit_marginal_ratio(half2, rho_half) if wanted & {"mr", "snmr"} else None
        h_model = fit_h_model(half2, rho_half) if "mr-alt" in wanted else None
        q_model = (
            fit_outcome_model(train, n_actions=env.n_actions, mode="table")
            if wanted & {"dm", "dr", "switch-dr", "dros", "sndr"} else None
        )

    inputs = EstimatorInputs(
        dataset=eval_ds,
        target_policy=target,
        policy_ratio=rho,
        marginal_ratio=w_model,
        h_model=h_model,
        outcome_model=q_model,
        representation=representation,
        representation_ratio=representation_ratio,
        tau=config.tau,
        lam=config.lam,
    )
    return {est: estimate(est, inputs) for est in config.estimators}


def _estimate_classification(config: SweepConfig, knobs: dict, seed: int):
    bandit = synth.classification_to_bandit(
        knobs["csv_path"],
        train_fraction=knobs.get("train_fraction", 0.5),
        alpha_star=knobs["alpha_star"],
        seed=seed,
        classifier_config=knobs.get("classifier_config"),
    )
    train, eval_ds = bandit.train, bandit.eval
    limit = knobs.get("n")
    truth = bandit.true_value()
    if limit is not None and limit < len(eval_ds):
        eval_ds = eval_ds.subset(slice(0, limit))
        probs = bandit.target_policy.action_probs(eval_ds.contexts)
        labels = bandit.eval_labels[:limit]
        truth = float(probs[np.arange(limit), labels].mean())

    # With binary rewards the weight table is a two-cell sample mean, so the
    # training rows are reused for it directly: one propensity model is fit on
    # the full training split and every estimator, including the marginal
    # ratio, consumes the same estimated ratios.
    bcfg = dict(knobs.get("behavior_fit") or {})
    behavior_full = fit_behavior_policy(train, dict(bcfg))
    rho_full = make_policy_ratio(bandit.target_policy, behavior_full, config.floor)
    wanted = set(config.estimators)
    w_model = (
        fit_marginal_ratio(train, rho_full) if wanted & {"mr", "snmr"} else None
    )
    h_model = fit_h_model(train, rho_full) if "mr-alt" in wanted else None
    q_model = None
    if wanted & {"dm", "dr", "switch-dr", "dros", "sndr"}:
        q_model = fit_outcome_model(
            train, n_actions=bandit.n_classes, mode=knobs.get("outcome_mode", "auto"),
            config=knobs.get("outcome_fit"),
        )
    inputs = EstimatorInputs(
        dataset=eval_ds,
        target_policy=bandit.target_policy,
        policy_ratio=rho_full,
        marginal_ratio=w_model,
        h_model=h_model,
        outcome_model=q_model,
        tau=config.tau,
        lam=config.lam,
    )
    return {est: estimate(est, inputs) for est in config.estimators}, truth


def _build_ground_truth(config: SweepConfig, knobs: dict):
    """(gt object or env, constant truth or None) for one grid point."""
    if config.generator == "saito":
        gt = synth.SaitoGroundTruth(synth.SaitoSetupConfig(
            d=knobs["d"], n_a=knobs["n_a"], alpha_star=knobs["alpha_star"],
            noise_sd=knobs["noise_sd"], seed=config.base_seed,
        ))
        return gt, gt.true_value(config.truth_draws).value
    if config.generator == "sin":
        gt = synth.SinGroundTruth(synth.SinSetupConfig(
            d=knobs["d"], n_a=knobs["n_a"], alpha_star=knobs["alpha_star"],
            noise_sd=knobs["noise_sd"], seed=config.base_seed,
        ))
        return gt, gt.true_value(config.truth_draws).value
    if config.generator == "tabular":
        env = _tabular_env_from_knobs(config, knobs)
        return env, oracle.true_policy_value(env, "target")
    return None, None  # classification: truth is per-seed


def _evaluate_point(config: SweepConfig, knobs: dict, gt, seed: int):
    """(values by estimator, truth) for one (grid point, seed) task."""
    if config.generator == "classification":
        return _estimate_classification(config, knobs, seed)
    if config.generator == "tabular":
        return _estimate_tabular(gt, config, knobs, seed), None
    return _estimate_synthetic(gt, config, knobs, seed), None


def _sweep_task(config_dict: dict, axis_value, seed: int):
    """Process-pool entry point: pure function of (config, grid point, seed)."""
    config = SweepConfig.from_dict(config_dict)
    knobs = _resolve_knobs(config, axis_value)
    if config.generator == "classification":
        gt = None
    elif config.generator == "tabular":
        gt = _tabular_env_from_knobs(config, knobs)
    elif config.generator == "saito":
        gt = synth.SaitoGroundTruth(synth.SaitoSetupConfig(
            d=knobs["d"], n_a=knobs["n_a"], alpha_star=knobs["alpha_star"],
            noise_sd=knobs["noise_sd"], seed=config.base_seed,
        ))
    else:
        gt = synth.SinGroundTruth(synth.SinSetupConfig(
            d=knobs["d"], n_a=knobs["n_a"], alpha_star=knobs["alpha_star"],
            noise_sd=knobs["noise_sd"], seed=config.base_seed,
        ))
    return _evaluate_point(config, knobs, gt, seed)


def run_sweep(config: SweepConfig) -> SweepResult:
    """Run the sweep and aggregate per-seed estimates into reports.

    Deterministic given the config: grid points and seeds are processed as
    pure tasks (optionally in a process pool) and merged in canonical (grid,
    estimator, seed) order.
    """
    rows = []
    reports = []
    parallel = config.jobs > 1 and len(config.grid) * len(config.seeds) > 1
    if parallel and config.generator == "tabular" and "env" in config.fixed:
        parallel = False  # in-memory environments stay in-process

    task_results: dict = {}
    if parallel:
        config_dict = config.to_dict()
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = {
                (axis_value, seed): pool.submit(_sweep_task, config_dict, axis_value, seed)
                for axis_value in config.grid for seed in config.seeds
            }
            task_results = {key: fut.result() for key, fut in futures.items()}

    for axis_value in config.grid:
        knobs = _resolve_knobs(config, axis_value)
        gt = None
        point_truth = None
        if not parallel:
            gt, point_truth = _build_ground_truth(config, knobs)
        elif config.generator in ("saito", "sin", "tabular"):
            gt_obj, point_truth = _build_ground_truth(config, knobs)
            del gt_obj
        values_by_est = {est: [] for est in config.estimators}
        truths = []
        for seed in config.seeds:
            if parallel:
                values, seed_truth = task_results[(axis_value, seed)]
            else:
                values, seed_truth = _evaluate_point(config, knobs, gt, seed)
            truth = seed_truth if seed_truth is not None else point_truth
            truths.append(truth)
            for est in config.estimators:
                values_by_est[est].append(values[est])
                rows.append((est, config.axis, axis_value, seed, values[est], truth))
        for est in config.estimators:
            params = _provenance(config, est, knobs)
            params["axis_value"] = axis_value
            reports.append(EstimateReport.from_runs(
                est, values_by_est[est], truths, hyperparams=params,
            ))
    return SweepResult(config=config, rows=tuple(rows), reports=tuple(reports))


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def per_seed_csv_text(result: SweepResult) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(PER_SEED_COLUMNS)
    for row in result.rows:
        writer.writerow([_format_cell(v) for v in row])
    return buffer.getvalue()


def aggregate_csv_text(result: SweepResult) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(AGGREGATE_COLUMNS)
    for report in result.reports:
        writer.writerow([
            report.estimator_id,
            result.config.axis,
            _format_cell(report.hyperparams.get("axis_value")),
            repr(report.mse),
            repr(report.bias_sq),
            repr(report.variance),
            len(report.per_seed_values),
        ])
    return buffer.getvalue()


def write_sweep_outputs(result: SweepResult, out_dir, json_mirror: bool = False) -> dict:
    """Write per-seed and aggregate CSVs (and optional JSON mirror) atomically."""
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "per_seed": os.path.join(out_dir, "per_seed.csv"),
        "aggregate": os.path.join(out_dir, "aggregate.csv"),
    }
    atomic_write_text(paths["per_seed"], per_seed_csv_text(result))
    atomic_write_text(paths["aggregate"], aggregate_csv_text(result))
    if json_mirror:
        payload = {
            "config": result.config.to_dict(),
            "per_seed": [dict(zip(PER_SEED_COLUMNS, row)) for row in result.rows],
            "aggregate": [
                {
                    "estimator": r.estimator_id,
                    "axis": result.config.axis,
                    "axis_value": r.hyperparams.get("axis_value"),
                    "mse": r.mse,
                    "bias_sq": r.bias_sq,
                    "variance": r.variance,
                    "n_seeds": len(r.per_seed_values),
                }
                for r in result.reports
            ],
        }
        paths["json"] = os.path.join(out_dir, "results.json")
        atomic_write_text(paths["json"], json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return paths


# ---------------------------------------------------------------------------
# Exact-weight replication against the oracle
# ---------------------------------------------------------------------------


def exact_weight_replication(
    env: TabularEnvironment,
    estimator_ids,
    n: int,
    n_reps: int,
    seed: int = 0,
    tau: float = DEFAULT_TAU,
    lam: float = DEFAULT_LAMBDA,
) -> dict:
    """Replicate size-n i.i.d. datasets with exact weights, vectorized.

    Samples `n_reps` datasets of `n` records from the environment's finest
    joint support and evaluates each estimator as the mean of its exact
    per-cell summand, sharing the draws across estimators (paired
    replications). Returns {estimator_id: (n_reps,) estimates}.
    """
    if env.has_representation_chain:
        joint = oracle.joint_chain(env, "behavior")
    elif env.has_embeddings and env.embedding_outcome_table is not None:
        joint = oracle.joint_xaey(env, "behavior")
    else:
        joint = oracle.joint_xay(env, "behavior")
    flat = joint.ravel()
    flat = flat / flat.sum()

    summands = {}
    for est in estimator_ids:
        _, z = oracle.summand_table(env, est, tau=tau, lam=lam)
        if z.shape != joint.shape:
            if z.ndim == 3 and joint.ndim == 4:
                z = np.broadcast_to(z[:, :, None, :], joint.shape)
            elif z.ndim == 3 and joint.ndim == 5:
                z = np.broadcast_to(z[:, :, None, None, :], joint.shape)
            else:
                raise ConfigurationError(
                    f"summand for {est!r} does not embed in the sampled joint"
                )
        summands[est] = np.ascontiguousarray(z).ravel()

    rng = rng_from((seed, _REPLICATION_STREAM))
    idx = rng.choice(flat.size, size=(int(n_reps), int(n)), p=flat)
    return {est: z[idx].mean(axis=1) for est, z in summands.items()}


def empirical_variance_se(values) -> float:
    """Standard error of the sample variance via fourth-moment asymptotics."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    r = v.size
    if r < 4:
        raise ValueError("need at least 4 replications")
    centered = v - v.mean()
    s2 = float(np.sum(centered**2) / (r - 1))
    m4 = float(np.mean(centered**4))
    inner = (m4 - s2**2 * (r - 3) / (r - 1)) / r
    return float(np.sqrt(max(inner, 0.0)))


# ---------------------------------------------------------------------------
# Treatment-effect experiments
# ---------------------------------------------------------------------------


def ate_error(report, true_ate: float) -> float:
    """Absolute treatment-effect error |estimate - truth| (symmetric)."""
    value = report.value if isinstance(report, EstimateReport) else float(report)
    return abs(value - float(true_ate))


def ate_preset_env() -> TabularEnvironment:
    """Fixed binary-treatment environment with a known effect.

    The behavior policy is strongly skewed per context (treatment
    probability 0.1 for the contextually disfavored arm), so signed
    inverse-propensity weights are large, and the outcome probabilities put
    the most Bernoulli variance on the rarely logged cells — the small-n
    regime where pooling weights by outcome value helps most.
    """
    p_y1 = np.array([
        [0.25, 0.55],   # context 0: p(y=1 | x, a=0), p(y=1 | x, a=1)
        [0.45, 0.75],   # context 1
    ])
    outcome_table = np.stack([1.0 - p_y1, p_y1], axis=-1)
    return TabularEnvironment(
        context_probs=[0.5, 0.5],
        behavior_table=[[0.9, 0.1], [0.1, 0.9]],
        target_table=[[0.5, 0.5], [0.5, 0.5]],
        outcome_support=[0.0, 1.0],
        outcome_table=outcome_table,
    )


def run_ate_experiment(
    env: TabularEnvironment | None = None,
    methods=ATE_METHODS,
    n: int = 50,
    m: int = 1600,
    seeds=DEFAULT_SEEDS,
    tau: float = DEFAULT_TAU,
    lam: float = DEFAULT_LAMBDA,
    floor: float = DEFAULT_RATIO_FLOOR,
) -> dict:
    """Seed-replicated treatment-effect estimation with fitted models.

    Per seed: sample m + n records, fit the behavior policy on the training
    split (counts), fit signed outcome-marginal weights on half the training
    split with propensities from the other half, fit a cell-mean outcome
    model, and evaluate each method on the evaluation split. Returns
    {"true_ate": float, "reports": {method: EstimateReport}}.
    """
    env = ate_preset_env() if env is None else env
    if env.n_actions != 2:
        raise ConfigurationError("treatment-effect experiments need n_actions = 2")
    seeds = tuple(int(s) for s in seeds)
    if len(set(seeds)) != len(seeds) or not seeds:
        raise ConfigurationError("seeds must be nonempty and distinct")
    truth = oracle.true_ate(env)
    values = {method: [] for method in methods}
    for seed in seeds:
        data = sample_logged_dataset(env, m + n, seed=seed)
        train = data.subset(slice(0, m), role="train")
        eval_ds = data.subset(slice(m, m + n), role="eval")
        half1, half2 = split_dataset(train)
        bcfg = {"n_contexts": env.n_contexts, "n_actions": 2}
        behavior_full = fit_behavior_policy(train, dict(bcfg))
        behavior_half = fit_behavior_policy(half1, dict(bcfg))
        w_model = fit_ate_weights(half2, behavior_half, floor=floor)
        q_model = fit_outcome_model(train, n_actions=2, mode="table")
        inputs = EstimatorInputs(
            dataset=eval_ds,
            outcome_model=q_model,
            ate_ratio=make_ate_ratio(behavior_full, floor),
            ate_weight_model=w_model,
            tau=tau,
            lam=lam,
        )
        for method in methods:
            values[method].append(ate_estimate(method, inputs))
    reports = {
        method: EstimateReport.from_runs(
            f"ate-{method}", values[method], truth,
            hyperparams={"n": n, "m": m, "tau": tau, "lam": lam, "floor": floor},
        )
        for method in methods
    }
    return {"true_ate": truth, "reports": reports}
