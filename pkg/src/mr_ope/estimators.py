"""Point estimators of the target-policy value E_pi[Y].

Every estimator is a pure function of (dataset, fitted models,
hyperparameters) collected in `EstimatorInputs`. Nothing here mutates inputs
or refits models; all fitting lives in `mr_ope.weightfit`. Direct-method
terms enumerate the finite action set exactly.

Estimator families:

* value-weighting: `ipw_estimate` (per-record policy ratios),
  `mr_estimate` (outcome-marginal ratios), `mr_alt_estimate` (the product
  model h(y) = y * w(y)), `gmips_estimate` (representation-marginal ratios).
* model-based: `dm_estimate` and the hybrid `dr_estimate`, with
  weight-truncated (`switch_dr_estimate`) and weight-shrunk
  (`dros_estimate`) variants, plus the representation-level hybrid
  `gmdr_estimate`.
* self-normalized: `self_normalize` plus the snipw/snmr/sndr wrappers.
* treatment effects: `ate_estimate` for binary-action datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from ._validation import (
    ConfigurationError,
    DegenerateWeightsError,
    as_float_array,
)
from .domain import LoggedDataset, Policy, PolicyRatio

DEFAULT_TAU = 10.0
DEFAULT_LAMBDA = 10.0


@dataclass(frozen=True)
class EstimatorInputs:
    """Dataset plus the fitted models estimators may require.

    Unused fields may stay None; each estimator validates its own
    requirements and raises `ConfigurationError` naming anything missing.

    Field contracts:

    * `policy_ratio` exposes per_record(dataset) -> (n,) nonnegative weights.
    * `marginal_ratio`, `h_model`, `ate_weight_model` are callables on an
      outcome array.
    * `outcome_model` maps contexts to an (n, n_actions) matrix of predicted
      conditional mean outcomes.
    * `representation` maps the dataset to per-record representation values;
      `representation_ratio` maps those values to weights.
    * `rep_support`, `rep_outcome_model`, `rep_conditional` describe the
      enumerable representation layer for the representation-level hybrid:
      support values, mu_tilde over values, and p(r|x, a) as a
      contexts -> (n, n_actions, n_r) callable.
    * `ate_ratio` exposes per_record(dataset) -> signed binary-treatment
      weights.
    """

    dataset: LoggedDataset
    target_policy: Policy | None = None
    policy_ratio: PolicyRatio | None = None
    marginal_ratio: Callable | None = None
    h_model: Callable | None = None
    outcome_model: Callable | None = None
    representation: Callable | None = None
    representation_ratio: Callable | None = None
    rep_support: Sequence | None = None
    rep_outcome_model: Callable | None = None
    rep_conditional: Callable | None = None
    ate_ratio: object | None = None
    ate_weight_model: Callable | None = None
    tau: float = DEFAULT_TAU
    lam: float = DEFAULT_LAMBDA

    def with_dataset(self, dataset: LoggedDataset) -> "EstimatorInputs":
        return replace(self, dataset=dataset)


def _require(inputs: EstimatorInputs, field: str, estimator: str):
    value = getattr(inputs, field)
    if value is None:
        raise ConfigurationError(f"{estimator} requires inputs.{field}")
    return value


def _target_probs(inputs: EstimatorInputs, estimator: str) -> np.ndarray:
    target = _require(inputs, "target_policy", estimator)
    return target.action_probs(inputs.dataset.contexts)


def _outcome_matrix(inputs: EstimatorInputs, estimator: str) -> np.ndarray:
    model = _require(inputs, "outcome_model", estimator)
    matrix = np.asarray(model(inputs.dataset.contexts), dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(inputs.dataset):
        raise ConfigurationError("outcome model must return an (n, n_actions) matrix")
    return matrix


def dm_estimate(inputs: EstimatorInputs) -> float:
    """Plug-in estimate: mean over records of sum_a q_hat(a, x_i) pi_t(a|x_i)."""
    probs = _target_probs(inputs, "dm_estimate")
    matrix = _outcome_matrix(inputs, "dm_estimate")
    if matrix.shape != probs.shape:
        raise ConfigurationError("outcome model and target policy disagree on n_actions")
    return float(np.mean(np.sum(matrix * probs, axis=1)))


def ipw_estimate(inputs: EstimatorInputs) -> float:
    """Importance-weighted mean of outcomes with per-record policy ratios."""
    ratio = _require(inputs, "policy_ratio", "ipw_estimate")
    rho = ratio.per_record(inputs.dataset)
    return float(np.mean(rho * inputs.dataset.outcomes))


def mr_estimate(inputs: EstimatorInputs) -> float:
    """Outcome-marginal-ratio weighted mean: mean of w_hat(y_i) * y_i."""
    w_model = _require(inputs, "marginal_ratio", "mr_estimate")
    w = np.asarray(w_model(inputs.dataset.outcomes), dtype=np.float64)
    return float(np.mean(w * inputs.dataset.outcomes))


def mr_alt_estimate(inputs: EstimatorInputs) -> float:
    """Product-model variant: mean of h_hat(y_i) with h(y) = y * w(y)."""
    h_model = _require(inputs, "h_model", "mr_alt_estimate")
    h = np.asarray(h_model(inputs.dataset.outcomes), dtype=np.float64)
    return float(np.mean(h))


def _dr_core(inputs: EstimatorInputs, estimator: str):
    ratio = _require(inputs, "policy_ratio", estimator)
    probs = _target_probs(inputs, estimator)
    matrix = _outcome_matrix(inputs, estimator)
    rho = ratio.per_record(inputs.dataset)
    fitted = matrix[np.arange(len(inputs.dataset)), inputs.dataset.actions]
    residuals = inputs.dataset.outcomes - fitted
    direct = float(np.mean(np.sum(matrix * probs, axis=1)))
    return rho, residuals, direct


def dr_estimate(inputs: EstimatorInputs) -> float:
    """Importance-weighted residuals around q_hat plus the plug-in term."""
    rho, residuals, direct = _dr_core(inputs, "dr_estimate")
    return float(np.mean(rho * residuals) + direct)


def switch_dr_estimate(inputs: EstimatorInputs) -> float:
    """Hybrid that drops the residual term wherever the weight exceeds tau."""
    if inputs.tau < 0:
        raise ValueError("tau must be >= 0")
    rho, residuals, direct = _dr_core(inputs, "switch_dr_estimate")
    kept = rho <= inputs.tau
    return float(np.mean(rho * residuals * kept) + direct)


def shrink_weights(rho: np.ndarray, lam: float) -> np.ndarray:
    """Optimistic shrinkage lam * rho / (rho^2 + lam); zero at lam = 0."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if math.isinf(lam):
        return np.asarray(rho, dtype=np.float64).copy()
    rho = np.asarray(rho, dtype=np.float64)
    denom = rho**2 + lam
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, lam * rho / np.where(denom > 0, denom, 1.0), 0.0)
    return out


def dros_estimate(inputs: EstimatorInputs) -> float:
    """Hybrid with shrunk weights; lam=0 gives the plug-in, lam=inf the hybrid."""
    rho, residuals, direct = _dr_core(inputs, "dros_estimate")
    shrunk = shrink_weights(rho, inputs.lam)
    return float(np.mean(shrunk * residuals) + direct)


def gmips_estimate(inputs: EstimatorInputs) -> float:
    """Representation-marginal-ratio weighted mean of outcomes.

    The special case r = (x, e) weights by the embedding-marginal ratio;
    r = (x, a) recovers the per-record policy ratio; r = y recovers the
    outcome-marginal ratio.
    """
    representation = _require(inputs, "representation", "gmips_estimate")
    ratio = _require(inputs, "representation_ratio", "gmips_estimate")
    values = representation(inputs.dataset)
    weights = np.asarray(ratio(values), dtype=np.float64)
    if weights.shape != (len(inputs.dataset),):
        raise ConfigurationError("representation ratio must return one weight per record")
    return float(np.mean(weights * inputs.dataset.outcomes))


def gmdr_estimate(inputs: EstimatorInputs) -> float:
    """Representation-level hybrid: weighted residuals around mu_tilde(r)
    plus the enumerated direct term sum_r mu_tilde(r) p_t(r|x_i).
    """
    representation = _require(inputs, "representation", "gmdr_estimate")
    ratio = _require(inputs, "representation_ratio", "gmdr_estimate")
    mu = _require(inputs, "rep_outcome_model", "gmdr_estimate")
    support = _require(inputs, "rep_support", "gmdr_estimate")
    conditional = _require(inputs, "rep_conditional", "gmdr_estimate")
    target = _require(inputs, "target_policy", "gmdr_estimate")

    values = representation(inputs.dataset)
    weights = np.asarray(ratio(values), dtype=np.float64)
    mu_records = np.asarray(mu(values), dtype=np.float64)
    residual_term = float(np.mean(weights * (inputs.dataset.outcomes - mu_records)))

    probs = target.action_probs(inputs.dataset.contexts)
    cond = np.asarray(conditional(inputs.dataset.contexts), dtype=np.float64)
    if cond.ndim != 3 or cond.shape[:2] != probs.shape or cond.shape[2] != len(support):
        raise ConfigurationError(
            "rep_conditional must return (n, n_actions, n_rep) matching rep_support"
        )
    mu_support = np.asarray(mu(np.asarray(support)), dtype=np.float64)
    rep_probs_t = np.einsum("na,nar->nr", probs, cond)
    direct = float(np.mean(rep_probs_t @ mu_support))
    return residual_term + direct


def self_normalize(raw_weights, outcomes) -> float:
    """Weighted mean with weights normalized to sum to one.

    Invariant to rescaling all weights by any nonzero constant; raises when
    the weights sum to zero.
    """
    weights = as_float_array(np.asarray(raw_weights).reshape(-1), "raw_weights")
    outcomes = as_float_array(np.asarray(outcomes).reshape(-1), "outcomes")
    if weights.shape != outcomes.shape:
        raise ValueError("weights and outcomes must have matching lengths")
    total = float(weights.sum())
    if total == 0.0:
        raise DegenerateWeightsError("weights sum to zero; cannot self-normalize")
    return float(np.sum(weights * outcomes) / total)


def snipw_estimate(inputs: EstimatorInputs) -> float:
    ratio = _require(inputs, "policy_ratio", "snipw_estimate")
    rho = ratio.per_record(inputs.dataset)
    return self_normalize(rho, inputs.dataset.outcomes)


def snmr_estimate(inputs: EstimatorInputs) -> float:
    w_model = _require(inputs, "marginal_ratio", "snmr_estimate")
    w = np.asarray(w_model(inputs.dataset.outcomes), dtype=np.float64)
    return self_normalize(w, inputs.dataset.outcomes)


def sndr_estimate(inputs: EstimatorInputs) -> float:
    """Plug-in term plus the self-normalized weighted residual term."""
    rho, residuals, direct = _dr_core(inputs, "sndr_estimate")
    return direct + self_normalize(rho, residuals)


ATE_METHODS = ("dm", "ipw", "dr", "switch-dr", "dros", "mr")


def ate_estimate(method: str, inputs: EstimatorInputs) -> float:
    """Average-treatment-effect estimators for binary-action datasets.

    ipw: mean of signed-weight * y. dr: signed-weighted residuals plus the
    plug-in contrast mean(q_hat(1, x) - q_hat(0, x)). mr: mean of
    w_ate_hat(y) * y. dm: the plug-in contrast alone. switch-dr / dros apply
    the truncation / shrinkage of the policy-value hybrids to the magnitude
    of the signed weights.
    """
    ds = inputs.dataset
    n_a = ds.n_actions if ds.n_actions is not None else int(ds.actions.max()) + 1
    if n_a != 2 or (ds.actions.size and ds.actions.max() > 1):
        raise ConfigurationError("ate_estimate requires binary actions (n_actions = 2)")
    if method not in ATE_METHODS:
        raise ConfigurationError(f"unknown treatment-effect method {method!r}")

    if method == "mr":
        w_model = _require(inputs, "ate_weight_model", "ate_estimate(mr)")
        w = np.asarray(w_model(ds.outcomes), dtype=np.float64)
        return float(np.mean(w * ds.outcomes))

    if method in ("dm", "dr", "switch-dr", "dros"):
        model = _require(inputs, "outcome_model", f"ate_estimate({method})")
        matrix = np.asarray(model(ds.contexts), dtype=np.float64)
        if matrix.shape != (len(ds), 2):
            raise ConfigurationError("outcome model must return an (n, 2) matrix")
        contrast = float(np.mean(matrix[:, 1] - matrix[:, 0]))
        if method == "dm":
            return contrast
    else:
        matrix = None
        contrast = None

    ratio = _require(inputs, "ate_ratio", f"ate_estimate({method})")
    rho = np.asarray(ratio.per_record(ds), dtype=np.float64)
    if method == "ipw":
        return float(np.mean(rho * ds.outcomes))
    fitted = matrix[np.arange(len(ds)), ds.actions]
    residuals = ds.outcomes - fitted
    if method == "dr":
        return float(np.mean(rho * residuals) + contrast)
    if method == "switch-dr":
        if inputs.tau < 0:
            raise ValueError("tau must be >= 0")
        kept = np.abs(rho) <= inputs.tau
        return float(np.mean(rho * residuals * kept) + contrast)
    # dros: shrinkage acts on the signed weight through rho^2
    shrunk = shrink_weights(rho, inputs.lam)
    return float(np.mean(shrunk * residuals) + contrast)


ESTIMATORS: dict[str, Callable[[EstimatorInputs], float]] = {
    "dm": dm_estimate,
    "ipw": ipw_estimate,
    "mr": mr_estimate,
    "mr-alt": mr_alt_estimate,
    "dr": dr_estimate,
    "switch-dr": switch_dr_estimate,
    "dros": dros_estimate,
    "mips": gmips_estimate,
    "gmips": gmips_estimate,
    "gmdr": gmdr_estimate,
    "snipw": snipw_estimate,
    "snmr": snmr_estimate,
    "sndr": sndr_estimate,
}


def estimate(estimator_id: str, inputs: EstimatorInputs) -> float:
    """Dispatch a policy-value estimator by id."""
    try:
        fn = ESTIMATORS[estimator_id]
    except KeyError:
        raise ConfigurationError(f"unknown estimator {estimator_id!r}") from None
    return fn(inputs)
