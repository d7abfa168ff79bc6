"""Exact finite-space computations over tabular environments.

Everything here enumerates joint probability tables; nothing samples. The
module turns the estimator theory into checkable statements:

* `marginal_ratio_forms` computes the outcome-marginal weight w(y) both as
  the quotient of outcome marginals and as the conditional mean of the
  policy ratio given the outcome; the two must coincide (the regression
  characterization of the marginal ratio).
* `exact_moments` returns the exact per-sample mean and variance of each
  estimator's summand under the logging distribution, for exact or supplied
  weight/outcome models.
* the `variance_*`, `ate_variance_*`, `gmips_variance_reduction`,
  `approx_weight_identities`, and `divergence_check` functions compute both
  sides of the variance identities/inequalities and the data-processing
  inequality for f-divergences, returning `CheckResult` records.
* `run_oracle_checks` sweeps all checks over seeded random environments and
  produces the JSON-able report behind the `oracle-check` CLI subcommand.

Tolerances are scaled: |lhs - rhs| <= tol * max(1, |lhs|, |rhs|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ._validation import (
    ConfigurationError,
    SupportViolationError,
    UnsupportedEstimatorError,
)
from .domain import Policy, TabularEnvironment, TabularPolicy

DEFAULT_TAU = 10.0
DEFAULT_LAMBDA = 10.0

IDENTITY_TOL = 1e-10
DUALITY_TOL = 1e-12
CHAIN_TOL = 1e-12


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one exact identity / inequality / ordering check.

    kind 'identity': satisfied iff |lhs - rhs| <= tol * scale.
    kind 'bound': satisfied iff lhs >= rhs - tol * scale.
    kind 'chain': `details['values']` must be non-increasing up to tol.
    """

    check_id: str
    kind: str
    satisfied: bool
    lhs: float | None
    rhs: float | None
    gap: float
    tol: float
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "check_id": self.check_id,
            "kind": self.kind,
            "satisfied": bool(self.satisfied),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "gap": self.gap,
            "tol": self.tol,
            "details": {
                k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.details.items()
            },
        }


def _scale(*values: float) -> float:
    return max(1.0, *(abs(v) for v in values))


def _identity_result(check_id: str, lhs: float, rhs: float, tol: float, **details) -> CheckResult:
    gap = abs(lhs - rhs)
    ok = gap <= tol * _scale(lhs, rhs)
    return CheckResult(check_id, "identity", ok, lhs, rhs, gap, tol, dict(details))


def _bound_result(check_id: str, lhs: float, rhs: float, tol: float, **details) -> CheckResult:
    gap = lhs - rhs
    ok = gap >= -tol * _scale(lhs, rhs)
    return CheckResult(check_id, "bound", ok, lhs, rhs, gap, tol, dict(details))


def _chain_result(check_id: str, names, values, tol: float) -> CheckResult:
    values = [float(v) for v in values]
    diffs = [values[i] - values[i + 1] for i in range(len(values) - 1)]
    scale = _scale(*values)
    ok = all(d >= -tol * scale for d in diffs)
    return CheckResult(
        check_id, "chain", ok, None, None, min(diffs), tol,
        {"order": list(names), "values": values},
    )


@dataclass(frozen=True)
class KlResult:
    """KL divergence value with an infinity flag and optional Monte Carlo SE."""

    value: float
    infinite: bool = False
    stderr: float | None = None


# ---------------------------------------------------------------------------
# Joint tables and basic exact quantities
# ---------------------------------------------------------------------------


def _policy_table(env: TabularEnvironment, policy) -> np.ndarray:
    if isinstance(policy, str):
        if policy == "behavior":
            return env.behavior_table
        if policy == "target":
            return env.target_table
        raise ValueError(f"unknown policy spec {policy!r}")
    if isinstance(policy, TabularPolicy):
        return policy.table
    if isinstance(policy, Policy):
        return policy.action_probs(np.arange(env.n_contexts))
    table = np.asarray(policy, dtype=np.float64)
    if table.shape != env.behavior_table.shape:
        raise ValueError("policy table shape must match the environment")
    return table


def joint_xay(env: TabularEnvironment, policy="behavior") -> np.ndarray:
    """Joint p(x, a, y) = p(x) pi(a|x) p(y|x, a), shape (n_x, n_a, n_y)."""
    table = _policy_table(env, policy)
    return env.context_probs[:, None, None] * table[:, :, None] * env.outcome_table


def joint_xaey(env: TabularEnvironment, policy="behavior") -> np.ndarray:
    """Joint over (x, a, e, y) for embedding-mediated environments."""
    if not env.has_embeddings or env.embedding_outcome_table is None:
        raise ConfigurationError("environment has no embedding-mediated outcome")
    table = _policy_table(env, policy)
    return (
        env.context_probs[:, None, None, None]
        * table[:, :, None, None]
        * env.embedding_table[None, :, :, None]
        * env.embedding_outcome_table[:, None, :, :]
    )


def joint_chain(env: TabularEnvironment, policy="behavior") -> np.ndarray:
    """Joint over (x, a, r1, r2, y) for chain-mediated environments."""
    if not env.has_representation_chain:
        raise ConfigurationError("environment has no representation chain")
    table = _policy_table(env, policy)
    return (
        env.context_probs[:, None, None, None, None]
        * table[:, :, None, None, None]
        * env.rep1_table[:, :, :, None, None]
        * env.rep2_table[None, None, :, :, None]
        * env.rep2_outcome_table[None, None, None, :, :]
    )


def true_policy_value(env: TabularEnvironment, policy="target") -> float:
    """Exact E_pi[Y] by enumeration."""
    joint = joint_xay(env, policy)
    return float(np.einsum("xay,y->", joint, env.outcome_support))


def marginal_outcome(env: TabularEnvironment, policy="behavior") -> np.ndarray:
    """Outcome marginal p_pi(y) over the outcome support."""
    return joint_xay(env, policy).sum(axis=(0, 1))


def true_policy_ratio(env: TabularEnvironment) -> np.ndarray:
    """Exact per-cell policy ratio, zero wherever the target has no mass."""
    target = env.target_table
    behavior = env.behavior_table
    out = np.zeros_like(target)
    np.divide(target, behavior, out=out, where=target > 0)
    return out


def conditional_mean_table(env: TabularEnvironment) -> np.ndarray:
    """mu(x, a) = E[Y | x, a]."""
    return env.outcome_table @ env.outcome_support


def conditional_outcome_variance(env: TabularEnvironment) -> np.ndarray:
    """Var[Y | x, a]."""
    second = env.outcome_table @ (env.outcome_support**2)
    return second - conditional_mean_table(env) ** 2


def marginal_ratio_forms(env: TabularEnvironment):
    """The two exact forms of w(y): marginal quotient and conditional mean.

    Returns (w_quotient, w_conditional) over the outcome support. Outcomes
    unreachable under both policies get weight 0 in both forms. A positive
    target marginal over a zero behavior marginal raises.
    """
    p_b = marginal_outcome(env, "behavior")
    p_t = marginal_outcome(env, "target")
    bad = (p_b == 0) & (p_t > 0)
    if np.any(bad):
        raise SupportViolationError(
            "target outcome marginal positive where behavior marginal is zero"
        )
    quotient = np.zeros_like(p_t)
    np.divide(p_t, p_b, out=quotient, where=p_b > 0)

    joint_b = joint_xay(env, "behavior")
    rho = true_policy_ratio(env)
    weighted = np.einsum("xay,xa->y", joint_b, rho)
    conditional = np.zeros_like(weighted)
    np.divide(weighted, p_b, out=conditional, where=p_b > 0)
    return quotient, conditional


def marginal_ratio_duality(env: TabularEnvironment, tol: float = DUALITY_TOL) -> CheckResult:
    """Check that the two forms of w(y) agree to `tol` (scaled per outcome)."""
    quotient, conditional = marginal_ratio_forms(env)
    scale = np.maximum(1.0, np.maximum(np.abs(quotient), np.abs(conditional)))
    gaps = np.abs(quotient - conditional) / scale
    worst = float(gaps.max()) if gaps.size else 0.0
    return CheckResult(
        "marginal-ratio-duality", "identity", worst <= tol,
        None, None, worst, tol,
        {"w_quotient": quotient, "w_conditional": conditional},
    )


def true_marginal_ratio(env: TabularEnvironment) -> dict:
    """Map outcome value -> exact w(y); both internal forms are verified."""
    result = marginal_ratio_duality(env, tol=1e-9)
    if not result.satisfied:
        raise ArithmeticError(
            f"marginal-ratio forms disagree by {result.gap:g}; environment tables "
            "are inconsistent"
        )
    quotient = result.details["w_quotient"]
    return {float(y): float(w) for y, w in zip(env.outcome_support, quotient)}


# ---------------------------------------------------------------------------
# Exact estimator moments
# ---------------------------------------------------------------------------


def _as_rho(env: TabularEnvironment, rho) -> np.ndarray:
    if rho is None:
        return true_policy_ratio(env)
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != env.behavior_table.shape:
        raise ValueError("rho table must have shape (n_x, n_a)")
    return rho


def _as_w(env: TabularEnvironment, w) -> np.ndarray:
    if w is None:
        quotient, _ = marginal_ratio_forms(env)
        return quotient
    if isinstance(w, Mapping):
        return np.asarray([w[float(y)] for y in env.outcome_support], dtype=np.float64)
    if callable(w) and not isinstance(w, np.ndarray):
        return np.asarray(w(env.outcome_support), dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != env.outcome_support.shape:
        raise ValueError("w vector must align with the outcome support")
    return w


def _as_mu(env: TabularEnvironment, mu) -> np.ndarray:
    if mu is None:
        return conditional_mean_table(env)
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != env.behavior_table.shape:
        raise ValueError("mu table must have shape (n_x, n_a)")
    return mu


def _moments(joint: np.ndarray, summand: np.ndarray):
    mean = float((joint * summand).sum())
    second = float((joint * summand**2).sum())
    return mean, second - mean**2


def _mips_ratio_xe(env: TabularEnvironment) -> np.ndarray:
    """Embedding-marginal ratio p_t(e|x) / p_b(e|x) on (x, e) cells."""
    p_b = env.behavior_table @ env.embedding_table
    p_t = env.target_table @ env.embedding_table
    out = np.zeros_like(p_t)
    np.divide(p_t, p_b, out=out, where=p_b > 0)
    return out


def embedding_ratio_table(env: TabularEnvironment) -> np.ndarray:
    """Exact embedding-marginal weights on (x, e) cells for embedding envs."""
    if not env.has_embeddings:
        raise ConfigurationError("environment has no embeddings")
    return _mips_ratio_xe(env)


def _chain_marginals(env: TabularEnvironment, policy: str):
    p_r1 = np.einsum("x,xa,xar->r", env.context_probs, _policy_table(env, policy), env.rep1_table)
    p_r2 = p_r1 @ env.rep2_table
    return p_r1, p_r2


def _chain_ratio(env: TabularEnvironment, level: int) -> np.ndarray:
    b1, b2 = _chain_marginals(env, "behavior")
    t1, t2 = _chain_marginals(env, "target")
    num, den = (t1, b1) if level == 1 else (t2, b2)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _ate_delta_policies(env: TabularEnvironment):
    if env.n_actions != 2:
        raise ConfigurationError("treatment-effect analysis requires n_actions = 2")
    n_x = env.n_contexts
    always0 = np.zeros((n_x, 2))
    always0[:, 0] = 1.0
    always1 = np.zeros((n_x, 2))
    always1[:, 1] = 1.0
    return always0, always1


def true_ate(env: TabularEnvironment) -> float:
    """Exact E[Y(1) - Y(0)] via the two deterministic policies."""
    always0, always1 = _ate_delta_policies(env)
    return true_policy_value(env, always1) - true_policy_value(env, always0)


def _ate_rho(env: TabularEnvironment) -> np.ndarray:
    _ate_delta_policies(env)
    if np.any(env.behavior_table <= 0):
        raise SupportViolationError("treatment weights need a strictly positive behavior policy")
    signs = np.array([-1.0, 1.0])
    return signs[None, :] / env.behavior_table


def _ate_w(env: TabularEnvironment) -> np.ndarray:
    always0, always1 = _ate_delta_policies(env)
    p_b = marginal_outcome(env, "behavior")
    p_1 = joint_xay(env, always1).sum(axis=(0, 1))
    p_0 = joint_xay(env, always0).sum(axis=(0, 1))
    if np.any((p_b == 0) & (np.abs(p_1 - p_0) > 0)):
        raise SupportViolationError("treatment outcome marginals escape the behavior support")
    out = np.zeros_like(p_b)
    np.divide(p_1 - p_0, p_b, out=out, where=p_b > 0)
    return out


def summand_table(
    env: TabularEnvironment,
    estimator_id: str,
    *,
    rho=None,
    w=None,
    mu_hat=None,
    tau: float = DEFAULT_TAU,
    lam: float = DEFAULT_LAMBDA,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell (joint probabilities, estimator summand) over the joint support.

    The joint is at the estimator's natural granularity: (x, a, y) for
    record-level estimators, (x, a, e, y) for embedding-marginal ones,
    (x, a, r1, r2, y) for chain-marginal ones. Weight/outcome models default
    to their exact values; supply `rho` (n_x, n_a), `w` (vector, map, or
    callable over the outcome support), or `mu_hat` (n_x, n_a) to analyze
    estimated models.
    """
    y = env.outcome_support
    if estimator_id in ("snipw", "snmr", "sndr"):
        raise UnsupportedEstimatorError(
            "self-normalized estimators are ratios, not sample means; "
            "no exact per-sample variance is defined"
        )

    if estimator_id == "ipw":
        joint = joint_xay(env, "behavior")
        summand = _as_rho(env, rho)[:, :, None] * y[None, None, :]
        return joint, summand
    if estimator_id == "mr":
        joint = joint_xay(env, "behavior")
        summand = np.broadcast_to(_as_w(env, w) * y, joint.shape)
        return joint, summand
    if estimator_id in ("dm", "dr", "switch-dr", "dros"):
        joint = joint_xay(env, "behavior")
        mu = _as_mu(env, mu_hat)
        direct = np.einsum("xa,xa->x", env.target_table, mu)
        if estimator_id == "dm":
            summand = np.broadcast_to(direct[:, None, None], joint.shape)
            return joint, summand
        rho_t = _as_rho(env, rho)
        if estimator_id == "switch-dr":
            rho_t = rho_t * (rho_t <= tau)
        elif estimator_id == "dros":
            if np.isinf(lam):
                pass  # lam -> inf leaves the weights untouched
            else:
                denom = rho_t**2 + lam
                rho_t = np.where(
                    denom > 0, lam * rho_t / np.where(denom > 0, denom, 1.0), 0.0
                )
        resid = y[None, None, :] - mu[:, :, None]
        summand = rho_t[:, :, None] * resid + direct[:, None, None]
        return joint, summand
    if estimator_id == "mips":
        joint = joint_xaey(env, "behavior")
        ratio = _mips_ratio_xe(env)
        summand = ratio[:, None, :, None] * y[None, None, None, :]
        return joint, np.broadcast_to(summand, joint.shape)
    if estimator_id in ("gmips1", "gmips2"):
        level = 1 if estimator_id.endswith("1") else 2
        joint = joint_chain(env, "behavior")
        ratio = _chain_ratio(env, level)
        if level == 1:
            summand = ratio[None, None, :, None, None] * y[None, None, None, None, :]
        else:
            summand = ratio[None, None, None, :, None] * y[None, None, None, None, :]
        return joint, np.broadcast_to(summand, joint.shape)
    if estimator_id == "gmdr":
        return _gmdr_summand(env)
    if estimator_id in ("ate-ipw", "ate-mr", "ate-dm", "ate-dr"):
        joint = joint_xay(env, "behavior")
        if estimator_id == "ate-ipw":
            summand = _ate_rho(env)[:, :, None] * y[None, None, :]
            return joint, summand
        if estimator_id == "ate-mr":
            summand = np.broadcast_to(_ate_w(env) * y, joint.shape)
            return joint, summand
        mu = _as_mu(env, mu_hat)
        contrast = mu[:, 1] - mu[:, 0]
        if estimator_id == "ate-dm":
            summand = np.broadcast_to(contrast[:, None, None], joint.shape)
            return joint, summand
        resid = y[None, None, :] - mu[:, :, None]
        summand = _ate_rho(env)[:, :, None] * resid + contrast[:, None, None]
        return joint, summand
    raise UnsupportedEstimatorError(f"no exact-variance analysis for {estimator_id!r}")


def exact_moments(
    env: TabularEnvironment,
    estimator_id: str,
    *,
    rho=None,
    w=None,
    mu_hat=None,
    tau: float = DEFAULT_TAU,
    lam: float = DEFAULT_LAMBDA,
) -> tuple[float, float]:
    """Exact (mean, per-sample variance) of the estimator's summand.

    The variance is n * Var of the estimator on datasets of size n, since
    every estimator here is an i.i.d. sample mean.
    """
    joint, summand = summand_table(
        env, estimator_id, rho=rho, w=w, mu_hat=mu_hat, tau=tau, lam=lam
    )
    return _moments(joint, summand)


def _gmdr_summand(env: TabularEnvironment) -> tuple[np.ndarray, np.ndarray]:
    """Representation-level hybrid with exact ratios and exact mu_tilde."""
    if env.has_embeddings and env.embedding_outcome_table is not None:
        joint = joint_xaey(env, "behavior")
        ratio = _mips_ratio_xe(env)
        mu_xe = env.embedding_outcome_table @ env.outcome_support
        p_t_e_given_x = env.target_table @ env.embedding_table
        direct = np.einsum("xe,xe->x", p_t_e_given_x, mu_xe)
        y = env.outcome_support
        summand = (
            ratio[:, None, :, None] * (y[None, None, None, :] - mu_xe[:, None, :, None])
            + direct[:, None, None, None]
        )
        return joint, np.broadcast_to(summand, joint.shape)
    if env.has_representation_chain:
        joint = joint_chain(env, "behavior")
        ratio = _chain_ratio(env, 1)
        mu_r1 = env.rep2_table @ (env.rep2_outcome_table @ env.outcome_support)
        p_t_r1_given_x = np.einsum("xa,xar->xr", env.target_table, env.rep1_table)
        direct = np.einsum("xr,r->x", p_t_r1_given_x, mu_r1)
        y = env.outcome_support
        summand = (
            ratio[None, None, :, None, None]
            * (y[None, None, None, None, :] - mu_r1[None, None, :, None, None])
            + direct[:, None, None, None, None]
        )
        return joint, np.broadcast_to(summand, joint.shape)
    raise ConfigurationError("representation-level hybrid needs embeddings or a chain")


def exact_variance(env: TabularEnvironment, estimator_id: str, **kwargs) -> float:
    """Per-sample (n * Var) exact variance of the estimator's summand."""
    return exact_moments(env, estimator_id, **kwargs)[1]


@dataclass(frozen=True)
class OracleReport:
    """Bundle of the exact quantities for one environment."""

    true_value: float
    true_w: dict
    true_rho: dict
    var_ipw: float
    var_mr: float
    var_dr: float
    var_switch: float
    var_dros: float
    var_mips: float | None = None
    var_gmips: dict = field(default_factory=dict)
    var_gmdr: float | None = None
    gap_terms: dict = field(default_factory=dict)


def oracle_report(env: TabularEnvironment, tau: float = DEFAULT_TAU,
                  lam: float = DEFAULT_LAMBDA) -> OracleReport:
    rho = true_policy_ratio(env)
    w_map = true_marginal_ratio(env)
    mediated = env.has_embeddings and env.embedding_outcome_table is not None
    return OracleReport(
        true_value=true_policy_value(env, "target"),
        true_w=w_map,
        true_rho={(x, a): float(rho[x, a]) for x in range(env.n_contexts)
                  for a in range(env.n_actions)},
        var_ipw=exact_variance(env, "ipw"),
        var_mr=exact_variance(env, "mr"),
        var_dr=exact_variance(env, "dr"),
        var_switch=exact_variance(env, "switch-dr", tau=tau),
        var_dros=exact_variance(env, "dros", lam=lam),
        var_mips=exact_variance(env, "mips") if mediated else None,
        var_gmips=(
            {1: exact_variance(env, "gmips1"), 2: exact_variance(env, "gmips2")}
            if env.has_representation_chain else {}
        ),
        var_gmdr=(
            exact_variance(env, "gmdr")
            if (mediated or env.has_representation_chain) else None
        ),
        gap_terms={
            "cond-var-weighted-outcome": _expected_cond_var_rho_y(env, rho),
            "cond-var-model-term": _expected_cond_var_rho_mu_x(env),
        },
    )


# ---------------------------------------------------------------------------
# Proposition-style checks
# ---------------------------------------------------------------------------


def _expected_cond_var_rho_y(env: TabularEnvironment, rho: np.ndarray) -> float:
    """E_b[ Var_b[rho(A,X) | Y] * Y^2 ]."""
    joint = joint_xay(env, "behavior")
    p_y = joint.sum(axis=(0, 1))
    m1 = np.einsum("xay,xa->y", joint, rho)
    m2 = np.einsum("xay,xa->y", joint, rho**2)
    safe = p_y > 0
    cond_var = np.zeros_like(p_y)
    cond_var[safe] = m2[safe] / p_y[safe] - (m1[safe] / p_y[safe]) ** 2
    return float(np.sum(p_y * cond_var * env.outcome_support**2))


def _expected_cond_var_rho_mu_x(env: TabularEnvironment, mu=None, rho=None) -> float:
    """E_b[ Var_b[rho(A,X) mu(A,X) | X] ]."""
    rho = _as_rho(env, rho)
    mu = _as_mu(env, mu)
    g = rho * mu
    m1 = np.einsum("xa,xa->x", env.behavior_table, g)
    m2 = np.einsum("xa,xa->x", env.behavior_table, g**2)
    return float(np.sum(env.context_probs * (m2 - m1**2)))


def variance_identity_vs_ipw(env: TabularEnvironment, tol: float = IDENTITY_TOL) -> CheckResult:
    """Exact-weight variance gap identity.

    Var[IPW] - Var[MR] equals the mean conditional variance of the policy
    ratio given the outcome, scaled by the squared outcome; the gap is
    nonnegative, so exact marginal weighting never increases variance.
    """
    var_ipw = exact_variance(env, "ipw")
    var_mr = exact_variance(env, "mr")
    rhs = _expected_cond_var_rho_y(env, true_policy_ratio(env))
    result = _identity_result(
        "mr-vs-ipw-variance-identity", var_ipw - var_mr, rhs, tol,
        var_ipw=var_ipw, var_mr=var_mr,
    )
    sign_ok = (var_ipw - var_mr) >= -tol * _scale(var_ipw, var_mr)
    if not sign_ok:
        result = CheckResult(
            result.check_id, result.kind, False, result.lhs, result.rhs,
            result.gap, result.tol, result.details,
        )
    return result


def variance_bound_vs_dr(env: TabularEnvironment, mu_hat=None,
                         tol: float = IDENTITY_TOL) -> CheckResult:
    """Lower bound on Var[DR] - Var[MR] for any outcome model in DR.

    The right side uses the exact mu in both conditional-variance terms; the
    DR variance may be computed at a supplied mu_hat.
    """
    var_dr = exact_variance(env, "dr", mu_hat=mu_hat)
    var_mr = exact_variance(env, "mr")
    rhs = (
        _expected_cond_var_rho_y(env, true_policy_ratio(env))
        - _expected_cond_var_rho_mu_x(env)
    )
    return _bound_result(
        "mr-vs-dr-variance-bound", var_dr - var_mr, rhs, tol,
        var_dr=var_dr, var_mr=var_mr, exact_mu=mu_hat is None,
    )


def variance_bound_vs_shrunk_dr(env: TabularEnvironment, scheme: str = "switch",
                                tau: float = DEFAULT_TAU, lam: float = DEFAULT_LAMBDA,
                                tol: float = IDENTITY_TOL) -> CheckResult:
    """Bound for weight-truncated / weight-shrunk DR at the exact mu.

    Var[DR~] - Var[MR] >= E[Var[rho|Y] Y^2] - E[Var[rho mu|X]] - delta, where
    delta = E[(rho^2 - rho~^2) Var[Y|X,A]] accounts for the variance removed
    by truncation/shrinkage.
    """
    rho = true_policy_ratio(env)
    if scheme == "switch":
        rho_mod = rho * (rho <= tau)
        var_mod = exact_variance(env, "switch-dr", tau=tau)
    elif scheme == "dros":
        denom = rho**2 + lam
        rho_mod = np.where(denom > 0, lam * rho / np.where(denom > 0, denom, 1.0), 0.0)
        var_mod = exact_variance(env, "dros", lam=lam)
    else:
        raise ConfigurationError(f"unknown shrinkage scheme {scheme!r}")
    var_mr = exact_variance(env, "mr")
    cond_var_y = conditional_outcome_variance(env)
    delta = float(
        np.sum(
            env.context_probs[:, None] * env.behavior_table
            * (rho**2 - rho_mod**2) * cond_var_y
        )
    )
    rhs = (
        _expected_cond_var_rho_y(env, rho)
        - _expected_cond_var_rho_mu_x(env)
        - delta
    )
    return _bound_result(
        "mr-vs-shrunk-dr-variance-bound", var_mod - var_mr, rhs, tol,
        scheme=scheme, tau=tau, lam=lam, delta=delta, var_shrunk_dr=var_mod, var_mr=var_mr,
    )


def variance_chain_mips(env: TabularEnvironment, tol: float = CHAIN_TOL) -> CheckResult:
    """Ordering Var[IPW] >= Var[MIPS] >= Var[MR] under embedding mediation."""
    if not env.has_embeddings or env.embedding_outcome_table is None:
        raise ConfigurationError("embedding-mediated outcome required for this check")
    values = [exact_variance(env, "ipw"), exact_variance(env, "mips"), exact_variance(env, "mr")]
    return _chain_result("mr-mips-ipw-variance-chain", ["ipw", "mips", "mr"], values, tol)


def variance_chain_representations(env: TabularEnvironment, tol: float = CHAIN_TOL) -> CheckResult:
    """Ordering along the chain (x,a) -> r1 -> r2 -> y: coarser is never worse."""
    if not env.has_representation_chain:
        raise ConfigurationError("representation chain required for this check")
    values = [
        exact_variance(env, "ipw"),
        exact_variance(env, "gmips1"),
        exact_variance(env, "gmips2"),
        exact_variance(env, "mr"),
    ]
    return _chain_result(
        "representation-chain-variance-chain",
        ["ipw", "gmips1", "gmips2", "mr"], values, tol,
    )


def gmips_variance_reduction(env: TabularEnvironment, level: int = 1,
                             tol: float = IDENTITY_TOL) -> CheckResult:
    """Var[IPW] - Var[G-MIPS] >= E[E[Y^2|R] Var[rho|R]] >= 0."""
    var_ipw = exact_variance(env, "ipw")
    if env.has_embeddings and env.embedding_outcome_table is not None:
        var_g = exact_variance(env, "mips")
        joint = joint_xaey(env, "behavior")
        # R = (x, e): condition on those axes.
        p_xe = joint.sum(axis=(1, 3))
        rho = true_policy_ratio(env)
        j_xae = joint.sum(axis=3)
        m1 = np.einsum("xae,xa->xe", j_xae, rho)
        m2 = np.einsum("xae,xa->xe", j_xae, rho**2)
        safe = p_xe > 0
        var_rho = np.zeros_like(p_xe)
        var_rho[safe] = m2[safe] / p_xe[safe] - (m1[safe] / p_xe[safe]) ** 2
        ey2 = env.embedding_outcome_table @ (env.outcome_support**2)
        rhs = float(np.sum(p_xe * ey2 * var_rho))
        label = "embedding"
    elif env.has_representation_chain:
        var_g = exact_variance(env, f"gmips{level}")
        joint = joint_chain(env, "behavior")
        rho = true_policy_ratio(env)
        axis = 2 if level == 1 else 3
        other_axes = tuple(i for i in range(5) if i != axis)
        p_r = joint.sum(axis=other_axes)
        j_xar = joint.sum(axis=(4, 3 if level == 1 else 2))
        m1 = np.einsum("xar,xa->r", j_xar, rho)
        m2 = np.einsum("xar,xa->r", j_xar, rho**2)
        safe = p_r > 0
        var_rho = np.zeros_like(p_r)
        var_rho[safe] = m2[safe] / p_r[safe] - (m1[safe] / p_r[safe]) ** 2
        if level == 1:
            ey2 = env.rep2_table @ (env.rep2_outcome_table @ (env.outcome_support**2))
        else:
            ey2 = env.rep2_outcome_table @ (env.outcome_support**2)
        rhs = float(np.sum(p_r * ey2 * var_rho))
        label = f"chain-level-{level}"
    else:
        raise ConfigurationError("representation structure required for this check")
    result = _bound_result(
        "representation-variance-reduction", var_ipw - var_g, rhs, tol,
        representation=label, var_ipw=var_ipw, var_gmips=var_g,
    )
    if rhs < -tol:
        result = CheckResult(result.check_id, result.kind, False, result.lhs,
                             result.rhs, result.gap, result.tol, result.details)
    return result


def ate_variance_identity(env: TabularEnvironment, tol: float = IDENTITY_TOL) -> CheckResult:
    """Treatment-effect analogue of the IPW-vs-MR variance gap identity."""
    var_ipw = exact_variance(env, "ate-ipw")
    var_mr = exact_variance(env, "ate-mr")
    rhs = _expected_cond_var_rho_y(env, _ate_rho(env))
    return _identity_result(
        "ate-mr-vs-ipw-variance-identity", var_ipw - var_mr, rhs, tol,
        var_ipw=var_ipw, var_mr=var_mr,
    )


def ate_variance_bound_vs_dr(env: TabularEnvironment, mu_hat=None,
                             tol: float = IDENTITY_TOL) -> CheckResult:
    """Treatment-effect analogue of the DR-vs-MR variance lower bound."""
    var_dr = exact_variance(env, "ate-dr", mu_hat=mu_hat)
    var_mr = exact_variance(env, "ate-mr")
    rho = _ate_rho(env)
    rhs = (
        _expected_cond_var_rho_y(env, rho)
        - _expected_cond_var_rho_mu_x(env, rho=rho)
    )
    return _bound_result(
        "ate-mr-vs-dr-variance-bound", var_dr - var_mr, rhs, tol,
        var_dr=var_dr, var_mr=var_mr, exact_mu=mu_hat is None,
    )


def approx_weight_identities(env: TabularEnvironment, rho_hat, w_hat,
                             bias_tol: float = DUALITY_TOL,
                             var_tol: float = IDENTITY_TOL) -> tuple[CheckResult, CheckResult]:
    """Bias and variance identities for arbitrary estimated weights.

    With w_tilde(y) = E_b[rho_hat | Y = y] and eps(y) = w_hat(y) - w_tilde(y):

    * Bias(MR at w_hat) - Bias(IPW at rho_hat) = E_b[eps(Y) Y].
    * n(Var[IPW at rho_hat] - Var[MR at w_hat])
        = E_b[Var[rho_hat|Y] Y^2] - Var[eps(Y) Y] - 2 Cov(w_tilde(Y) Y, eps(Y) Y).
    """
    rho_hat = _as_rho(env, rho_hat)
    w_hat = _as_w(env, w_hat)
    y = env.outcome_support
    joint = joint_xay(env, "behavior")
    p_y = joint.sum(axis=(0, 1))
    weighted = np.einsum("xay,xa->y", joint, rho_hat)
    w_tilde = np.zeros_like(weighted)
    np.divide(weighted, p_y, out=w_tilde, where=p_y > 0)
    eps = w_hat - w_tilde
    eps[p_y == 0] = 0.0

    truth = true_policy_value(env, "target")
    mean_ipw, var_ipw = _moments(joint, rho_hat[:, :, None] * y[None, None, :])
    mean_mr, var_mr = _moments(joint, np.broadcast_to(w_hat * y, joint.shape))
    bias_lhs = (mean_mr - truth) - (mean_ipw - truth)
    bias_rhs = float(np.sum(p_y * eps * y))
    bias_check = _identity_result(
        "approx-weight-bias-identity", bias_lhs, bias_rhs, bias_tol,
        bias_mr=mean_mr - truth, bias_ipw=mean_ipw - truth,
    )

    a = eps * y
    b = w_tilde * y
    e_a = float(np.sum(p_y * a))
    e_b = float(np.sum(p_y * b))
    var_eps = float(np.sum(p_y * a**2)) - e_a**2
    cov = float(np.sum(p_y * a * b)) - e_a * e_b
    rhs = _expected_cond_var_rho_y(env, rho_hat) - var_eps - 2.0 * cov
    var_check = _identity_result(
        "approx-weight-variance-identity", var_ipw - var_mr, rhs, var_tol,
        var_ipw=var_ipw, var_mr=var_mr, var_eps_term=var_eps, cov_term=cov,
    )
    return bias_check, var_check


# ---------------------------------------------------------------------------
# Divergences
# ---------------------------------------------------------------------------

_F_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "kl": lambda t: np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0),
    "total-variation": lambda t: 0.5 * np.abs(t - 1.0),
    "chi-square": lambda t: (t - 1.0) ** 2,
}


def f_divergence(p: np.ndarray, q: np.ndarray, f: str) -> float:
    """D_f(p || q) = sum_{q>0} q f(p/q) for a convex f with f(1) = 0."""
    if f not in _F_FUNCTIONS:
        raise ValueError(f"unknown or non-convex divergence id {f!r}")
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if np.any((q == 0) & (p > 0)):
        raise SupportViolationError("p has mass outside the support of q")
    mask = q > 0
    ratio = p[mask] / q[mask]
    return float(np.sum(q[mask] * _F_FUNCTIONS[f](ratio)))


def divergence_check(env: TabularEnvironment, f: str = "kl",
                     tol: float = DUALITY_TOL) -> CheckResult:
    """Joint f-divergence over (x, a, y) never falls below the outcome-marginal one."""
    joint_div = f_divergence(joint_xay(env, "target"), joint_xay(env, "behavior"), f)
    marginal_div = f_divergence(marginal_outcome(env, "target"),
                                marginal_outcome(env, "behavior"), f)
    return _bound_result(
        "divergence-data-processing", joint_div, marginal_div, tol, f=f,
    )


def policy_kl(env: TabularEnvironment) -> KlResult:
    """Exact E_x[ KL(pi_b(.|x) || pi_t(.|x)) ] with an infinity flag."""
    p_b = env.behavior_table
    p_t = env.target_table
    if np.any((p_b > 0) & (p_t == 0)):
        return KlResult(math.inf, infinite=True)
    mask = p_b > 0
    terms = np.zeros_like(p_b)
    terms[mask] = p_b[mask] * np.log(p_b[mask] / p_t[mask])
    return KlResult(float(np.sum(env.context_probs * terms.sum(axis=1))))


def policy_kl_mc(behavior: Policy, target: Policy, contexts) -> KlResult:
    """Monte Carlo KL(pi_b || pi_t) over sampled contexts with standard error."""
    p_b = behavior.action_probs(contexts)
    p_t = target.action_probs(contexts)
    if np.any((p_b > 0) & (p_t == 0)):
        return KlResult(math.inf, infinite=True)
    mask = p_b > 0
    terms = np.zeros_like(p_b)
    terms[mask] = p_b[mask] * np.log(p_b[mask] / p_t[mask])
    per_context = terms.sum(axis=1)
    n = per_context.size
    return KlResult(
        float(per_context.mean()),
        stderr=float(per_context.std(ddof=1) / np.sqrt(n)) if n > 1 else None,
    )


# ---------------------------------------------------------------------------
# Dispatcher and the seeded check suite
# ---------------------------------------------------------------------------

VARIANCE_CHECK_IDS = (
    "marginal-ratio-duality",
    "mr-vs-ipw-variance-identity",
    "mr-vs-dr-variance-bound",
    "mr-vs-shrunk-dr-variance-bound",
    "mr-mips-ipw-variance-chain",
    "representation-chain-variance-chain",
    "representation-variance-reduction",
    "ate-mr-vs-ipw-variance-identity",
    "ate-mr-vs-dr-variance-bound",
)


def variance_check(env: TabularEnvironment, which: str, **kwargs) -> CheckResult:
    """Dispatch an exact variance/duality check by id."""
    dispatch = {
        "marginal-ratio-duality": marginal_ratio_duality,
        "mr-vs-ipw-variance-identity": variance_identity_vs_ipw,
        "mr-vs-dr-variance-bound": variance_bound_vs_dr,
        "mr-vs-shrunk-dr-variance-bound": variance_bound_vs_shrunk_dr,
        "mr-mips-ipw-variance-chain": variance_chain_mips,
        "representation-chain-variance-chain": variance_chain_representations,
        "representation-variance-reduction": gmips_variance_reduction,
        "ate-mr-vs-ipw-variance-identity": ate_variance_identity,
        "ate-mr-vs-dr-variance-bound": ate_variance_bound_vs_dr,
    }
    if which not in dispatch:
        raise ConfigurationError(f"unknown check id {which!r}")
    return dispatch[which](env, **kwargs)


def run_oracle_checks(n_envs: int = 100, base_seed: int = 0,
                      tau: float = DEFAULT_TAU, lam: float = DEFAULT_LAMBDA) -> dict:
    """Run every exact check over seeded random environments.

    Returns a JSON-able report with one entry per (environment, check) and
    per-instance seeds for replay. `all_passed` is the overall verdict.
    """
    from . import synth  # local import keeps module load light

    results = []

    def record(seed, structure, check: CheckResult):
        results.append({"env_seed": int(seed), "structure": structure, **check.as_dict()})

    for i in range(n_envs):
        seed = base_seed + i
        env = synth.random_tabular_env(seed=seed)
        rng = np.random.default_rng(seed + 10_000)
        record(seed, "plain", marginal_ratio_duality(env))
        record(seed, "plain", variance_identity_vs_ipw(env))
        record(seed, "plain", variance_bound_vs_dr(env))
        mu_rand = rng.normal(size=env.behavior_table.shape)
        record(seed, "plain", variance_bound_vs_dr(env, mu_hat=mu_rand))
        record(seed, "plain", variance_bound_vs_shrunk_dr(env, "switch", tau=tau))
        record(seed, "plain", variance_bound_vs_shrunk_dr(env, "dros", lam=lam))
        rho_hat = np.abs(true_policy_ratio(env) + 0.3 * rng.normal(size=env.behavior_table.shape))
        w_hat = rng.normal(1.0, 0.5, size=env.outcome_support.shape)
        bias_check, var_check = approx_weight_identities(env, rho_hat, w_hat)
        record(seed, "plain", bias_check)
        record(seed, "plain", var_check)
        for f in ("kl", "total-variation", "chi-square"):
            record(seed, "plain", divergence_check(env, f))

        env_emb = synth.random_tabular_env(seed=seed, structure="assumption2")
        record(seed, "embedding", variance_chain_mips(env_emb))
        record(seed, "embedding", gmips_variance_reduction(env_emb))

        env_chain = synth.random_tabular_env(seed=seed, structure="chain")
        record(seed, "chain", variance_chain_representations(env_chain))
        record(seed, "chain", gmips_variance_reduction(env_chain, level=1))
        record(seed, "chain", gmips_variance_reduction(env_chain, level=2))

        env_binary = synth.random_tabular_env(seed=seed, n_actions=2)
        record(seed, "binary", ate_variance_identity(env_binary))
        record(seed, "binary", ate_variance_bound_vs_dr(env_binary))

    summary: dict = {}
    for row in results:
        stats = summary.setdefault(row["check_id"], {"count": 0, "failures": 0})
        stats["count"] += 1
        stats["failures"] += 0 if row["satisfied"] else 1
    return {
        "n_envs": n_envs,
        "base_seed": base_seed,
        "all_passed": all(row["satisfied"] for row in results),
        "summary": summary,
        "checks": results,
    }
