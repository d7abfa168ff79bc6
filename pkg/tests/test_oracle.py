"""Exact finite-space moments, identities, and divergence checks."""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mr_ope import (
    SupportViolationError,
    UnsupportedEstimatorError,
    random_tabular_env,
)
from mr_ope.domain import TabularEnvironment, rng_from
from mr_ope.oracle import (
    VARIANCE_CHECK_IDS,
    approx_weight_identities,
    ate_variance_bound_vs_dr,
    ate_variance_identity,
    conditional_mean_table,
    divergence_check,
    exact_moments,
    exact_variance,
    f_divergence,
    gmips_variance_reduction,
    joint_xay,
    marginal_outcome,
    marginal_ratio_duality,
    marginal_ratio_forms,
    oracle_report,
    policy_kl,
    policy_kl_mc,
    run_oracle_checks,
    summand_table,
    true_ate,
    true_marginal_ratio,
    true_policy_value,
    variance_bound_vs_dr,
    variance_bound_vs_shrunk_dr,
    variance_chain_mips,
    variance_chain_representations,
    variance_check,
    variance_identity_vs_ipw,
)


def hand_env(target=(1.0, 0.0)) -> TabularEnvironment:
    # One context, logging (0.5, 0.5), outcomes {0, 1} with
    # p(y=1 | a0) = 0.2 and p(y=1 | a1) = 0.6.
    return TabularEnvironment(
        context_probs=np.array([1.0]),
        behavior_table=np.array([[0.5, 0.5]]),
        target_table=np.array([list(target)]),
        outcome_support=np.array([0.0, 1.0]),
        outcome_table=np.array([[[0.8, 0.2], [0.4, 0.6]]]),
    )


def constant_outcome_env() -> TabularEnvironment:
    # Y is identically 1, so the outcome-marginal ratio is constant.
    return TabularEnvironment(
        context_probs=np.array([1.0]),
        behavior_table=np.array([[0.5, 0.5]]),
        target_table=np.array([[1.0, 0.0]]),
        outcome_support=np.array([1.0]),
        outcome_table=np.array([[[1.0], [1.0]]]),
    )


class TestExactValues:
    def test_true_policy_value_hand(self):
        env = hand_env()
        # Point-mass target on a0: E[Y] = 0.2. Behavior: 0.5(0.2 + 0.6) = 0.4.
        assert true_policy_value(env) == pytest.approx(0.2, abs=1e-15)
        assert true_policy_value(env, policy="behavior") == pytest.approx(0.4, abs=1e-15)

    def test_marginal_outcome_hand(self):
        env = hand_env()
        assert_allclose(marginal_outcome(env), [0.6, 0.4], atol=1e-15)
        assert_allclose(marginal_outcome(env, policy="target"), [0.8, 0.2], atol=1e-15)

    def test_joint_and_conditional_tables(self, tiny_env):
        joint = joint_xay(tiny_env)
        assert joint.shape == (
            tiny_env.n_contexts,
            tiny_env.n_actions,
            tiny_env.n_outcomes,
        )
        assert joint.sum() == pytest.approx(1.0, abs=1e-12)
        mu = conditional_mean_table(tiny_env)
        assert mu.shape == (tiny_env.n_contexts, tiny_env.n_actions)
        lo, hi = tiny_env.outcome_support.min(), tiny_env.outcome_support.max()
        assert np.all(mu >= lo - 1e-12) and np.all(mu <= hi + 1e-12)

    def test_marginal_ratio_hand(self):
        env = hand_env()
        # w(y) = p_target(y) / p_behavior(y): w(0) = 0.8/0.6 = 4/3,
        # w(1) = 0.2/0.4 = 1/2.
        w = true_marginal_ratio(env)
        assert w[0.0] == pytest.approx(4.0 / 3.0, abs=1e-12)
        assert w[1.0] == pytest.approx(0.5, abs=1e-12)

    def test_marginal_ratio_forms_agree(self):
        env = hand_env()
        quotient, conditional = marginal_ratio_forms(env)
        assert_allclose(quotient, conditional, atol=1e-14)
        assert_allclose(quotient, [4.0 / 3.0, 0.5], atol=1e-12)

    def test_true_ate_hand(self):
        # E[Y(1)] - E[Y(0)] = 0.6 - 0.2 = 0.4.
        assert true_ate(hand_env()) == pytest.approx(0.4, abs=1e-15)


class TestExactMoments:
    def test_constant_outcome_variances(self):
        env = constant_outcome_env()
        # With Y = 1: Var[rho Y] = E[rho^2] - 1 = 0.5 * 4 - 1 = 1, while the
        # outcome-marginal weight is constant so the MR summand has zero
        # variance.
        assert exact_variance(env, "ipw") == pytest.approx(1.0, abs=1e-12)
        assert exact_variance(env, "mr") == pytest.approx(0.0, abs=1e-15)

    def test_weighting_means_are_unbiased(self, tiny_env):
        truth = true_policy_value(tiny_env)
        for estimator in ("ipw", "mr", "dr", "switch-dr", "dros"):
            mean, var = exact_moments(tiny_env, estimator, tau=np.inf, lam=np.inf)
            assert mean == pytest.approx(truth, abs=1e-12), estimator
            assert var >= 0.0

    def test_untruncated_switch_with_zero_critic_is_ipw(self, tiny_env):
        # With a zero critic and a threshold above every ratio, the switch
        # hybrid collapses to plain importance weighting, moment for moment.
        zero_mu = np.zeros((tiny_env.n_contexts, tiny_env.n_actions))
        trunc = exact_moments(tiny_env, "switch-dr", mu_hat=zero_mu, tau=np.inf)
        plain = exact_moments(tiny_env, "ipw")
        assert trunc[0] == pytest.approx(plain[0], abs=1e-12)
        assert trunc[1] == pytest.approx(plain[1], rel=1e-12)
        # Truncating at tau = 1 can only shrink the second moment of the
        # kept summand.
        tight = exact_moments(tiny_env, "switch-dr", mu_hat=zero_mu, tau=1.0)
        assert tight[1] + tight[0] ** 2 <= plain[1] + plain[0] ** 2 + 1e-12

    def test_summand_rejects_self_normalized(self, tiny_env):
        with pytest.raises(UnsupportedEstimatorError):
            summand_table(tiny_env, "snipw")

    def test_oracle_report_fields(self, tiny_env):
        report = oracle_report(tiny_env)
        assert report.true_value == pytest.approx(true_policy_value(tiny_env), abs=1e-12)
        assert report.var_mr <= report.var_ipw + 1e-12
        assert set(report.true_w) == set(np.round(tiny_env.outcome_support, 12).tolist()) or len(
            report.true_w
        ) == tiny_env.n_outcomes


class TestVarianceRelations:
    def test_duality_on_random_envs(self):
        for seed in range(20):
            res = marginal_ratio_duality(random_tabular_env(seed=seed))
            assert res.satisfied, res

    def test_ipw_identity_and_sign(self):
        for seed in range(20):
            env = random_tabular_env(seed=seed)
            res = variance_identity_vs_ipw(env)
            assert res.satisfied, res
            assert res.rhs >= -1e-15
            assert exact_variance(env, "ipw") - exact_variance(env, "mr") >= -1e-12

    def test_dr_bound_with_exact_and_random_critics(self):
        rng = rng_from((2026, 1))
        for seed in range(10):
            env = random_tabular_env(seed=seed)
            assert variance_bound_vs_dr(env).satisfied
            mu_hat = rng.normal(size=(env.n_contexts, env.n_actions))
            assert variance_bound_vs_dr(env, mu_hat=mu_hat).satisfied

    def test_shrunk_dr_bounds(self):
        for seed in range(10):
            env = random_tabular_env(seed=seed)
            assert variance_bound_vs_shrunk_dr(env, scheme="switch", tau=2.0).satisfied
            assert variance_bound_vs_shrunk_dr(env, scheme="dros", lam=5.0).satisfied

    def test_mips_chain_on_embedded_envs(self):
        for seed in range(10):
            env = random_tabular_env(seed=seed, structure="assumption2")
            res = variance_chain_mips(env)
            assert res.satisfied, res
            assert (
                exact_variance(env, "mr")
                <= exact_variance(env, "mips") + 1e-12
                <= exact_variance(env, "ipw") + 2e-12
            )

    def test_representation_chain(self):
        for seed in range(10):
            env = random_tabular_env(seed=seed, structure="chain")
            assert variance_chain_representations(env).satisfied

    def test_gmips_reduction_terms(self, embedded_env, chain_env):
        assert gmips_variance_reduction(embedded_env).satisfied
        assert gmips_variance_reduction(chain_env, level=1).satisfied
        assert gmips_variance_reduction(chain_env, level=2).satisfied

    def test_ate_identities(self):
        for seed in range(10):
            env = random_tabular_env(seed=seed, n_actions=2)
            assert ate_variance_identity(env).satisfied
            assert ate_variance_bound_vs_dr(env).satisfied

    def test_variance_check_dispatcher(self, embedded_env, chain_env, binary_env, tiny_env):
        env_for = {
            "mr-mips-ipw-variance-chain": embedded_env,
            "representation-chain-variance-chain": chain_env,
            "representation-variance-reduction": embedded_env,
            "ate-mr-vs-ipw-variance-identity": binary_env,
            "ate-mr-vs-dr-variance-bound": binary_env,
        }
        for which in VARIANCE_CHECK_IDS:
            res = variance_check(env_for.get(which, tiny_env), which)
            assert res.satisfied, which
        from mr_ope import ConfigurationError

        with pytest.raises(ConfigurationError):
            variance_check(tiny_env, "not-a-check")


class TestApproximateWeightIdentities:
    def test_random_plugin_weights(self):
        rng = rng_from((99, 5))
        for seed in range(10):
            env = random_tabular_env(seed=seed)
            rho_hat = np.abs(
                conditional_ratio(env) + 0.3 * rng.normal(size=(env.n_contexts, env.n_actions))
            )
            w_hat = rng.normal(
                loc=1.0, scale=0.5, size=env.n_outcomes
            )
            bias_check, var_check = approx_weight_identities(env, rho_hat, w_hat)
            assert bias_check.satisfied, bias_check
            assert var_check.satisfied, var_check


def conditional_ratio(env: TabularEnvironment) -> np.ndarray:
    return np.divide(
        env.target_table,
        env.behavior_table,
        out=np.zeros_like(env.target_table),
        where=env.behavior_table > 0,
    )


class TestDivergences:
    def test_hand_values(self):
        p = np.array([0.5, 0.5])
        q = np.array([0.9, 0.1])
        # KL = 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1) = 0.5 ln(25/9).
        assert f_divergence(p, q, "kl") == pytest.approx(0.5 * np.log(25.0 / 9.0), abs=1e-12)
        # TV = 0.5 (0.4 + 0.4) = 0.4.
        assert f_divergence(p, q, "total-variation") == pytest.approx(0.4, abs=1e-12)
        # chi^2 = 0.16/0.9 + 0.16/0.1 = 16/9.
        assert f_divergence(p, q, "chi-square") == pytest.approx(16.0 / 9.0, abs=1e-12)

    def test_zero_on_identical(self):
        p = np.array([0.25, 0.75])
        for f in ("kl", "total-variation", "chi-square"):
            assert f_divergence(p, p, f) == pytest.approx(0.0, abs=1e-15)

    def test_support_violation_raises(self):
        p = np.array([0.5, 0.5])
        q = np.array([1.0, 0.0])
        for f in ("kl", "total-variation", "chi-square"):
            with pytest.raises(SupportViolationError):
                f_divergence(p, q, f)

    def test_unknown_divergence_rejected(self):
        with pytest.raises((KeyError, ValueError)):
            f_divergence(np.array([1.0]), np.array([1.0]), "hellinger")

    def test_joint_dominates_marginal_on_random_envs(self):
        for seed in range(10):
            env = random_tabular_env(seed=seed)
            for f in ("kl", "total-variation", "chi-square"):
                res = divergence_check(env, f=f)
                assert res.satisfied, (seed, f)
                assert res.lhs >= res.rhs - 1e-12

    def test_equality_when_policies_coincide(self):
        table = np.array([[0.3, 0.7], [0.6, 0.4]])
        env = TabularEnvironment(
            context_probs=np.array([0.5, 0.5]),
            behavior_table=table,
            target_table=table.copy(),
            outcome_support=np.array([0.0, 1.0]),
            outcome_table=np.array(
                [[[0.8, 0.2], [0.4, 0.6]], [[0.5, 0.5], [0.1, 0.9]]]
            ),
        )
        for f in ("kl", "total-variation", "chi-square"):
            res = divergence_check(env, f=f)
            assert res.satisfied
            assert abs(res.lhs) <= 1e-12 and abs(res.rhs) <= 1e-12

    def test_equality_when_outcome_determines_pair(self):
        # Each (x, a) produces a distinct outcome surely, so nothing is lost
        # by marginalizing onto y and the data-processing slack vanishes.
        env = TabularEnvironment(
            context_probs=np.array([1.0]),
            behavior_table=np.array([[0.5, 0.5]]),
            target_table=np.array([[0.3, 0.7]]),
            outcome_support=np.array([0.0, 1.0]),
            outcome_table=np.array([[[1.0, 0.0], [0.0, 1.0]]]),
        )
        for f in ("kl", "total-variation", "chi-square"):
            res = divergence_check(env, f=f)
            assert res.satisfied
            assert abs(res.lhs - res.rhs) <= 1e-12

    def test_policy_kl_exact_and_infinite(self):
        finite = hand_env(target=(0.9, 0.1))
        res = policy_kl(finite)
        assert not res.infinite
        assert res.value == pytest.approx(0.5 * np.log(25.0 / 9.0), abs=1e-12)
        res_inf = policy_kl(hand_env(target=(1.0, 0.0)))
        assert res_inf.infinite and np.isinf(res_inf.value)

    def test_policy_kl_mc_agrees_with_exact(self, tiny_env):
        exact = policy_kl(tiny_env)
        rng = rng_from((1, 2))
        contexts = rng.choice(
            tiny_env.n_contexts, size=20_000, p=tiny_env.context_probs
        )
        mc = policy_kl_mc(
            tiny_env.behavior_policy(), tiny_env.target_policy(), contexts
        )
        assert mc.stderr is not None and mc.stderr > 0
        assert abs(mc.value - exact.value) < 5 * mc.stderr + 1e-3


class TestCheckRunner:
    def test_small_run_all_green(self):
        result = run_oracle_checks(n_envs=3, base_seed=0)
        assert result["all_passed"] is True
        assert result["n_envs"] == 3
        assert result["summary"]
        for check_id, stats in result["summary"].items():
            assert stats["failures"] == 0, check_id
            assert stats["count"] >= 3
        assert all(c["satisfied"] for c in result["checks"])
