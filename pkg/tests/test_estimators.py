"""Hand-checked estimator values, coincidence identities, and properties.

The shared two-record dataset has one context, two actions with logging
probabilities (0.5, 0.5), target policy (1, 0), and logged records
(a=0, y=1) and (a=1, y=3). The per-record policy ratios are therefore
rho = (2, 0), and every frozen value below is derived by hand from that.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mr_ope import (
    ConfigurationError,
    DegenerateWeightsError,
    EstimatorInputs,
    ate_estimate,
    dm_estimate,
    dr_estimate,
    dros_estimate,
    estimate,
    gmdr_estimate,
    gmips_estimate,
    ipw_estimate,
    make_ate_ratio,
    make_policy_ratio,
    mr_alt_estimate,
    mr_estimate,
    self_normalize,
    shrink_weights,
    snipw_estimate,
    snmr_estimate,
    sndr_estimate,
    switch_dr_estimate,
)
from mr_ope.domain import FunctionRatio, LoggedDataset, TabularPolicy


def point_mass_inputs(**overrides) -> EstimatorInputs:
    dataset = LoggedDataset(
        contexts=np.array([0, 0]),
        actions=np.array([0, 1]),
        outcomes=np.array([1.0, 3.0]),
        n_actions=2,
    )
    target = TabularPolicy(np.array([[1.0, 0.0]]))
    behavior = TabularPolicy(np.array([[0.5, 0.5]]))
    base = dict(
        dataset=dataset,
        target_policy=target,
        policy_ratio=make_policy_ratio(target, behavior),
        marginal_ratio=FunctionRatio(
            "marginal-ratio",
            lambda y: np.where(np.asarray(y) == 1.0, 2.0, 0.0),
        ),
        h_model=FunctionRatio(
            "h-model",
            lambda y: np.where(np.asarray(y) == 1.0, 2.0, 0.0) * np.asarray(y),
        ),
        outcome_model=lambda xs: np.tile([[2.0, 3.0]], (len(xs), 1)),
    )
    base.update(overrides)
    return EstimatorInputs(**base)


class TestFrozenValues:
    def test_dm_under_uniform_target(self):
        # E_pi[q_hat] with q_hat = (2, 3) and a 50/50 target is 2.5.
        inputs = point_mass_inputs(target_policy=TabularPolicy(np.array([[0.5, 0.5]])))
        assert dm_estimate(inputs) == pytest.approx(2.5, abs=1e-12)

    def test_dm_under_point_mass_target(self):
        assert dm_estimate(point_mass_inputs()) == pytest.approx(2.0, abs=1e-12)

    def test_ipw(self):
        # mean(2 * 1, 0 * 3) = 1.
        assert ipw_estimate(point_mass_inputs()) == pytest.approx(1.0, abs=1e-12)

    def test_mr(self):
        # w_hat maps y=1 -> 2 and y=3 -> 0, so mean(2 * 1, 0 * 3) = 1.
        assert mr_estimate(point_mass_inputs()) == pytest.approx(1.0, abs=1e-12)

    def test_mr_alt(self):
        # h_hat(y) = w_hat(y) y, so mean(2, 0) = 1.
        assert mr_alt_estimate(point_mass_inputs()) == pytest.approx(1.0, abs=1e-12)

    def test_dr(self):
        # direct 2 plus mean(2 * (1 - 2), 0) = 2 - 1 = 1.
        assert dr_estimate(point_mass_inputs()) == pytest.approx(1.0, abs=1e-12)

    def test_switch_dr_truncates_large_ratios(self):
        # tau = 1 drops the rho = 2 record entirely: 2 + 0 = 2.
        inputs = point_mass_inputs(tau=1.0)
        assert switch_dr_estimate(inputs) == pytest.approx(2.0, abs=1e-12)

    def test_dros_hand_value(self):
        # lam = 1 shrinks rho = 2 to 2/(4+1) * 1 = 0.4:
        # 2 + mean(0.4 * (1-2), 0) = 1.8.
        inputs = point_mass_inputs(lam=1.0)
        assert dros_estimate(inputs) == pytest.approx(1.8, abs=1e-12)

    def test_self_normalized_variants(self):
        inputs = point_mass_inputs()
        # snipw = (2*1 + 0*3) / (2 + 0) = 1; snmr identical with w_hat;
        # sndr = 2 + (2*(1-2) + 0) / 2 = 1.
        assert snipw_estimate(inputs) == pytest.approx(1.0, abs=1e-12)
        assert snmr_estimate(inputs) == pytest.approx(1.0, abs=1e-12)
        assert sndr_estimate(inputs) == pytest.approx(1.0, abs=1e-12)

    def test_gmdr_hand_value(self):
        # Representation = the logged action with a point-mass conditional;
        # mu_tilde = (1.5, 2.5); target (1, 0) makes the direct term 1.5 and
        # the residual term mean(2*(1-1.5), 0) = -0.5.
        def conditional(contexts):
            n = len(contexts)
            eye = np.eye(2)
            return np.tile(eye[None, :, :], (n, 1, 1))

        inputs = point_mass_inputs(
            representation=lambda ds: ds.actions.astype(float),
            representation_ratio=FunctionRatio(
                "representation-ratio",
                lambda r: np.where(np.asarray(r) == 0.0, 2.0, 0.0),
            ),
            rep_support=np.array([0.0, 1.0]),
            rep_outcome_model=lambda r: np.where(np.asarray(r) == 0.0, 1.5, 2.5),
            rep_conditional=conditional,
        )
        assert gmdr_estimate(inputs) == pytest.approx(1.0, abs=1e-12)


class TestWeightTransforms:
    def test_shrink_hand_values(self):
        # lam rho / (rho^2 + lam) at rho = 1, lam = 1 is 1/2.
        assert shrink_weights(np.array([1.0]), 1.0)[0] == pytest.approx(0.5, abs=1e-15)

    def test_shrink_extremes(self):
        rho = np.array([0.0, 1.0, 5.0])
        assert np.all(shrink_weights(rho, 0.0) == 0.0)
        np.testing.assert_array_equal(shrink_weights(rho, np.inf), rho)

    def test_shrink_rejects_negative_lambda(self):
        with pytest.raises(ValueError):
            shrink_weights(np.array([1.0]), -1.0)

    @given(
        st.lists(st.floats(min_value=0, max_value=1e6), min_size=1, max_size=20),
        st.floats(min_value=1e-6, max_value=1e6),
    )
    def test_shrink_bounds_property(self, rho, lam):
        rho = np.asarray(rho)
        shrunk = shrink_weights(rho, lam)
        assert np.all(shrunk >= 0.0)
        assert np.all(shrunk <= rho + 1e-12)
        # The map rho -> lam rho / (rho^2 + lam) peaks at rho = sqrt(lam)
        # with value sqrt(lam) / 2.
        assert np.all(shrunk <= np.sqrt(lam) / 2 + 1e-9)

    def test_self_normalize_hand_value(self):
        assert self_normalize(np.array([2.0, 0.0]), np.array([1.0, 3.0])) == pytest.approx(1.0)

    def test_self_normalize_rejects_zero_total(self):
        with pytest.raises(DegenerateWeightsError):
            self_normalize(np.zeros(3), np.ones(3))

    @given(
        st.lists(st.floats(min_value=0.01, max_value=100), min_size=2, max_size=15),
        st.lists(st.floats(min_value=-50, max_value=50), min_size=2, max_size=15),
        st.floats(min_value=0.01, max_value=1000),
    )
    def test_self_normalize_scale_invariance(self, weights, values, scale):
        k = min(len(weights), len(values))
        w = np.asarray(weights[:k])
        v = np.asarray(values[:k])
        a = self_normalize(w, v)
        b = self_normalize(scale * w, v)
        assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


class TestCoincidences:
    def test_dros_zero_lambda_is_dm(self):
        inputs = point_mass_inputs(lam=0.0)
        assert dros_estimate(inputs) == dm_estimate(inputs)

    def test_dros_huge_lambda_approaches_dr(self):
        inputs = point_mass_inputs(lam=1e12)
        assert abs(dros_estimate(inputs) - dr_estimate(inputs)) < 1e-6

    def test_switch_infinite_tau_is_dr(self):
        inputs = point_mass_inputs(tau=np.inf)
        assert switch_dr_estimate(inputs) == dr_estimate(inputs)

    def test_dr_with_zero_outcome_model_is_ipw(self):
        inputs = point_mass_inputs(outcome_model=lambda xs: np.zeros((len(xs), 2)))
        assert dr_estimate(inputs) == ipw_estimate(inputs)

    def test_gmips_with_record_identity_is_ipw(self):
        # Representation (x, a) scored by the exact policy-ratio table.
        inputs = point_mass_inputs(
            representation=lambda ds: np.stack([ds.contexts, ds.actions], axis=1).astype(float),
            representation_ratio=FunctionRatio(
                "representation-ratio",
                lambda pairs: np.where(np.asarray(pairs)[:, 1] == 0.0, 2.0, 0.0),
            ),
        )
        assert gmips_estimate(inputs) == ipw_estimate(inputs)

    def test_gmips_with_outcome_representation_is_mr(self):
        inputs = point_mass_inputs(
            representation=lambda ds: ds.outcomes,
            representation_ratio=FunctionRatio(
                "representation-ratio",
                lambda y: np.where(np.asarray(y) == 1.0, 2.0, 0.0),
            ),
        )
        assert gmips_estimate(inputs) == mr_estimate(inputs)


class TestTreatmentEffect:
    def inputs(self):
        dataset = LoggedDataset(
            contexts=np.array([0, 0]),
            actions=np.array([1, 0]),
            outcomes=np.array([0.75, 0.25]),
            n_actions=2,
        )
        behavior = TabularPolicy(np.array([[0.5, 0.5]]))
        return EstimatorInputs(
            dataset=dataset,
            ate_ratio=make_ate_ratio(behavior),
            ate_weight_model=FunctionRatio(
                "ate-marginal-ratio",
                lambda y: np.where(np.asarray(y) == 0.75, 2.0, -2.0),
            ),
            outcome_model=lambda xs: np.tile([[0.2, 0.7]], (len(xs), 1)),
        )

    def test_all_methods_hand_value(self):
        # Signed weights (+2, -2); contrast q_hat(1) - q_hat(0) = 0.5;
        # residuals are both 0.05 so the correction terms cancel in pairs.
        inputs = self.inputs()
        for method in ("ipw", "mr", "dm", "dr", "switch-dr", "dros"):
            assert ate_estimate(method, inputs) == pytest.approx(0.5, abs=1e-12), method

    def test_signed_weights_hand_values(self):
        inputs = self.inputs()
        np.testing.assert_allclose(
            inputs.ate_ratio.per_record(inputs.dataset), [2.0, -2.0], atol=1e-12
        )

    def test_switch_drops_large_magnitudes(self):
        # tau = 1 removes both |rho| = 2 records, leaving the contrast 0.5.
        inputs = self.inputs().with_dataset(self.inputs().dataset)
        inputs = EstimatorInputs(**{**inputs.__dict__, "tau": 1.0})
        assert ate_estimate("switch-dr", inputs) == pytest.approx(0.5, abs=1e-12)

    def test_rejects_non_binary_actions(self):
        dataset = LoggedDataset(
            contexts=np.array([0]),
            actions=np.array([2]),
            outcomes=np.array([1.0]),
            n_actions=3,
        )
        inputs = EstimatorInputs(dataset=dataset)
        with pytest.raises(ConfigurationError):
            ate_estimate("ipw", inputs)

    def test_rejects_unknown_method(self):
        with pytest.raises(ConfigurationError):
            ate_estimate("nope", self.inputs())


class TestValidation:
    def test_missing_inputs_name_the_field(self):
        bare = EstimatorInputs(dataset=point_mass_inputs().dataset)
        with pytest.raises(ConfigurationError, match="policy_ratio"):
            ipw_estimate(bare)
        with pytest.raises(ConfigurationError, match="marginal_ratio"):
            mr_estimate(bare)
        with pytest.raises(ConfigurationError, match="target_policy"):
            dm_estimate(bare)
        with_target = EstimatorInputs(
            dataset=bare.dataset,
            target_policy=TabularPolicy(np.array([[1.0, 0.0]])),
        )
        with pytest.raises(ConfigurationError, match="outcome_model"):
            dm_estimate(with_target)

    def test_negative_tau_rejected(self):
        inputs = point_mass_inputs(tau=-1.0)
        with pytest.raises(ValueError):
            switch_dr_estimate(inputs)

    def test_outcome_model_shape_checked(self):
        inputs = point_mass_inputs(outcome_model=lambda xs: np.zeros((len(xs), 3)))
        with pytest.raises(ConfigurationError):
            dm_estimate(inputs)

    def test_dispatch_matches_direct_call(self):
        inputs = point_mass_inputs()
        assert estimate("ipw", inputs) == ipw_estimate(inputs)
        assert estimate("mr", inputs) == mr_estimate(inputs)
        with pytest.raises(ConfigurationError):
            estimate("unknown-id", inputs)

    def test_mips_alias(self):
        inputs = point_mass_inputs(
            representation=lambda ds: ds.outcomes,
            representation_ratio=FunctionRatio(
                "representation-ratio",
                lambda y: np.ones_like(np.asarray(y, dtype=float)),
            ),
        )
        assert estimate("mips", inputs) == estimate("gmips", inputs)


class TestLinearity:
    @given(st.floats(min_value=-10, max_value=10, allow_nan=False))
    def test_weighting_estimators_scale_with_outcomes(self, scale):
        # With per-record weights held fixed, scaling every outcome by c
        # scales the weighted-mean estimators by c. The marginal-ratio
        # model here is constant in y, so it is unchanged by the rescale.
        base = point_mass_inputs(
            marginal_ratio=FunctionRatio(
                "marginal-ratio", lambda y: np.full(len(np.asarray(y)), 1.5)
            )
        )
        scaled = base.with_dataset(
            base.dataset.with_outcomes(base.dataset.outcomes * scale)
        )
        assert ipw_estimate(scaled) == pytest.approx(scale * ipw_estimate(base), abs=1e-9)
        assert mr_estimate(scaled) == pytest.approx(scale * mr_estimate(base), abs=1e-9)
