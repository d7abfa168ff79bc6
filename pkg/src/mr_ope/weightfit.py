"""Model fitting: behavior policies, policy ratios, and weight regressions.

Everything that learns from data lives here, so the estimators in
`mr_ope.estimators` stay pure functions of (dataset, fitted models,
hyperparameters). Fits consume training splits only; passing a dataset
tagged role='eval' raises.

The two gradient-trained models are written from scratch on numpy so their
gradients are exact, deterministic, and finite-difference checkable:

* `SoftmaxClassifier` - multinomial logistic regression by full-batch
  gradient descent with backtracking halving, which makes the recorded
  training loss non-increasing.
* `MlpRegressor` - fully connected ReLU network (default hidden sizes
  512, 256, 32 with a linear scalar output) trained by mini-batch SGD with
  momentum, a fixed learning rate, a fixed epoch budget, and seed-controlled
  shuffling. No early stopping.

Both standardize inputs internally (and the regressor its targets); the
fitted objects expose predictions in the original units.
"""

from __future__ import annotations

import base64
import warnings
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import (
    ConfigurationError,
    as_float_array,
    as_int_array,
    check_fittable,
)
from .domain import (
    FunctionRatio,
    LoggedDataset,
    Policy,
    PolicyRatio,
    SoftmaxLinearPolicy,
    TabularPolicy,
    rng_from,
)

DEFAULT_RATIO_FLOOR = 1e-6
DISCRETE_MODE_THRESHOLD = 64
# Rank bins used to pre-average noisy regression targets over a scalar input
# before the MLP fit (0 disables). Importance-ratio targets have conditional
# variance far above the signal variance, and averaging ~n/32 neighbors cuts
# that noise before gradient descent sees it.
DEFAULT_PRE_AVERAGE_BINS = 32
# Upper-quantile cap applied to nonnegative ratio targets before the MLP fit
# (None disables). Estimated propensities put occasional enormous spikes into
# the targets; capping the top percentile bounds their leverage, and the
# mean-one renormalization that follows restores the clipped mass.
DEFAULT_WINSOR_QUANTILE = 0.99


def _standardize_stats(X: np.ndarray):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    return mean, scale


# ---------------------------------------------------------------------------
# Softmax classifier
# ---------------------------------------------------------------------------


class SoftmaxClassifier(BaseEstimator):
    """Multinomial logistic regression trained by full-batch gradient descent.

    Parameters
    ----------
    learning_rate : initial step size; backtracking halves it whenever a step
        would increase the regularized cross-entropy, so the loss recorded in
        `loss_history_` is non-increasing.
    epochs : gradient steps. Zero epochs returns the zero-weight model, whose
        predictions are exactly uniform.
    l2 : ridge strength on the non-bias weights.
    n_classes : minimum number of classes; inferred from labels when larger.
    standardize : z-score features with training statistics before fitting.
    seed : unused by the deterministic full-batch path; kept for API symmetry.
    """

    def __init__(self, learning_rate=1.0, epochs=200, l2=1e-4, n_classes=None,
                 standardize=True, tol=1e-10, seed=0):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2 = l2
        self.n_classes = n_classes
        self.standardize = standardize
        self.tol = tol
        self.seed = seed

    def _loss(self, Xa, onehot, W):
        logits = Xa @ W.T
        logits -= logits.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(logits).sum(axis=1))
        ce = float(np.mean(logsumexp - (logits * onehot).sum(axis=1)))
        return ce + 0.5 * self.l2 * float(np.sum(W[:, :-1] ** 2))

    def fit(self, X, y):
        X = as_float_array(X, "X")
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = as_int_array(y, "y")
        if len(X) != len(y) or len(y) == 0:
            raise ValueError("X and y must be nonempty with matching lengths")
        k = int(max(self.n_classes or 0, y.max() + 1))
        self.classes_seen_ = np.unique(y)
        self.degenerate_ = self.classes_seen_.size < 2
        if self.degenerate_:
            warnings.warn("single-class training set: softmax fit is degenerate",
                          RuntimeWarning, stacklevel=2)

        if self.standardize:
            self.mean_, self.scale_ = _standardize_stats(X)
        else:
            self.mean_ = np.zeros(X.shape[1])
            self.scale_ = np.ones(X.shape[1])
        Xs = (X - self.mean_) / self.scale_
        Xa = np.hstack([Xs, np.ones((len(Xs), 1))])
        onehot = np.zeros((len(y), k))
        onehot[np.arange(len(y)), y] = 1.0

        W = np.zeros((k, Xa.shape[1]))
        loss = self._loss(Xa, onehot, W)
        history = [loss]
        lr = float(self.learning_rate)
        for _ in range(int(self.epochs)):
            probs = _stable_softmax(Xa @ W.T)
            grad = (probs - onehot).T @ Xa / len(y)
            grad[:, :-1] += self.l2 * W[:, :-1]
            # Backtracking keeps every recorded checkpoint non-increasing.
            accepted = False
            for _ in range(40):
                W_new = W - lr * grad
                loss_new = self._loss(Xa, onehot, W_new)
                if loss_new <= loss + 1e-12:
                    accepted = True
                    break
                lr *= 0.5
            if not accepted:
                break
            converged = abs(loss - loss_new) <= self.tol * (1.0 + abs(loss))
            W, loss = W_new, loss_new
            history.append(loss)
            lr = min(lr * 1.1, float(self.learning_rate))
            if converged:
                break
        self.weights_ = W
        self.loss_history_ = history
        self.n_classes_ = k
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise ConfigurationError("classifier is not fitted")

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = as_float_array(X, "X")
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        Xs = (X - self.mean_) / self.scale_
        return Xs @ self.weights_[:, :-1].T + self.weights_[:, -1]

    def predict_proba(self, X) -> np.ndarray:
        return _stable_softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def to_policy(self) -> SoftmaxLinearPolicy:
        """Export as a softmax-linear policy over raw (unstandardized) features."""
        self._check_fitted()
        W = self.weights_[:, :-1] / self.scale_
        b = self.weights_[:, -1] - (self.weights_[:, :-1] * (self.mean_ / self.scale_)).sum(axis=1)
        return SoftmaxLinearPolicy(np.hstack([W, b.reshape(-1, 1)]))


def _stable_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# MLP regressor
# ---------------------------------------------------------------------------


class MlpRegressor(BaseEstimator):
    """Fully connected ReLU regressor with a linear scalar output.

    The default hidden sizes are (512, 256, 32); smaller settings exist so the
    analytic gradients can be finite-difference checked cheaply. Training is
    mini-batch SGD with momentum at a fixed learning rate for a fixed number
    of epochs, with seed-controlled shuffling and no early stopping. Inputs
    and targets are z-scored internally with training statistics.
    """

    def __init__(self, hidden_layer_sizes=(512, 256, 32), learning_rate=0.01,
                 momentum=0.9, epochs=60, batch_size=64, standardize=True, seed=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.standardize = standardize
        self.seed = seed

    # -- architecture -------------------------------------------------------

    def _init_weights(self, d_in: int, rng: np.random.Generator):
        sizes = [d_in, *map(int, self.hidden_layer_sizes), 1]
        weights = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            std = np.sqrt(2.0 / fan_in)
            weights.append((rng.normal(0.0, std, size=(fan_in, fan_out)), np.zeros(fan_out)))
        self.layer_sizes_ = sizes
        self.weights_ = weights

    @property
    def parameter_count(self) -> int:
        return sum(W.size + b.size for W, b in self.weights_)

    def _prepare_X(self, X) -> np.ndarray:
        X = as_float_array(X, "X")
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        return X

    def fit(self, X, y):
        X = self._prepare_X(X)
        y = as_float_array(np.asarray(y).reshape(-1), "y")
        if len(X) != len(y) or len(y) == 0:
            raise ValueError("X and y must be nonempty with matching lengths")
        rng = rng_from(self.seed)
        if self.standardize:
            self.x_mean_, self.x_scale_ = _standardize_stats(X)
            y_scale = float(y.std()) or 1.0
            self.y_mean_, self.y_scale_ = float(y.mean()), y_scale
        else:
            self.x_mean_ = np.zeros(X.shape[1])
            self.x_scale_ = np.ones(X.shape[1])
            self.y_mean_, self.y_scale_ = 0.0, 1.0
        self._init_weights(X.shape[1], rng)
        self.trained_ = int(self.epochs) > 0

        Xs = (X - self.x_mean_) / self.x_scale_
        ys = (y - self.y_mean_) / self.y_scale_
        velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in self.weights_]
        n = len(y)
        batch = max(1, int(self.batch_size))
        self.loss_history_ = []
        for _ in range(int(self.epochs)):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                grads, loss = self._batch_gradient(Xs[idx], ys[idx])
                epoch_loss += loss * len(idx)
                new_velocity = []
                for (W, b), (vW, vb), (gW, gb) in zip(self.weights_, velocity, grads):
                    vW = self.momentum * vW - self.learning_rate * gW
                    vb = self.momentum * vb - self.learning_rate * gb
                    W += vW
                    b += vb
                    new_velocity.append((vW, vb))
                velocity = new_velocity
            self.loss_history_.append(epoch_loss / n)
        return self

    def _forward(self, Xs: np.ndarray):
        """Activations per layer in standardized space."""
        activations = [Xs]
        h = Xs
        last = len(self.weights_) - 1
        for i, (W, b) in enumerate(self.weights_):
            z = h @ W + b
            h = z if i == last else np.maximum(z, 0.0)
            activations.append(h)
        return activations

    def _batch_gradient(self, Xs: np.ndarray, ys: np.ndarray):
        """Gradient of mean squared error on a standardized batch."""
        acts = self._forward(Xs)
        pred = acts[-1].reshape(-1)
        resid = pred - ys
        loss = float(np.mean(resid**2))
        delta = (2.0 / len(ys)) * resid.reshape(-1, 1)
        grads: list = [None] * len(self.weights_)
        for i in range(len(self.weights_) - 1, -1, -1):
            W, _ = self.weights_[i]
            grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
            if i > 0:
                delta = (delta @ W.T) * (acts[i] > 0.0)
        return grads, loss

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise ConfigurationError("regressor is not fitted")

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        Xs = (self._prepare_X(X) - self.x_mean_) / self.x_scale_
        out = self._forward(Xs)[-1].reshape(-1)
        return out * self.y_scale_ + self.y_mean_

    def loss_value(self, X, y) -> float:
        """Mean squared error of predictions in original units."""
        y = as_float_array(np.asarray(y).reshape(-1), "y")
        return float(np.mean((self.predict(X) - y) ** 2))

    def loss_gradient(self, X, y):
        """Exact gradient of `loss_value` with respect to every parameter.

        Returns a list of (dW, db) pairs matching `weights_`.
        """
        self._check_fitted()
        X = self._prepare_X(X)
        y = as_float_array(np.asarray(y).reshape(-1), "y")
        if len(X) != len(y) or len(y) == 0:
            raise ValueError("batch must be nonempty with matching lengths")
        Xs = (X - self.x_mean_) / self.x_scale_
        acts = self._forward(Xs)
        pred = acts[-1].reshape(-1) * self.y_scale_ + self.y_mean_
        resid = pred - y
        # d loss / d (standardized output) = 2/n * resid * y_scale
        delta = (2.0 / len(y)) * (resid * self.y_scale_).reshape(-1, 1)
        grads: list = [None] * len(self.weights_)
        for i in range(len(self.weights_) - 1, -1, -1):
            W, _ = self.weights_[i]
            grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
            if i > 0:
                delta = (delta @ W.T) * (acts[i] > 0.0)
        return grads

    # -- flat parameter views (serialization, finite-difference checks) -----

    def get_flat_params(self) -> np.ndarray:
        self._check_fitted()
        return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in self.weights_])

    def set_flat_params(self, flat: np.ndarray) -> None:
        self._check_fitted()
        flat = np.asarray(flat, dtype=np.float64)
        out = []
        pos = 0
        for W, b in self.weights_:
            w_new = flat[pos:pos + W.size].reshape(W.shape).copy()
            pos += W.size
            b_new = flat[pos:pos + b.size].copy()
            pos += b.size
            out.append((w_new, b_new))
        if pos != flat.size:
            raise ValueError("flat parameter vector has the wrong length")
        self.weights_ = out


def mlp_gradient(regressor: MlpRegressor, X, y):
    """Analytic mean-squared-error gradient for every parameter of the MLP."""
    return regressor.loss_gradient(X, y)


def flatten_gradients(grads) -> np.ndarray:
    return np.concatenate([np.concatenate([gW.ravel(), gb.ravel()]) for gW, gb in grads])


# ---------------------------------------------------------------------------
# Discrete conditional-mean table
# ---------------------------------------------------------------------------


def _table_key(value):
    if isinstance(value, tuple):
        return tuple(_table_key(v) for v in value)
    arr = np.asarray(value)
    if arr.ndim == 0:
        return float(arr) if arr.dtype.kind in "fiu" else arr.item()
    return tuple(_table_key(v) for v in arr)


class DiscreteRatioTable(BaseEstimator):
    """Conditional sample means keyed by discrete values.

    Each entry is the exact arithmetic mean of the regression targets among
    training records sharing the key; unseen keys fall back to the global
    target mean.
    """

    def fit(self, keys: Sequence, targets):
        targets = as_float_array(np.asarray(targets).reshape(-1), "targets")
        if len(targets) == 0:
            raise ValueError("empty training set")
        sums: dict = {}
        counts: dict = {}
        for raw, t in zip(keys, targets):
            k = _table_key(raw)
            sums[k] = sums.get(k, 0.0) + float(t)
            counts[k] = counts.get(k, 0) + 1
        self.table_ = {k: sums[k] / counts[k] for k in sums}
        self.counts_ = counts
        self.fallback_ = float(np.mean(targets))
        return self

    def predict(self, keys: Sequence) -> np.ndarray:
        if not hasattr(self, "table_"):
            raise ConfigurationError("table is not fitted")
        return np.asarray([self.table_.get(_table_key(k), self.fallback_) for k in keys])


# ---------------------------------------------------------------------------
# Fit operations
# ---------------------------------------------------------------------------


def _iter_keys(values):
    """Iterate per-record keys from an array or list of representation values."""
    arr = np.asarray(values) if not isinstance(values, (list, tuple)) else values
    if isinstance(arr, np.ndarray) and arr.ndim == 2:
        return [tuple(row) for row in arr.tolist()]
    if isinstance(arr, np.ndarray):
        return list(arr.reshape(-1))
    return list(arr)


def split_dataset(dataset: LoggedDataset, fraction: float = 0.5):
    """Deterministic contiguous split into (first, second) training shares."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    n = len(dataset)
    n_first = min(max(int(round(n * fraction)), 1), n - 1)
    return dataset.subset(slice(0, n_first)), dataset.subset(slice(n_first, n))


def fit_behavior_policy(train: LoggedDataset, config: dict | None = None) -> Policy:
    """Estimate the logging policy from (context, action) pairs.

    Real-vector contexts get a softmax-linear policy trained by gradient
    descent. Categorical-id contexts get a smoothed frequency table (add-one
    smoothing by default), which is the finite-context analogue.
    """
    check_fittable(train, "fit_behavior_policy")
    cfg = dict(config or {})
    n_actions = int(cfg.pop("n_actions", train.n_actions or train.actions.max() + 1))
    if train.categorical_contexts:
        smoothing = float(cfg.pop("smoothing", 1.0))
        n_contexts = int(cfg.pop("n_contexts", train.contexts.max() + 1))
        counts = np.full((n_contexts, n_actions), smoothing)
        np.add.at(counts, (train.contexts, train.actions), 1.0)
        return TabularPolicy(counts / counts.sum(axis=1, keepdims=True))
    clf = SoftmaxClassifier(n_classes=n_actions, **cfg)
    clf.fit(train.contexts, train.actions)
    policy = clf.to_policy()
    policy.degenerate_fit = bool(clf.degenerate_)
    policy.final_loss = clf.loss_history_[-1]
    return policy


def make_policy_ratio(target: Policy, behavior_hat: Policy,
                      floor: float = DEFAULT_RATIO_FLOOR) -> PolicyRatio:
    """Per-record weights pi_t(a|x) / max(pi_b_hat(a|x), floor)."""
    return PolicyRatio(target, behavior_hat, floor)


def _resolve_rho(train: LoggedDataset, rho_hat) -> np.ndarray:
    if isinstance(rho_hat, PolicyRatio):
        return rho_hat.per_record(train)
    if callable(rho_hat):
        return np.asarray(rho_hat(train), dtype=np.float64)
    rho = as_float_array(np.asarray(rho_hat).reshape(-1), "rho_hat")
    if len(rho) != len(train):
        raise ValueError("per-record rho_hat length must match the dataset")
    return rho


def _pre_average_targets(values: np.ndarray, targets: np.ndarray, n_bins: int) -> np.ndarray:
    """Replace each target with the mean target of its rank bin of `values`.

    Grouping contiguous ranks of a scalar input and averaging the noisy
    per-record targets inside each group preserves local conditional means
    while dividing the target noise by the bin occupancy, which stabilizes
    the downstream least-squares fit without changing what it estimates.
    """
    n = len(targets)
    n_bins = max(1, min(int(n_bins), n))
    order = np.argsort(values, kind="stable")
    out = np.empty(n, dtype=np.float64)
    for chunk in np.array_split(order, n_bins):
        out[chunk] = targets[chunk].mean()
    return out


# Ratio kinds whose regression targets are nonnegative with a known unit
# mean under the logging distribution (E[rho] = 1 exactly). For these the
# MLP branch caps spike targets at an upper quantile and renormalizes the
# capped targets back to mean one, which removes the leverage of propensity
# blow-ups without losing total mass. Signed or unnormalized targets
# (h-model products, treatment-effect weights) are left untouched.
_UNIT_MEAN_KINDS = frozenset({"marginal-ratio", "representation-ratio"})


def _fit_weight_regression(kind, train, keys, targets, mode, config):
    check_fittable(train, f"fit for kind {kind!r}")
    if len(train) == 0:
        raise ValueError("empty training set")
    cfg = dict(config or {})
    threshold = int(cfg.pop("discrete_threshold", DISCRETE_MODE_THRESHOLD))
    clamp = bool(cfg.pop("clamp_negative", False))
    pre_average_bins = cfg.pop("pre_average_bins", DEFAULT_PRE_AVERAGE_BINS)
    unit_mean = kind in _UNIT_MEAN_KINDS
    winsor_quantile = cfg.pop(
        "winsor_quantile", DEFAULT_WINSOR_QUANTILE if unit_mean else None
    )
    normalize_targets = bool(cfg.pop("normalize_targets", unit_mean))
    key_list = _iter_keys(keys)
    if mode == "auto":
        mode = "discrete" if len(set(key_list)) <= threshold else "mlp"
    if mode == "discrete":
        table = DiscreteRatioTable().fit(key_list, targets)
        base_fn = lambda values: table.predict(_iter_keys(values))
        backing = "table"
        backer = table
        unfitted = False
    elif mode == "mlp":
        reg = MlpRegressor(**cfg)
        X = np.asarray(keys, dtype=np.float64)
        targets_fit = np.asarray(targets, dtype=np.float64)
        flat = X.reshape(len(key_list), -1)
        if winsor_quantile is not None:
            cap = float(np.quantile(targets_fit, float(winsor_quantile)))
            targets_fit = np.minimum(targets_fit, cap)
        if normalize_targets:
            target_mean = float(targets_fit.mean())
            if target_mean > 0.0:
                targets_fit = targets_fit / target_mean
        if pre_average_bins and flat.shape[1] == 1:
            targets_fit = _pre_average_targets(flat[:, 0], targets_fit, pre_average_bins)
        reg.fit(flat, targets_fit)
        base_fn = lambda values: reg.predict(
            np.asarray(values, dtype=np.float64).reshape(len(_iter_keys(values)), -1)
        )
        backing = "mlp"
        backer = reg
        unfitted = not reg.trained_
    else:
        raise ConfigurationError(f"unknown regression mode {mode!r}")
    fn = (lambda values: np.maximum(base_fn(values), 0.0)) if clamp else base_fn

    fitted = fn(keys)
    targets = np.asarray(targets, dtype=np.float64)
    residual = float(abs(np.mean(targets - fitted)))
    bound = 0.05 * (1.0 + float(np.mean(np.abs(targets))))
    model = FunctionRatio(kind, fn, backing=backing)
    model.mode = "discrete" if backing == "table" else "mlp"
    model.model = backer
    model.clamped = clamp
    model.unfitted = unfitted
    model.normal_eq_residual_ = residual
    model.normal_eq_bound_ = bound
    model.normal_eq_ok_ = residual <= bound or unfitted
    return model


def fit_marginal_ratio(train: LoggedDataset, rho_hat, mode: str = "auto",
                       config: dict | None = None) -> FunctionRatio:
    """Regress per-record policy ratios onto the outcome.

    The fitted function w_hat(y) estimates the conditional mean of the policy
    ratio given the outcome, which equals the ratio of outcome marginals under
    the two policies. Discrete mode (a conditional-mean table) is selected
    automatically when the training outcomes take at most `discrete_threshold`
    distinct values (default 64); otherwise an MLP is fit to (y_i, rho_i)
    pairs by mean squared error. Before the MLP fit the targets are capped at
    an upper quantile (config key 'winsor_quantile', default 0.99, None to
    disable), rescaled so their sample mean is one — the exact population
    mean of the policy ratio under the logging policy — (config key
    'normalize_targets', default True), and pre-averaged within rank bins of
    y (config key 'pre_average_bins', default 32, 0 to disable) to strip
    conditional noise the regression would otherwise chase. Outputs are
    unclipped by default; pass config={'clamp_negative': True} to clamp at
    zero.
    """
    rho = _resolve_rho(train, rho_hat)
    return _fit_weight_regression("marginal-ratio", train, train.outcomes, rho, mode, config)


def fit_h_model(train: LoggedDataset, rho_hat, mode: str = "auto",
                config: dict | None = None) -> FunctionRatio:
    """Regress y_i * rho_i onto the outcome (the product-model variant)."""
    rho = _resolve_rho(train, rho_hat)
    targets = train.outcomes * rho
    return _fit_weight_regression("h-model", train, train.outcomes, targets, mode, config)


def fit_representation_ratio(train: LoggedDataset, rho_hat, representation,
                             mode: str = "auto", config: dict | None = None) -> FunctionRatio:
    """Regress per-record policy ratios onto a representation r(x, a[, e]).

    `representation` maps a dataset to per-record representation values (a
    1-d/2-d numeric array or a list of hashables); the returned model maps
    such values to weights. Discrete mode groups by exact value.
    """
    rho = _resolve_rho(train, rho_hat)
    values = representation(train)
    return _fit_weight_regression("representation-ratio", train, values, rho, mode, config)


class SignedAteRatio:
    """Per-record signed weights (1(a=1) - 1(a=0)) / max(pi_b_hat(a|x), floor)."""

    def __init__(self, behavior: Policy, floor: float = DEFAULT_RATIO_FLOOR):
        if not 0.0 < floor < 1.0:
            raise ValueError("floor must lie in (0, 1)")
        self.behavior = behavior
        self.floor = float(floor)

    def per_record(self, dataset: LoggedDataset) -> np.ndarray:
        if dataset.actions.size and dataset.actions.max() > 1:
            raise ConfigurationError("treatment-effect weights need binary actions")
        sign = 2.0 * dataset.actions - 1.0
        probs = np.maximum(self.behavior.record_probs(dataset.contexts, dataset.actions), self.floor)
        return sign / probs

    def __call__(self, dataset: LoggedDataset) -> np.ndarray:
        return self.per_record(dataset)


def make_ate_ratio(behavior_hat: Policy, floor: float = DEFAULT_RATIO_FLOOR) -> SignedAteRatio:
    return SignedAteRatio(behavior_hat, floor)


def fit_ate_weights(train: LoggedDataset, behavior_hat: Policy, mode: str = "auto",
                    config: dict | None = None, floor: float = DEFAULT_RATIO_FLOOR) -> FunctionRatio:
    """Regress signed treatment weights onto the outcome (binary actions).

    Targets are (1(a=1) - 1(a=0)) / max(pi_b_hat(a|x), floor); the fitted
    function may be negative by construction.
    """
    if train.actions.size and train.actions.max() > 1:
        raise ConfigurationError("fit_ate_weights needs binary actions")
    targets = SignedAteRatio(behavior_hat, floor).per_record(train)
    return _fit_weight_regression("ate-marginal-ratio", train, train.outcomes, targets, mode, config)


# ---------------------------------------------------------------------------
# Outcome models q_hat(x, a)
# ---------------------------------------------------------------------------


class OutcomeModel:
    """Callable mapping contexts to an (n, n_actions) matrix of means."""

    def __init__(self, fn: Callable, n_actions: int, mode: str, model=None):
        self._fn = fn
        self.n_actions = int(n_actions)
        self.mode = mode
        self.model = model

    def __call__(self, contexts) -> np.ndarray:
        out = np.asarray(self._fn(contexts), dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.n_actions:
            raise ConfigurationError("outcome model must return an (n, n_actions) matrix")
        return out

    def per_record(self, dataset: LoggedDataset) -> np.ndarray:
        matrix = self(dataset.contexts)
        return matrix[np.arange(len(dataset)), dataset.actions]


def _onehot_features(X: np.ndarray, actions: np.ndarray, n_actions: int) -> np.ndarray:
    onehot = np.zeros((len(actions), n_actions))
    onehot[np.arange(len(actions)), actions] = 1.0
    return np.hstack([X, onehot])


def fit_outcome_model(train: LoggedDataset, n_actions: int | None = None,
                      mode: str = "auto", config: dict | None = None) -> OutcomeModel:
    """Fit q_hat(x, a), the conditional-mean outcome model for DM/DR.

    Modes: 'table' (cell means, categorical contexts), 'logistic'
    (two-class softmax probability of outcome 1, binary outcomes), 'linear'
    (per-action ridge), 'mlp' (network on context + one-hot action features).
    'auto' picks 'table' for categorical contexts, 'logistic' for binary
    {0,1} outcomes, and 'linear' otherwise.
    """
    check_fittable(train, "fit_outcome_model")
    cfg = dict(config or {})
    n_a = int(n_actions or train.n_actions or train.actions.max() + 1)
    distinct = np.unique(train.outcomes)
    if mode == "auto":
        if train.categorical_contexts:
            mode = "table"
        elif distinct.size <= 2 and set(distinct.tolist()) <= {0.0, 1.0}:
            mode = "logistic"
        else:
            mode = "linear"

    if mode == "table":
        n_x = int(cfg.pop("n_contexts", train.contexts.max() + 1))
        sums = np.zeros((n_x, n_a))
        counts = np.zeros((n_x, n_a))
        np.add.at(sums, (train.contexts, train.actions), train.outcomes)
        np.add.at(counts, (train.contexts, train.actions), 1.0)
        overall = float(train.outcomes.mean())
        means = np.where(counts > 0, sums / np.maximum(counts, 1.0), overall)
        fn = lambda contexts: means[as_int_array(np.asarray(contexts).reshape(-1), "contexts")]
        return OutcomeModel(fn, n_a, "table", model=means)

    X = train.contexts
    if mode == "logistic":
        clf = SoftmaxClassifier(n_classes=2, **cfg)
        clf.fit(_onehot_features(X, train.actions, n_a), train.outcomes.astype(np.int64))

        def fn(contexts):
            C = as_float_array(contexts, "contexts")
            cols = []
            for a in range(n_a):
                feats = _onehot_features(C, np.full(len(C), a, dtype=np.int64), n_a)
                cols.append(clf.predict_proba(feats)[:, 1])
            return np.column_stack(cols)

        return OutcomeModel(fn, n_a, "logistic", model=clf)

    if mode == "linear":
        ridge = float(cfg.pop("ridge_l2", 1.0))
        d = X.shape[1]
        coefs = np.zeros((n_a, d + 1))
        overall = float(train.outcomes.mean())
        for a in range(n_a):
            rows = train.actions == a
            if rows.sum() < 2:
                coefs[a, -1] = overall
                continue
            Xa = np.hstack([X[rows], np.ones((int(rows.sum()), 1))])
            gram = Xa.T @ Xa + ridge * np.eye(d + 1)
            coefs[a] = np.linalg.solve(gram, Xa.T @ train.outcomes[rows])

        def fn(contexts):
            C = as_float_array(contexts, "contexts")
            Ca = np.hstack([C, np.ones((len(C), 1))])
            return Ca @ coefs.T

        return OutcomeModel(fn, n_a, "linear", model=coefs)

    if mode == "mlp":
        reg = MlpRegressor(**cfg)
        reg.fit(_onehot_features(X, train.actions, n_a), train.outcomes)

        def fn(contexts):
            C = as_float_array(contexts, "contexts")
            cols = []
            for a in range(n_a):
                feats = _onehot_features(C, np.full(len(C), a, dtype=np.int64), n_a)
                cols.append(reg.predict(feats))
            return np.column_stack(cols)

        return OutcomeModel(fn, n_a, "mlp", model=reg)

    raise ConfigurationError(f"unknown outcome-model mode {mode!r}")


# ---------------------------------------------------------------------------
# Model serialization
# ---------------------------------------------------------------------------


def _mlp_to_json(reg: MlpRegressor) -> dict:
    flat = reg.get_flat_params().astype("<f8")
    return {
        "layer_sizes": list(map(int, reg.layer_sizes_)),
        "params": base64.b64encode(flat.tobytes()).decode("ascii"),
        "x_mean": reg.x_mean_.tolist(),
        "x_scale": reg.x_scale_.tolist(),
        "y_mean": reg.y_mean_,
        "y_scale": reg.y_scale_,
    }


def _mlp_from_json(obj: dict) -> MlpRegressor:
    sizes = [int(s) for s in obj["layer_sizes"]]
    reg = MlpRegressor(hidden_layer_sizes=tuple(sizes[1:-1]), epochs=0)
    reg._init_weights(sizes[0], rng_from(0))
    reg.x_mean_ = np.asarray(obj["x_mean"], dtype=np.float64)
    reg.x_scale_ = np.asarray(obj["x_scale"], dtype=np.float64)
    reg.y_mean_ = float(obj["y_mean"])
    reg.y_scale_ = float(obj["y_scale"])
    flat = np.frombuffer(base64.b64decode(obj["params"]), dtype="<f8")
    reg.set_flat_params(flat.astype(np.float64))
    reg.trained_ = True
    return reg


def ratio_model_to_json(model: FunctionRatio) -> dict:
    """Serialize a fitted weight model (table or MLP backing)."""
    if model.backing == "table":
        entries = []
        for key, value in sorted(model.model.table_.items(), key=lambda kv: str(kv[0])):
            json_key = list(key) if isinstance(key, tuple) else key
            entries.append([json_key, value])
        return {
            "kind": model.kind,
            "backing": "table",
            "entries": entries,
            "fallback": model.model.fallback_,
        }
    if model.backing == "mlp":
        return {"kind": model.kind, "backing": "mlp", **_mlp_to_json(model.model)}
    raise ConfigurationError(f"no JSON form for backing {model.backing!r}")


def ratio_model_from_json(obj: dict) -> FunctionRatio:
    kind = obj.get("kind")
    backing = obj.get("backing")
    if backing == "table":
        table = DiscreteRatioTable()
        table.table_ = {}
        for json_key, value in obj["entries"]:
            key = tuple(json_key) if isinstance(json_key, list) else float(json_key)
            table.table_[_table_key(key) if not isinstance(key, tuple) else key] = float(value)
        table.counts_ = {}
        table.fallback_ = float(obj["fallback"])
        fn = lambda values: table.predict(_iter_keys(values))
        model = FunctionRatio(kind, fn, backing="table")
        model.model = table
        model.mode = "discrete"
        return model
    if backing == "mlp":
        reg = _mlp_from_json(obj)
        fn = lambda values: reg.predict(
            np.asarray(values, dtype=np.float64).reshape(len(_iter_keys(values)), -1)
        )
        model = FunctionRatio(kind, fn, backing="mlp")
        model.model = reg
        model.mode = "mlp"
        return model
    raise ConfigurationError(f"unknown model backing in JSON: {backing!r}")
