"""Synthetic data-generating processes with known ground truth.

Three families:

* an embedding-mediated setup (`SaitoSetupConfig`, `saito_generate`): dense
  normal contexts, actions carrying 3-dimensional categorical embeddings of
  cardinality 10, a reward surface bilinear in context and latent embedding
  vectors, a softmax behavior policy on -q, and an alpha-argmax target;
* a one-dimensional-score setup (`SinSetupConfig`, `sin_generate`):
  q(x, a) = sin(a * ||x||_2) with a softmax behavior policy on +q (note the
  deliberate sign difference between the two setups) and a natural scalar
  representation r = a * ||x||_2;
* finite tabular environments (`random_tabular_env`) for the exact-oracle
  checks, with structure flags realizing outcome-independence of the action,
  embedding mediation, and a two-step representation chain;

plus `classification_to_bandit`, which converts a labeled CSV into logged
bandit feedback with an exactly computable target value, and
`make_blobs_csv`, which writes a separable Gaussian-blobs CSV for tests.

Every generator is a pure function of its config and seed. Independent
random streams are derived per purpose (parameter draws vs. data sampling
vs. truth Monte Carlo) so e.g. logged contexts never alias parameter draws.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._validation import ConfigurationError, IngestionError
from .domain import (
    AlphaArgmaxPolicy,
    LoggedDataset,
    Policy,
    SoftmaxScorePolicy,
    TabularEnvironment,
    _sample_categorical_rows,
    rng_from,
)
from .weightfit import SoftmaxClassifier

# Stream tags keeping the per-purpose RNG streams disjoint for a given seed.
_PARAM_STREAM = 101
_SAMPLE_STREAM = 202
_TRUTH_STREAM = 303
_ENV_STREAM = 404
_SPLIT_STREAM = 505

TRUE_VALUE_DRAWS = 1_000_000
_TRUE_VALUE_BATCH = 100_000


@dataclass(frozen=True)
class TrueValueEstimate:
    """Monte Carlo estimate of E_pi[Y] with its standard error."""

    value: float
    stderr: float
    n_draws: int


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Embedding-mediated setup
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SaitoSetupConfig:
    """Config for the embedding-mediated synthetic setup.

    The embedding has a fixed 3 dimensions of cardinality 10 each. `noise_sd`
    is the standard deviation of additive Gaussian reward noise around
    q(x, e) (an exposed assumption; the expected-reward surface itself is
    exact). Two scale knobs shape the benchmark after each inner product is
    normalized to unit variance: `shift_scale` multiplies the two
    embedding-dependent reward components and so controls how sharply the
    softmax logging policy concentrates away from high-reward actions (the
    behavior-target shift), while `context_scale` multiplies the
    context-only component theta_x'x, which is constant across actions --
    it cancels inside both policies and inflates only the outcome's shared
    variance. All parameter draws are functions of `seed`.
    """

    d: int = 50
    n_a: int = 20
    alpha_star: float = 0.8
    noise_sd: float = 0.1
    shift_scale: float = 1.0
    context_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ConfigurationError("d must be >= 1")
        if self.n_a < 2:
            raise ConfigurationError("n_a must be >= 2")
        if not 0.0 <= self.alpha_star <= 1.0:
            raise ConfigurationError("alpha_star must lie in [0, 1]")
        if self.noise_sd < 0:
            raise ConfigurationError("noise_sd must be >= 0")
        if self.shift_scale <= 0:
            raise ConfigurationError("shift_scale must be > 0")
        if self.context_scale < 0:
            raise ConfigurationError("context_scale must be >= 0")


class SaitoGroundTruth:
    """Sampler plus exact/Monte-Carlo ground-truth accessors for the setup.

    Rewards are mediated by a 3-dimensional categorical embedding E of
    cardinality 10 per dimension with p(e|a) = prod_k softmax(alpha_{a, .})_k
    and expected reward q(x, e) = sum_k eta_k (x'M x_{e_k} + theta_x'x +
    theta_e'x_{e_k}) over per-category latent context vectors x_{e_k}. Each
    of the three inner products is divided by its theoretical standard
    deviation under the parameter draws (M, theta uniform on [-1, 1], x and
    x_{e_k} standard normal), so the reward surface keeps unit scale at any
    context dimension d; without this the softmax logging policy would
    collapse to a point mass as d grows. The action-conditional surface
    q(x, a) = E[q(x, E) | a] is computed analytically from the per-dimension
    embedding distributions, so the behavior (softmax of -q) and target
    (alpha-argmax of q) policies are exact, and the true value only needs
    Monte Carlo over the context.
    """

    EMBED_DIMS = 3
    EMBED_CARDINALITY = 10

    def __init__(self, config: SaitoSetupConfig):
        self.config = config
        k, c, d = self.EMBED_DIMS, self.EMBED_CARDINALITY, config.d
        rng = rng_from((config.seed, _PARAM_STREAM))
        self.alpha = rng.normal(size=(k, config.n_a, c))
        self.latents = rng.normal(size=(k, c, d))
        self.mix_matrix = rng.uniform(-1.0, 1.0, size=(d, d))
        self.theta_x = rng.uniform(-1.0, 1.0, size=d)
        self.theta_e = rng.uniform(-1.0, 1.0, size=d)
        self.eta = rng.dirichlet(np.ones(k))
        # Normalizers bringing each inner product to unit variance regardless
        # of d (Var[x'Mx_e] = d^2/3, Var[theta'x] = d/3 under the raw draws),
        # then scaled: embedding-dependent terms by shift_scale (drives the
        # softmax policies), the context-only term by context_scale (cancels
        # in the policies; adds action-independent outcome variance).
        self._bilinear_scale = config.shift_scale * math.sqrt(3.0) / d
        self._linear_scale = config.shift_scale * math.sqrt(3.0 / d)
        self._context_scale = config.context_scale * math.sqrt(3.0 / d)
        # Per-dimension embedding distributions p_k(e_k | a): (k, n_a, c).
        self.embedding_probs = _softmax_rows(self.alpha)
        # Mean latent vector per (dimension, action): (k, n_a, d).
        self.mean_latents = np.einsum("kac,kcl->kal", self.embedding_probs, self.latents)
        self.behavior: Policy = SoftmaxScorePolicy(
            lambda contexts: -self.q_action(contexts), config.n_a
        )
        self.target: Policy = AlphaArgmaxPolicy(self.q_action, config.alpha_star, config.n_a)

    # -- reward surfaces ----------------------------------------------------

    def q_embed(self, contexts, embeddings) -> np.ndarray:
        """Expected reward q(x, e) for records of contexts and embedding codes."""
        X = np.asarray(contexts, dtype=np.float64)
        E = np.asarray(embeddings)
        xm = (X @ self.mix_matrix) * self._bilinear_scale
        base = (X @ self.theta_x) * self._context_scale
        q = np.zeros(X.shape[0])
        for k in range(self.EMBED_DIMS):
            lat = self.latents[k][E[:, k]]
            q += self.eta[k] * ((xm * lat).sum(axis=1) + base
                                + (lat @ self.theta_e) * self._linear_scale)
        return q

    def q_action(self, contexts) -> np.ndarray:
        """Exact E[Y | x, a] = E_e[q(x, E) | a], shape (n, n_a)."""
        X = np.asarray(contexts, dtype=np.float64)
        xm = (X @ self.mix_matrix) * self._bilinear_scale
        base = (X @ self.theta_x) * self._context_scale
        q = np.zeros((X.shape[0], self.config.n_a))
        for k in range(self.EMBED_DIMS):
            mean_lat = self.mean_latents[k]
            q += self.eta[k] * (xm @ mean_lat.T + base[:, None]
                                + (mean_lat @ self.theta_e)[None, :] * self._linear_scale)
        return q

    # -- sampling -------------------------------------------------------------

    def sample(self, n: int, seed: int) -> LoggedDataset:
        """n logged records (x, a, e, y) under the behavior policy."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = rng_from((seed, _SAMPLE_STREAM))
        X = rng.normal(size=(n, self.config.d))
        actions = _sample_categorical_rows(rng, self.behavior.action_probs(X))
        codes = np.column_stack([
            _sample_categorical_rows(rng, self.embedding_probs[k][actions])
            for k in range(self.EMBED_DIMS)
        ])
        y = self.q_embed(X, codes)
        if self.config.noise_sd > 0:
            y = y + rng.normal(scale=self.config.noise_sd, size=n)
        return LoggedDataset(
            contexts=X,
            actions=actions,
            outcomes=y,
            embeddings=codes,
            n_actions=self.config.n_a,
            seed=int(seed),
        )

    # -- ground truth ---------------------------------------------------------

    def true_value(self, n_draws: int = TRUE_VALUE_DRAWS, seed: int = 0) -> TrueValueEstimate:
        """Monte Carlo E_pi[Y] over fresh contexts (exact over actions/noise)."""
        return _context_mc_value(
            lambda X: np.sum(self.target.action_probs(X) * self.q_action(X), axis=1),
            self.config.d, n_draws, (self.config.seed, _TRUTH_STREAM, seed),
        )

    def embedding_ratio(self, dataset: LoggedDataset,
                        target: Policy | None = None,
                        behavior: Policy | None = None) -> np.ndarray:
        """Per-record embedding-marginal weights p_t(e_i|x_i) / p_b(e_i|x_i).

        Uses the generator's exact p(e|a); the policies default to the
        generator's own but may be replaced by fitted ones.
        """
        if dataset.embeddings is None:
            raise ConfigurationError(
                "embedding-marginal weights need a dataset with logged embeddings"
            )
        target = self.target if target is None else target
        behavior = self.behavior if behavior is None else behavior
        # prods[i, a] = p(e_i | a) via the per-dimension factorization.
        prods = np.ones((len(dataset), self.config.n_a))
        for k in range(self.EMBED_DIMS):
            prods *= self.embedding_probs[k][:, dataset.embeddings[:, k]].T
        num = np.sum(target.action_probs(dataset.contexts) * prods, axis=1)
        den = np.sum(behavior.action_probs(dataset.contexts) * prods, axis=1)
        out = np.zeros_like(num)
        np.divide(num, den, out=out, where=den > 0)
        return out


def saito_generate(config: SaitoSetupConfig, n: int) -> tuple[LoggedDataset, SaitoGroundTruth]:
    """Sample n records under the embedding-mediated setup's behavior policy."""
    truth = SaitoGroundTruth(config)
    return truth.sample(n, config.seed), truth


def _context_mc_value(value_fn: Callable[[np.ndarray], np.ndarray], d: int,
                      n_draws: int, seed) -> TrueValueEstimate:
    """Batched Monte Carlo mean of a per-context value function."""
    if n_draws < 2:
        raise ValueError("n_draws must be >= 2")
    rng = rng_from(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_draws:
        batch = min(_TRUE_VALUE_BATCH, n_draws - done)
        values = value_fn(rng.normal(size=(batch, d)))
        total += float(values.sum())
        total_sq += float((values**2).sum())
        done += batch
    mean = total / n_draws
    var = max(total_sq / n_draws - mean**2, 0.0)
    return TrueValueEstimate(mean, math.sqrt(var / n_draws), n_draws)


# ---------------------------------------------------------------------------
# Sine-score setup
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SinSetupConfig:
    """Config for the sine-score setup: q(x, a) = sin(a * ||x||_2).

    Reward noise is N(0, noise_sd^2) with noise_sd 0.1 by default (variance
    0.01). The behavior policy is the softmax of +q here — the opposite sign
    convention from the embedding setup, preserved deliberately.
    """

    d: int = 5
    n_a: int = 10
    alpha_star: float = 0.8
    noise_sd: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ConfigurationError("d must be >= 1")
        if self.n_a < 2:
            raise ConfigurationError("n_a must be >= 2")
        if not 0.0 <= self.alpha_star <= 1.0:
            raise ConfigurationError("alpha_star must lie in [0, 1]")
        if self.noise_sd < 0:
            raise ConfigurationError("noise_sd must be >= 0")


class SinGroundTruth:
    """Sampler and ground truth for the sine-score setup.

    The scalar r(x, a) = a * ||x||_2 determines the expected reward exactly,
    making it the natural representation for representation-marginal
    weighting.
    """

    def __init__(self, config: SinSetupConfig):
        self.config = config
        self.behavior: Policy = SoftmaxScorePolicy(self.q_action, config.n_a)
        self.target: Policy = AlphaArgmaxPolicy(self.q_action, config.alpha_star, config.n_a)

    def q_action(self, contexts) -> np.ndarray:
        X = np.asarray(contexts, dtype=np.float64)
        norms = np.linalg.norm(X, axis=1)
        return np.sin(norms[:, None] * np.arange(self.config.n_a)[None, :])

    def representation(self, dataset: LoggedDataset) -> np.ndarray:
        """Per-record scalar representation r = a * ||x||_2, shape (n, 1)."""
        norms = np.linalg.norm(np.asarray(dataset.contexts, dtype=np.float64), axis=1)
        return (dataset.actions * norms).reshape(-1, 1)

    def sample(self, n: int, seed: int) -> LoggedDataset:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = rng_from((seed, _SAMPLE_STREAM))
        X = rng.normal(size=(n, self.config.d))
        actions = _sample_categorical_rows(rng, self.behavior.action_probs(X))
        norms = np.linalg.norm(X, axis=1)
        y = np.sin(actions * norms)
        if self.config.noise_sd > 0:
            y = y + rng.normal(scale=self.config.noise_sd, size=n)
        return LoggedDataset(
            contexts=X, actions=actions, outcomes=y,
            n_actions=self.config.n_a, seed=int(seed),
        )

    def true_value(self, n_draws: int = TRUE_VALUE_DRAWS, seed: int = 0) -> TrueValueEstimate:
        return _context_mc_value(
            lambda X: np.sum(self.target.action_probs(X) * self.q_action(X), axis=1),
            self.config.d, n_draws, (self.config.seed, _TRUTH_STREAM, seed),
        )


def sin_generate(config: SinSetupConfig, n: int) -> tuple[LoggedDataset, SinGroundTruth]:
    """Sample n records under the sine-score setup's behavior policy."""
    truth = SinGroundTruth(config)
    return truth.sample(n, config.seed), truth


# ---------------------------------------------------------------------------
# Random tabular environments
# ---------------------------------------------------------------------------

STRUCTURE_FLAGS = (None, "y-indep-a", "assumption2", "chain")


def random_tabular_env(
    seed: int = 0,
    n_contexts: int | None = None,
    n_actions: int | None = None,
    n_outcomes: int | None = None,
    n_embeddings: int | None = None,
    structure: str | None = None,
) -> TabularEnvironment:
    """Seeded random finite environment for exact-oracle checks.

    Sizes default to small random values (contexts <= 5, actions <= 6,
    outcomes <= 5) so joint enumerations stay tiny. Probability rows are
    Dirichlet draws; behavior rows are floored at 0.01 so the support
    condition holds for any target. Outcome support values are distinct
    draws from a rounded grid in [-2, 2].

    structure:
      None          independent Dirichlet outcome rows per (x, a);
      'y-indep-a'   outcome rows depend on x only, so w(y) = 1 identically;
      'assumption2' outcome mediated by an action embedding, p(y|x, e);
      'chain'       outcome mediated by (x, a) -> r1 -> r2 -> y
                    ('markov-chain-reps' is accepted as an alias).
    """
    if structure == "markov-chain-reps":
        structure = "chain"
    if structure not in STRUCTURE_FLAGS:
        raise ConfigurationError(
            f"unknown structure flag {structure!r}; expected one of {STRUCTURE_FLAGS}"
        )
    rng = rng_from((seed, _ENV_STREAM))
    n_x = int(n_contexts) if n_contexts else int(rng.integers(2, 6))
    n_a = int(n_actions) if n_actions else int(rng.integers(2, 7))
    n_y = int(n_outcomes) if n_outcomes else int(rng.integers(2, 6))
    grid = np.round(np.linspace(-2.0, 2.0, 41), 2)
    support = np.sort(rng.choice(grid, size=n_y, replace=False))
    context_probs = rng.dirichlet(np.ones(n_x))
    behavior = (1.0 - n_a * 0.01) * rng.dirichlet(np.ones(n_a), size=n_x) + 0.01
    target = rng.dirichlet(np.ones(n_a), size=n_x)

    if structure == "assumption2":
        n_e = int(n_embeddings) if n_embeddings else int(rng.integers(2, 7))
        return TabularEnvironment.with_embeddings(
            context_probs=context_probs,
            behavior_table=behavior,
            target_table=target,
            outcome_support=support,
            embedding_table=rng.dirichlet(np.ones(n_e), size=n_a),
            embedding_outcome_table=rng.dirichlet(np.ones(n_y), size=(n_x, n_e)),
        )
    if structure == "chain":
        n_r1 = int(rng.integers(2, 6))
        n_r2 = int(rng.integers(2, 6))
        return TabularEnvironment.with_representation_chain(
            context_probs=context_probs,
            behavior_table=behavior,
            target_table=target,
            outcome_support=support,
            rep1_table=rng.dirichlet(np.ones(n_r1), size=(n_x, n_a)),
            rep2_table=rng.dirichlet(np.ones(n_r2), size=n_r1),
            rep2_outcome_table=rng.dirichlet(np.ones(n_y), size=n_r2),
        )
    if structure == "y-indep-a":
        rows = rng.dirichlet(np.ones(n_y), size=n_x)
        outcome_table = np.repeat(rows[:, None, :], n_a, axis=1)
    else:
        outcome_table = rng.dirichlet(np.ones(n_y), size=(n_x, n_a))
    return TabularEnvironment(
        context_probs=context_probs,
        behavior_table=behavior,
        target_table=target,
        outcome_support=support,
        outcome_table=outcome_table,
    )


# ---------------------------------------------------------------------------
# Classification-to-bandit conversion
# ---------------------------------------------------------------------------


def _read_labeled_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a CSV with numeric feature columns and an integer `label` column."""
    path = str(path)
    features = []
    labels = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}:1: empty file") from None
        header = [h.strip() for h in header]
        if "label" not in header:
            raise IngestionError(f"{path}:1: header must include a `label` column")
        label_col = header.index("label")
        n_cols = len(header)
        if n_cols < 2:
            raise IngestionError(f"{path}:1: need at least one feature column")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != n_cols:
                raise IngestionError(
                    f"{path}:{lineno}: expected {n_cols} columns, found {len(row)}"
                )
            try:
                feats = [float(v) for i, v in enumerate(row) if i != label_col]
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: non-numeric feature: {exc}") from None
            raw = row[label_col].strip()
            try:
                label = int(raw)
            except ValueError:
                raise IngestionError(
                    f"{path}:{lineno}: label {raw!r} is not an integer"
                ) from None
            features.append(feats)
            labels.append(label)
    if not features:
        raise IngestionError(f"{path}:2: no data rows")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if not np.all(np.isfinite(X)):
        raise IngestionError(f"{path}: non-finite feature values")
    uniq = np.unique(y)
    if uniq[0] != 0 or not np.array_equal(uniq, np.arange(uniq.size)):
        raise IngestionError(
            f"{path}: labels must be contiguous integers 0..K-1, found {uniq.tolist()}"
        )
    return X, y


@dataclass(frozen=True)
class ClassificationBandit:
    """Logged-bandit view of a labeled dataset.

    `train` and `eval` are logged datasets with actions sampled from the
    fitted classifier's probabilities (the behavior policy) and binary
    outcomes 1(a = label). `true_value` returns the exact target value over
    the evaluation rows: the mean of pi_target(label_i | x_i). Iterating the
    object yields (train, eval, target_policy, true_value).
    """

    train: LoggedDataset
    eval: LoggedDataset
    target_policy: Policy
    true_value: Callable[[], float]
    behavior_policy: Policy
    n_classes: int
    accuracy: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    train_labels: np.ndarray | None = None
    eval_labels: np.ndarray | None = None

    def __iter__(self):
        return iter((self.train, self.eval, self.target_policy, self.true_value))


def classification_to_bandit(
    csv_path,
    train_fraction: float = 0.5,
    alpha_star: float = 0.6,
    seed: int = 0,
    classifier_config: dict | None = None,
) -> ClassificationBandit:
    """Turn a labeled CSV into logged bandit feedback with exact ground truth.

    Rows are permuted by the seed and split by `train_fraction`. Features are
    z-scored with training-split statistics. A softmax-regression classifier
    f fit on the training labels defines the behavior policy
    pi_b(a|x) = f(x)_a and the target as the alpha-argmax mixture of f's
    greedy choice with uniform. Actions are sampled from pi_b on both splits
    and the outcome is 1(action = label).
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError("train_fraction must lie in (0, 1)")
    if not 0.0 <= alpha_star <= 1.0:
        raise ConfigurationError("alpha_star must lie in [0, 1]")
    X, labels = _read_labeled_csv(csv_path)
    n = X.shape[0]
    n_classes = int(labels.max()) + 1
    rng = rng_from((seed, _SPLIT_STREAM))
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    if not 1 <= n_train <= n - 1:
        raise ConfigurationError("train_fraction leaves an empty split")
    train_idx, eval_idx = perm[:n_train], perm[n_train:]

    mean = X[train_idx].mean(axis=0)
    scale = X[train_idx].std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (X - mean) / scale

    cfg = dict(classifier_config or {})
    cfg.setdefault("seed", seed)
    clf = SoftmaxClassifier(n_classes=n_classes, standardize=False, **cfg)
    clf.fit(Z[train_idx], labels[train_idx])
    behavior = clf.to_policy()
    target = AlphaArgmaxPolicy(
        lambda contexts: clf.decision_function(np.asarray(contexts, dtype=np.float64)),
        alpha_star, n_classes,
    )

    sample_rng = rng_from((seed, _SAMPLE_STREAM))

    def _log_split(idx, role):
        Zs = Z[idx]
        actions = _sample_categorical_rows(sample_rng, behavior.action_probs(Zs))
        outcomes = (actions == labels[idx]).astype(np.float64)
        return LoggedDataset(
            contexts=Zs, actions=actions, outcomes=outcomes,
            n_actions=n_classes, seed=int(seed), role=role,
        )

    train_ds = _log_split(train_idx, "train")
    eval_ds = _log_split(eval_idx, "eval")

    eval_probs = target.action_probs(Z[eval_idx])
    exact_value = float(eval_probs[np.arange(eval_idx.size), labels[eval_idx]].mean())
    accuracy = float((clf.predict(Z[eval_idx]) == labels[eval_idx]).mean())

    return ClassificationBandit(
        train=train_ds,
        eval=eval_ds,
        target_policy=target,
        true_value=lambda: exact_value,
        behavior_policy=behavior,
        n_classes=n_classes,
        accuracy=accuracy,
        feature_mean=mean,
        feature_scale=scale,
        train_labels=labels[train_idx],
        eval_labels=labels[eval_idx],
    )


def make_blobs_csv(path, n: int = 4000, n_classes: int = 5, d: int = 5,
                   separation: float = 4.0, seed: int = 0) -> str:
    """Write a linearly separable Gaussian-blobs CSV (features + `label`)."""
    if n < n_classes:
        raise ConfigurationError("need at least one row per class")
    rng = rng_from((seed, _ENV_STREAM))
    centers = rng.normal(size=(n_classes, d)) * separation
    labels = np.arange(n) % n_classes
    labels = rng.permutation(labels)
    X = centers[labels] + rng.normal(size=(n, d))
    path = str(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"f{i}" for i in range(d)] + ["label"])
        for row, label in zip(X, labels):
            writer.writerow([f"{v:.6f}" for v in row] + [int(label)])
    return path
