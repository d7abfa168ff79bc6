"""Core data model: environments, datasets, policies, ratio models, reports.

A `TabularEnvironment` is an exhaustively enumerated finite joint distribution
over contexts, actions, and outcomes, optionally extended with a categorical
action-embedding layer (outcome mediated by (x, e)) or a two-stage
representation chain (x, a) -> r1 -> r2 -> y. Exact computations in
`mr_ope.oracle` enumerate these tables; Monte Carlo experiments sample from
them or from the parametric generators in `mr_ope.synth`.

All types are immutable after construction and safe to share across workers.
Sampling takes an explicit seed (numpy PCG64) and is pure given
(environment, n, seed).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._validation import (
    ConfigurationError,
    IngestionError,
    as_float_array,
    as_int_array,
    check_action_range,
    check_probability_rows,
    check_same_length,
)

# Algorithm name recorded in reports for reproducibility of acceptance runs.
RNG_ALGORITHM = "pcg64"

JSONL_SCHEMA = "logged-v1"


def rng_from(seed) -> np.random.Generator:
    """Seeded PCG64 generator; `seed` may be an int or a sequence of ints."""
    return np.random.default_rng(np.random.SeedSequence(seed))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Environments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TabularEnvironment:
    """Finite ground-truth joint distribution used as an exact oracle.

    Parameters
    ----------
    context_probs : (n_x,) probabilities of the categorical contexts.
    behavior_table : (n_x, n_a) logging policy rows pi_b(a|x).
    target_table : (n_x, n_a) target policy rows pi_t(a|x).
    outcome_support : (n_y,) distinct real outcome values.
    outcome_table : (n_x, n_a, n_y) outcome rows p(y|x, a).
    embedding_table : optional (n_a, n_e) embedding rows p(e|a), independent
        of x by construction.
    embedding_outcome_table : optional (n_x, n_e, n_y) rows p(y|x, e). When
        present the outcome is mediated by the embedding: p(y|x, a) must equal
        sum_e p(e|a) p(y|x, e), which makes the outcome conditionally
        independent of the action given (x, e).
    rep1_table / rep2_table / rep2_outcome_table : optional representation
        chain p(r1|x, a), p(r2|r1), p(y|r2). When present the outcome is
        mediated by the chain and p(y|x, a) must marginalize accordingly.
    """

    context_probs: np.ndarray
    behavior_table: np.ndarray
    target_table: np.ndarray
    outcome_support: np.ndarray
    outcome_table: np.ndarray
    embedding_table: np.ndarray | None = None
    embedding_outcome_table: np.ndarray | None = None
    rep1_table: np.ndarray | None = None
    rep2_table: np.ndarray | None = None
    rep2_outcome_table: np.ndarray | None = None

    def __post_init__(self):
        sets = object.__setattr__
        probs = check_probability_rows(self.context_probs, "context_probs")
        behavior = check_probability_rows(self.behavior_table, "behavior_table")
        target = check_probability_rows(self.target_table, "target_table")
        support = as_float_array(self.outcome_support, "outcome_support", ndim=1)
        outcome = check_probability_rows(self.outcome_table, "outcome_table")

        if behavior.shape != target.shape:
            raise ValueError("behavior_table and target_table shapes differ")
        n_x, n_a = behavior.shape
        if probs.shape != (n_x,):
            raise ValueError("context_probs length must match policy tables")
        if outcome.shape != (n_x, n_a, support.size):
            raise ValueError("outcome_table must have shape (n_x, n_a, n_y)")
        if np.unique(support).size != support.size:
            raise ValueError("outcome_support values must be distinct")

        # Assumption on supports: wherever the target policy puts mass, the
        # behavior policy must too, so importance weights stay finite.
        if np.any((target > 0) & (behavior == 0)):
            raise ValueError(
                "support condition violated: target_table > 0 where behavior_table == 0"
            )

        if self.embedding_table is not None and self.rep1_table is not None:
            raise ConfigurationError(
                "an environment declares embeddings or a representation chain, not both"
            )

        sets(self, "context_probs", _freeze(probs))
        sets(self, "behavior_table", _freeze(behavior))
        sets(self, "target_table", _freeze(target))
        sets(self, "outcome_support", _freeze(support))
        sets(self, "outcome_table", _freeze(outcome))

        if self.embedding_table is not None:
            emb = check_probability_rows(self.embedding_table, "embedding_table")
            if emb.shape[0] != n_a:
                raise ValueError("embedding_table must have one row per action")
            sets(self, "embedding_table", _freeze(emb))
            if self.embedding_outcome_table is not None:
                emb_out = check_probability_rows(
                    self.embedding_outcome_table, "embedding_outcome_table"
                )
                if emb_out.shape != (n_x, emb.shape[1], support.size):
                    raise ValueError(
                        "embedding_outcome_table must have shape (n_x, n_e, n_y)"
                    )
                derived = np.einsum("ae,xey->xay", emb, emb_out)
                if np.max(np.abs(derived - outcome)) > 1e-10:
                    raise ValueError(
                        "outcome_table inconsistent with embedding mediation "
                        "sum_e p(e|a) p(y|x,e)"
                    )
                sets(self, "embedding_outcome_table", _freeze(emb_out))
        elif self.embedding_outcome_table is not None:
            raise ConfigurationError("embedding_outcome_table requires embedding_table")

        chain_parts = (self.rep1_table, self.rep2_table, self.rep2_outcome_table)
        if any(p is not None for p in chain_parts):
            if any(p is None for p in chain_parts):
                raise ConfigurationError(
                    "a representation chain needs rep1_table, rep2_table, and "
                    "rep2_outcome_table together"
                )
            r1 = check_probability_rows(self.rep1_table, "rep1_table")
            r2 = check_probability_rows(self.rep2_table, "rep2_table")
            r2y = check_probability_rows(self.rep2_outcome_table, "rep2_outcome_table")
            if r1.shape[:2] != (n_x, n_a):
                raise ValueError("rep1_table must have shape (n_x, n_a, n_r1)")
            if r2.shape[0] != r1.shape[2]:
                raise ValueError("rep2_table rows must match rep1 support")
            if r2y.shape != (r2.shape[1], support.size):
                raise ValueError("rep2_outcome_table must have shape (n_r2, n_y)")
            derived = np.einsum("xar,rs,sy->xay", r1, r2, r2y)
            if np.max(np.abs(derived - outcome)) > 1e-10:
                raise ValueError(
                    "outcome_table inconsistent with the representation chain"
                )
            sets(self, "rep1_table", _freeze(r1))
            sets(self, "rep2_table", _freeze(r2))
            sets(self, "rep2_outcome_table", _freeze(r2y))

    # -- structure ---------------------------------------------------------

    @property
    def n_contexts(self) -> int:
        return self.context_probs.size

    @property
    def n_actions(self) -> int:
        return self.behavior_table.shape[1]

    @property
    def n_outcomes(self) -> int:
        return self.outcome_support.size

    @property
    def has_embeddings(self) -> bool:
        return self.embedding_table is not None

    @property
    def has_representation_chain(self) -> bool:
        return self.rep1_table is not None

    @classmethod
    def with_embeddings(
        cls,
        context_probs,
        behavior_table,
        target_table,
        outcome_support,
        embedding_table,
        embedding_outcome_table,
    ) -> "TabularEnvironment":
        """Build a mediated-outcome environment, deriving p(y|x,a) exactly."""
        emb = check_probability_rows(np.asarray(embedding_table, float), "embedding_table")
        emb_out = check_probability_rows(
            np.asarray(embedding_outcome_table, float), "embedding_outcome_table"
        )
        outcome_table = np.einsum("ae,xey->xay", emb, emb_out)
        return cls(
            context_probs=context_probs,
            behavior_table=behavior_table,
            target_table=target_table,
            outcome_support=outcome_support,
            outcome_table=outcome_table,
            embedding_table=emb,
            embedding_outcome_table=emb_out,
        )

    @classmethod
    def with_representation_chain(
        cls,
        context_probs,
        behavior_table,
        target_table,
        outcome_support,
        rep1_table,
        rep2_table,
        rep2_outcome_table,
    ) -> "TabularEnvironment":
        """Build a chain-mediated environment, deriving p(y|x,a) exactly."""
        r1 = check_probability_rows(np.asarray(rep1_table, float), "rep1_table")
        r2 = check_probability_rows(np.asarray(rep2_table, float), "rep2_table")
        r2y = check_probability_rows(np.asarray(rep2_outcome_table, float), "rep2_outcome_table")
        outcome_table = np.einsum("xar,rs,sy->xay", r1, r2, r2y)
        return cls(
            context_probs=context_probs,
            behavior_table=behavior_table,
            target_table=target_table,
            outcome_support=outcome_support,
            outcome_table=outcome_table,
            rep1_table=r1,
            rep2_table=r2,
            rep2_outcome_table=r2y,
        )

    def behavior_policy(self) -> "TabularPolicy":
        return TabularPolicy(self.behavior_table)

    def target_policy(self) -> "TabularPolicy":
        return TabularPolicy(self.target_table)


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


class Policy:
    """Conditional action distribution pi(a|x).

    Subclasses implement `action_probs`, mapping a batch of contexts to an
    (n, n_actions) row-stochastic matrix. Contexts are either categorical ids
    (1-d integer array) or dense real vectors ((n, d) float array); a given
    policy accepts exactly one of the two representations.
    """

    variant: str = "abstract"

    @property
    def n_actions(self) -> int:
        raise NotImplementedError

    def action_probs(self, contexts) -> np.ndarray:
        raise NotImplementedError

    def prob(self, x, a: int) -> float:
        """Probability of one action at one context."""
        if a < 0 or a >= self.n_actions:
            raise ValueError(f"action {a} out of range [0, {self.n_actions})")
        batch = _single_context_batch(x)
        return float(self.action_probs(batch)[0, a])

    def record_probs(self, contexts, actions) -> np.ndarray:
        """Per-record probabilities pi(a_i | x_i)."""
        actions = as_int_array(actions, "actions")
        check_action_range(actions, self.n_actions)
        matrix = self.action_probs(contexts)
        return matrix[np.arange(len(actions)), actions]


def _single_context_batch(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim == 0:
        return arr.reshape(1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    raise ValueError("a single context must be a scalar id or a 1-d vector")


class TabularPolicy(Policy):
    """Explicit (n_x, n_a) probability table over categorical contexts."""

    variant = "tabular"

    def __init__(self, table):
        self.table = _freeze(check_probability_rows(table, "policy table"))

    @property
    def n_actions(self) -> int:
        return self.table.shape[1]

    def action_probs(self, contexts) -> np.ndarray:
        ids = as_int_array(np.asarray(contexts).reshape(-1), "contexts")
        if ids.size and (ids.min() < 0 or ids.max() >= self.table.shape[0]):
            raise ValueError("context id out of range for tabular policy")
        return self.table[ids]


class SoftmaxLinearPolicy(Policy):
    """softmax over per-action linear scores w_a . x + b_a.

    `weights` has shape (n_actions, d + 1); the last column is the bias.
    """

    variant = "softmax-linear"

    def __init__(self, weights):
        weights = as_float_array(weights, "weights")
        if weights.ndim != 2 or weights.shape[1] < 2:
            raise ValueError("weights must have shape (n_actions, d + 1)")
        self.weights = _freeze(weights)

    @property
    def n_actions(self) -> int:
        return self.weights.shape[0]

    def action_probs(self, contexts) -> np.ndarray:
        X = as_float_array(contexts, "contexts")
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.weights.shape[1] - 1:
            raise ValueError(
                f"context dimension {X.shape[1]} does not match policy "
                f"dimension {self.weights.shape[1] - 1}"
            )
        logits = X @ self.weights[:, :-1].T + self.weights[:, -1]
        return _softmax(logits)


class SoftmaxScorePolicy(Policy):
    """softmax over an arbitrary score function s(x, .) -> (n, n_actions)."""

    variant = "softmax-score"

    def __init__(self, score_fn: Callable[[np.ndarray], np.ndarray], n_actions: int):
        self.score_fn = score_fn
        self._n_actions = int(n_actions)

    @property
    def n_actions(self) -> int:
        return self._n_actions

    def action_probs(self, contexts) -> np.ndarray:
        scores = np.asarray(self.score_fn(contexts), dtype=np.float64)
        if scores.ndim != 2 or scores.shape[1] != self._n_actions:
            raise ValueError("score function must return an (n, n_actions) array")
        return _softmax(scores)


class AlphaArgmaxPolicy(Policy):
    """Mixture of the greedy policy and the uniform policy.

    pi(a|x) = alpha_star * 1(a = argmax_a' s(x, a')) + (1 - alpha_star) / n_actions

    Ties in the score are broken toward the lowest action index, so the policy
    is a deterministic function of the scores.
    """

    variant = "alpha-argmax"

    def __init__(self, score_fn: Callable[[np.ndarray], np.ndarray], alpha_star: float, n_actions: int):
        if not 0.0 <= alpha_star <= 1.0:
            raise ValueError("alpha_star must lie in [0, 1]")
        self.score_fn = score_fn
        self.alpha_star = float(alpha_star)
        self._n_actions = int(n_actions)

    @property
    def n_actions(self) -> int:
        return self._n_actions

    def greedy_actions(self, contexts) -> np.ndarray:
        scores = np.asarray(self.score_fn(contexts), dtype=np.float64)
        if scores.ndim != 2 or scores.shape[1] != self._n_actions:
            raise ValueError("score function must return an (n, n_actions) array")
        return np.argmax(scores, axis=1)

    def action_probs(self, contexts) -> np.ndarray:
        best = self.greedy_actions(contexts)
        probs = np.full((best.size, self._n_actions), (1.0 - self.alpha_star) / self._n_actions)
        probs[np.arange(best.size), best] += self.alpha_star
        return probs


def policy_prob(policy: Policy, x, a: int) -> float:
    """Evaluate pi(a|x) for any policy variant. Deterministic."""
    return policy.prob(x, a)


def policy_to_json(policy: Policy) -> dict:
    """Serialize a table- or weight-backed policy to a JSON-able dict."""
    if isinstance(policy, TabularPolicy):
        return {"variant": "tabular", "table": policy.table.tolist()}
    if isinstance(policy, SoftmaxLinearPolicy):
        return {"variant": "softmax-linear", "weights": policy.weights.tolist()}
    raise ConfigurationError(
        f"policy variant '{policy.variant}' has no JSON form (requires a score function)"
    )


def policy_from_json(obj: dict) -> Policy:
    variant = obj.get("variant")
    if variant == "tabular":
        return TabularPolicy(np.asarray(obj["table"], dtype=np.float64))
    if variant == "softmax-linear":
        return SoftmaxLinearPolicy(np.asarray(obj["weights"], dtype=np.float64))
    raise ConfigurationError(f"unknown policy variant in JSON: {variant!r}")


# ---------------------------------------------------------------------------
# Ratio models
# ---------------------------------------------------------------------------

RATIO_KINDS = (
    "policy-ratio",
    "marginal-ratio",
    "h-model",
    "representation-ratio",
    "ate-marginal-ratio",
)


class RatioModel:
    """Per-record importance-weight model.

    `kind` says which weighting scheme the model implements; `backing` says
    what computes it (a table, a policy quotient, or a fitted regressor).
    Policy-ratio weights are nonnegative by construction. Marginal-ratio and
    ATE weights come from unconstrained regression and may be negative.
    """

    def __init__(self, kind: str, backing: str):
        if kind not in RATIO_KINDS:
            raise ConfigurationError(f"unknown ratio-model kind {kind!r}")
        self.kind = kind
        self.backing = backing

    def __call__(self, values) -> np.ndarray:
        raise NotImplementedError


class FunctionRatio(RatioModel):
    """Ratio model backed by an arbitrary vectorized function."""

    def __init__(self, kind: str, fn: Callable, backing: str = "function", meta: dict | None = None):
        super().__init__(kind, backing)
        self._fn = fn
        self.meta = dict(meta or {})

    def __call__(self, values) -> np.ndarray:
        return np.asarray(self._fn(values), dtype=np.float64)


class PolicyRatio(RatioModel):
    """Per-record policy ratio pi_t(a|x) / max(pi_b(a|x), floor)."""

    def __init__(self, target: Policy, behavior: Policy, floor: float = 1e-6):
        if not 0.0 < floor < 1.0:
            raise ValueError("floor must lie in (0, 1)")
        super().__init__("policy-ratio", "policy-quotient")
        self.target = target
        self.behavior = behavior
        self.floor = float(floor)

    def ratio(self, contexts, actions) -> np.ndarray:
        numer = self.target.record_probs(contexts, actions)
        denom = np.maximum(self.behavior.record_probs(contexts, actions), self.floor)
        return numer / denom

    def matrix(self, contexts) -> np.ndarray:
        numer = self.target.action_probs(contexts)
        denom = np.maximum(self.behavior.action_probs(contexts), self.floor)
        return numer / denom

    def per_record(self, dataset: "LoggedDataset") -> np.ndarray:
        return self.ratio(dataset.contexts, dataset.actions)

    def __call__(self, values) -> np.ndarray:
        if isinstance(values, LoggedDataset):
            return self.per_record(values)
        contexts, actions = values
        return self.ratio(contexts, actions)


# ---------------------------------------------------------------------------
# Logged datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoggedDataset:
    """n records (x_i, a_i, y_i[, e_i]) logged under the behavior policy.

    `contexts` holds categorical ids (1-d int array) or dense vectors
    ((n, d) float array); the two never mix. `role` tags the split the
    dataset belongs to ("train" or "eval"); fit operations refuse datasets
    tagged "eval" so the split discipline is enforced mechanically.
    """

    contexts: np.ndarray
    actions: np.ndarray
    outcomes: np.ndarray
    embeddings: np.ndarray | None = None
    n_actions: int | None = None
    seed: int | None = None
    role: str = "train"

    def __post_init__(self):
        sets = object.__setattr__
        contexts = np.asarray(self.contexts)
        if contexts.ndim == 1:
            contexts = as_int_array(contexts, "contexts")
        elif contexts.ndim == 2:
            contexts = as_float_array(contexts, "contexts")
        else:
            raise ValueError("contexts must be 1-d ids or an (n, d) matrix")
        actions = as_int_array(self.actions, "actions")
        outcomes = as_float_array(np.asarray(self.outcomes).reshape(-1), "outcomes")
        embeddings = self.embeddings
        if embeddings is not None:
            embeddings = as_int_array(embeddings, "embeddings")
            if embeddings.ndim == 1:
                embeddings = embeddings.reshape(-1, 1)
        n = check_same_length(
            {
                "contexts": contexts,
                "actions": actions,
                "outcomes": outcomes,
                "embeddings": embeddings,
            }
        )
        if n < 1:
            raise ValueError("a dataset needs at least one record")
        if self.n_actions is not None:
            check_action_range(actions, int(self.n_actions))
        elif actions.min(initial=0) < 0:
            raise ValueError("actions must be nonnegative")
        if self.role not in ("train", "eval"):
            raise ValueError("role must be 'train' or 'eval'")
        sets(self, "contexts", _freeze(contexts))
        sets(self, "actions", _freeze(actions))
        sets(self, "outcomes", _freeze(outcomes))
        if embeddings is not None:
            sets(self, "embeddings", _freeze(embeddings))

    def __len__(self) -> int:
        return self.actions.size

    @property
    def categorical_contexts(self) -> bool:
        return self.contexts.ndim == 1

    def subset(self, index, role: str | None = None) -> "LoggedDataset":
        """New dataset restricted to `index` (slice or integer array)."""
        return LoggedDataset(
            contexts=self.contexts[index],
            actions=self.actions[index],
            outcomes=self.outcomes[index],
            embeddings=None if self.embeddings is None else self.embeddings[index],
            n_actions=self.n_actions,
            seed=self.seed,
            role=self.role if role is None else role,
        )

    def with_role(self, role: str) -> "LoggedDataset":
        return dataclasses.replace(self, role=role)

    def with_outcomes(self, outcomes) -> "LoggedDataset":
        return dataclasses.replace(self, outcomes=np.asarray(outcomes, dtype=np.float64))


def _sample_categorical_rows(rng: np.random.Generator, rows: np.ndarray) -> np.ndarray:
    """Sample one index per probability row (rows: (n, k))."""
    cdf = np.cumsum(rows, axis=1)
    u = rng.random(rows.shape[0])
    idx = (u[:, None] > cdf).sum(axis=1)
    return np.minimum(idx, rows.shape[1] - 1)


def sample_logged_dataset(env: TabularEnvironment, n: int, seed: int) -> LoggedDataset:
    """Draw n i.i.d. records x ~ p(x), a ~ pi_b(.|x), [e ~ p(.|a)], y.

    Identical (env, n, seed) yields a bit-identical dataset. For embedding
    environments the outcome is drawn from p(y|x, e); for chain environments
    the latent representations are sampled and discarded, so the marginal law
    of (x, a, y) matches the derived outcome_table exactly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_from(seed)
    x_idx = _sample_categorical_rows(rng, np.tile(env.context_probs, (n, 1)))
    a_idx = _sample_categorical_rows(rng, env.behavior_table[x_idx])
    embeddings = None
    if env.has_embeddings:
        e_idx = _sample_categorical_rows(rng, env.embedding_table[a_idx])
        if env.embedding_outcome_table is not None:
            y_idx = _sample_categorical_rows(rng, env.embedding_outcome_table[x_idx, e_idx])
        else:
            y_idx = _sample_categorical_rows(rng, env.outcome_table[x_idx, a_idx])
        embeddings = e_idx.reshape(-1, 1)
    elif env.has_representation_chain:
        r1 = _sample_categorical_rows(rng, env.rep1_table[x_idx, a_idx])
        r2 = _sample_categorical_rows(rng, env.rep2_table[r1])
        y_idx = _sample_categorical_rows(rng, env.rep2_outcome_table[r2])
    else:
        y_idx = _sample_categorical_rows(rng, env.outcome_table[x_idx, a_idx])
    return LoggedDataset(
        contexts=x_idx,
        actions=a_idx,
        outcomes=env.outcome_support[y_idx],
        embeddings=embeddings,
        n_actions=env.n_actions,
        seed=int(seed) if np.isscalar(seed) else None,
    )


# ---------------------------------------------------------------------------
# JSON-lines serialization
# ---------------------------------------------------------------------------


def write_logged_dataset(dataset: LoggedDataset, path) -> None:
    """Write the JSON-lines form: a header line, then one record per line."""
    header = {
        "schema": JSONL_SCHEMA,
        "n": len(dataset),
        "n_actions": dataset.n_actions,
        "seed": dataset.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for i in range(len(dataset)):
            if dataset.categorical_contexts:
                x = int(dataset.contexts[i])
            else:
                x = [float(v) for v in dataset.contexts[i]]
            record = {"x": x, "a": int(dataset.actions[i]), "y": float(dataset.outcomes[i])}
            if dataset.embeddings is not None:
                record["e"] = [int(v) for v in dataset.embeddings[i]]
            fh.write(json.dumps(record) + "\n")


def read_logged_dataset(path) -> LoggedDataset:
    """Read the JSON-lines form written by `write_logged_dataset`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in (raw.strip() for raw in fh) if line]
    if not lines:
        raise IngestionError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path}:1: malformed header: {exc}") from exc
    if header.get("schema") != JSONL_SCHEMA:
        raise IngestionError(f"{path}:1: expected schema {JSONL_SCHEMA!r}")
    contexts, actions, outcomes, embeddings = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            contexts.append(rec["x"])
            actions.append(int(rec["a"]))
            outcomes.append(float(rec["y"]))
            embeddings.append(rec.get("e"))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise IngestionError(f"{path}:{lineno}: malformed record: {exc}") from exc
    declared = header.get("n")
    if declared is not None and declared != len(actions):
        raise IngestionError(
            f"{path}: header declares n={declared} but found {len(actions)} records"
        )
    has_e = [e is not None for e in embeddings]
    if any(has_e) and not all(has_e):
        raise IngestionError(f"{path}: embeddings must be present for all records or none")
    return LoggedDataset(
        contexts=np.asarray(contexts),
        actions=np.asarray(actions),
        outcomes=np.asarray(outcomes),
        embeddings=np.asarray(embeddings) if all(has_e) else None,
        n_actions=header.get("n_actions"),
        seed=header.get("seed"),
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate plus the seed-replicated error decomposition.

    When per-seed values are present, `mse = bias_sq + variance` holds to
    1e-9 relative by construction: errors are estimate minus truth per seed,
    bias_sq is the squared mean error, and variance is the population
    variance (divide by the number of seeds) of the errors. With a constant
    true value this is exactly the squared-mean / population-variance
    decomposition of the estimates themselves.
    """

    estimator_id: str
    value: float
    hyperparams: dict = field(default_factory=dict)
    per_seed_values: tuple = ()
    per_seed_true_values: tuple = ()
    mse: float | None = None
    bias_sq: float | None = None
    variance: float | None = None
    true_value: float | None = None

    @classmethod
    def from_runs(
        cls,
        estimator_id: str,
        values: Sequence[float],
        true_values,
        hyperparams: dict | None = None,
    ) -> "EstimateReport":
        values = np.asarray(values, dtype=np.float64)
        truths = np.broadcast_to(
            np.asarray(true_values, dtype=np.float64), values.shape
        ).copy()
        errors = values - truths
        mse = float(np.mean(errors**2))
        bias_sq = float(np.mean(errors) ** 2)
        variance = float(np.var(errors))
        params = dict(hyperparams or {})
        params.setdefault("rng", RNG_ALGORITHM)
        return cls(
            estimator_id=estimator_id,
            value=float(np.mean(values)),
            hyperparams=params,
            per_seed_values=tuple(float(v) for v in values),
            per_seed_true_values=tuple(float(v) for v in truths),
            mse=mse,
            bias_sq=bias_sq,
            variance=variance,
            true_value=float(np.mean(truths)),
        )

    def check_decomposition(self, rel_tol: float = 1e-9) -> bool:
        if self.mse is None:
            return True
        lhs = self.mse
        rhs = self.bias_sq + self.variance
        return abs(lhs - rhs) <= rel_tol * max(1.0, abs(lhs), abs(rhs))
