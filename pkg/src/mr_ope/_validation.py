"""Input validation helpers shared across the package.

Small, sklearn-flavored checks that normalize user input to float64/int64
numpy arrays and raise early with readable messages.
"""

from __future__ import annotations

import numpy as np

PROB_ROW_TOL = 1e-12


class ConfigurationError(ValueError):
    """A required model, field, or flag is missing or inconsistent."""


class SupportViolationError(ValueError):
    """Target mass observed where the behavior distribution has none."""


class DegenerateWeightsError(ValueError):
    """Weight normalization impossible (weights sum to zero)."""


class IngestionError(ValueError):
    """Malformed external data (CSV/JSONL) with row diagnostics."""


class UnsupportedEstimatorError(ValueError):
    """Requested analysis is not defined for this estimator."""


def as_float_array(values, name: str, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def as_int_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind not in "iu":
        rounded = np.asarray(values, dtype=np.float64)
        if not np.all(rounded == np.floor(rounded)):
            raise ValueError(f"{name} must contain integers")
        arr = rounded.astype(np.int64)
    return arr.astype(np.int64)


def check_probability_rows(table: np.ndarray, name: str, tol: float = PROB_ROW_TOL) -> np.ndarray:
    """Validate that the last axis of `table` holds probability rows."""
    table = as_float_array(table, name)
    if np.any(table < 0):
        raise ValueError(f"{name} has negative probabilities")
    sums = table.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"{name} rows must sum to 1 within {tol}; worst deviation {worst:g}")
    return table


def check_action_range(actions: np.ndarray, n_actions: int, name: str = "actions") -> None:
    if actions.size and (actions.min() < 0 or actions.max() >= n_actions):
        raise ValueError(f"{name} must lie in [0, {n_actions})")


def check_same_length(name_to_array: dict) -> int:
    lengths = {name: len(arr) for name, arr in name_to_array.items() if arr is not None}
    if len(set(lengths.values())) > 1:
        raise ValueError(f"length mismatch: {lengths}")
    return next(iter(lengths.values()))


def check_fittable(dataset, op_name: str) -> None:
    """Enforce the train/eval split discipline: never fit on an evaluation split."""
    role = getattr(dataset, "role", None)
    if role == "eval":
        raise ConfigurationError(
            f"{op_name} received a dataset tagged role='eval'; "
            "fitting must only consume training splits"
        )


def close_to(lhs: float, rhs: float, tol: float) -> bool:
    """Scaled closeness: |lhs-rhs| <= tol * max(1, |lhs|, |rhs|)."""
    scale = max(1.0, abs(lhs), abs(rhs))
    return abs(lhs - rhs) <= tol * scale
