"""Shared fixtures.

The experiment-scale fixtures (saito sweeps, classification sweep, ATE runs)
are session-scoped and lazy: they are built once, the first time a test asks
for them, and reused by both the harness tests and the acceptance suite.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mr_ope import (
    SweepConfig,
    make_blobs_csv,
    random_tabular_env,
    run_ate_experiment,
    run_sweep,
)

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def tiny_env():
    """Small seeded discrete environment without extra structure."""
    return random_tabular_env(seed=7)


@pytest.fixture(scope="session")
def embedded_env():
    """Environment whose outcome is mediated by an action embedding."""
    return random_tabular_env(seed=11, structure="assumption2")


@pytest.fixture(scope="session")
def chain_env():
    """Environment with the two-level representation chain."""
    return random_tabular_env(seed=13, structure="chain")


@pytest.fixture(scope="session")
def binary_env():
    """Two-action environment usable by the treatment-effect methods."""
    return random_tabular_env(seed=17, n_actions=2)


@pytest.fixture(scope="session")
def blobs_csv(tmp_path_factory):
    """Default separable five-class CSV used by classification tests."""
    path = tmp_path_factory.mktemp("data") / "blobs.csv"
    make_blobs_csv(path, seed=0)
    return path


@pytest.fixture(scope="session")
def saito_sample_size_sweep():
    """Synthetic sweep over evaluation sample sizes, ten seeds per point.

    Shared by the harness invariant tests and the acceptance suite; the
    n in {100, 400} slice backs the small-sample accuracy criterion and the
    full grid backs the error-shrinks-with-n invariant.
    """
    config = SweepConfig(
        generator="saito",
        axis="n",
        grid=(100, 400, 1600),
        estimators=("ipw", "dr", "mr"),
        seeds=tuple(range(10)),
    )
    return run_sweep(config)


@pytest.fixture(scope="session")
def saito_alpha_sweep():
    """Synthetic sweep over target-policy optimality at n=800."""
    config = SweepConfig(
        generator="saito",
        axis="alpha_star",
        grid=(0.2, 1.0),
        estimators=("ipw", "mr"),
        seeds=tuple(range(10)),
        fixed={"n": 800},
    )
    return run_sweep(config)


@pytest.fixture(scope="session")
def classification_sweep(blobs_csv):
    """Classification bandit sweep on the separable CSV, ten seeds."""
    config = SweepConfig(
        generator="classification",
        axis="alpha_star",
        grid=(0.6,),
        estimators=("dm", "ipw", "dr", "switch-dr", "dros", "mr"),
        seeds=tuple(range(10)),
        fixed={"csv_path": str(blobs_csv), "train_fraction": 0.125, "n": 1000},
    )
    return run_sweep(config)


@pytest.fixture(scope="session")
def ate_results():
    """Treatment-effect preset experiment over ten seeds at n=50."""
    return run_ate_experiment(seeds=tuple(range(10)))


def assert_close(actual, expected, tol, label=""):
    """Absolute-difference assertion with a readable failure message."""
    actual = float(actual)
    expected = float(expected)
    assert abs(actual - expected) <= tol, (
        f"{label or 'value'}: got {actual!r}, expected {expected!r} "
        f"(|diff|={abs(actual - expected):.3e} > {tol:.1e})"
    )


@pytest.fixture(scope="session")
def close():
    return assert_close


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
