"""Shared fixtures: the four benchmark reports are expensive (tens of seconds
each), so they are computed once per session and shared between the unit
tests and the acceptance suite."""

import pytest

from metats.harness import ExperimentConfig, run_experiment

BENCH_SEED = 23


@pytest.fixture(scope="session")
def gaussian_report():
    """Two-armed Gaussian benchmark with the misspecified-width variants.

    Contains OracleTS, MetaTS, MetaTSx3, MetaTS/3 and TS. Stream keying is
    per agent name, so MetaTS/OracleTS/TS numbers are identical to the plain
    three-agent configuration.
    """
    config = ExperimentConfig(
        master_seed=BENCH_SEED,
        agents=(
            {"kind": "oracle"},
            {"kind": "metats"},
            {"kind": "metats", "misspecification_scale": 3.0},
            {"kind": "metats", "misspecification_scale": 1.0 / 3.0},
            {"kind": "agnostic"},
        ),
    )
    return run_experiment(config)


@pytest.fixture(scope="session")
def bernoulli_report():
    return run_experiment(ExperimentConfig(family="bernoulli", master_seed=BENCH_SEED))


@pytest.fixture(scope="session")
def linear_report():
    return run_experiment(
        ExperimentConfig(family="linear", K=10, d=2, master_seed=BENCH_SEED)
    )


@pytest.fixture(scope="session")
def degenerate_report():
    """Instance-prior width equal to the meta-prior width: meta-learning the
    prior mean cannot help, so MetaTS and plain TS should tie."""
    config = ExperimentConfig(
        master_seed=BENCH_SEED,
        sigma_0=0.5,
        sigma_q=0.5,
        agents=({"kind": "metats"}, {"kind": "agnostic"}),
    )
    return run_experiment(config)
