"""Generative hierarchy: meta-priors, instance priors, instances, rewards."""

import numpy as np
import pytest

from metats.envs import (
    BanditInstance,
    BetaProductPrior,
    CategoricalMetaPrior,
    GaussianDiagPrior,
    GaussianMetaPrior,
    LinearGaussianPrior,
    LinearMetaPrior,
    optimal_arm,
    reward_table,
    sample_instance_prior,
    sample_reward,
    sample_task_instance,
)
from metats.rng import derive_stream


def beta_pair():
    return (
        BetaProductPrior(alpha=np.array([6.0, 2.0]), beta=np.array([2.0, 6.0])),
        BetaProductPrior(alpha=np.array([2.0, 6.0]), beta=np.array([6.0, 2.0])),
    )


def test_categorical_meta_prior_validation():
    p1, p2 = beta_pair()
    with pytest.raises(ValueError):
        CategoricalMetaPrior(weights=np.array([0.7, 0.4]), priors=(p1, p2))
    with pytest.raises(ValueError):
        CategoricalMetaPrior(weights=np.array([1.2, -0.2]), priors=(p1, p2))


def test_beta_prior_validation():
    with pytest.raises(ValueError):
        BetaProductPrior(alpha=np.array([0.0, 1.0]), beta=np.array([1.0, 1.0]))


def test_gaussian_prior_validation():
    with pytest.raises(ValueError):
        GaussianDiagPrior(mu=np.zeros(2), sigma_0=0.0)
    with pytest.raises(ValueError):
        GaussianMetaPrior(sigma_q=-0.5, num_arms=2, sigma_0=0.1)


def test_linear_meta_prior_requires_spd():
    with pytest.raises(ValueError):
        LinearMetaPrior(
            mu_0=np.zeros(2),
            Lambda_0=np.array([[1.0, 2.0], [2.0, 1.0]]),  # indefinite
            Sigma=np.eye(2),
            features=np.zeros((3, 2)),
        )
    with pytest.raises(ValueError):
        LinearMetaPrior(
            mu_0=np.zeros(2),
            Lambda_0=np.array([[1.0, 0.5], [0.4, 1.0]]),  # asymmetric
            Sigma=np.eye(2),
            features=np.zeros((3, 2)),
        )


def test_categorical_degenerate_weights_select_first():
    p1, p2 = beta_pair()
    meta = CategoricalMetaPrior(weights=np.array([1.0, 0.0]), priors=(p1, p2))
    s = derive_stream(1, 0, 0)
    assert all(sample_instance_prior(meta, s) is p1 for _ in range(20))


def test_gaussian_meta_prior_variance():
    meta = GaussianMetaPrior(sigma_q=0.5, num_arms=2, sigma_0=0.1)
    s = derive_stream(2, 0, 0)
    mus = np.array([sample_instance_prior(meta, s).mu for _ in range(100_000)])
    assert np.all(np.abs(mus.var(axis=0, ddof=1) - 0.25) < 0.005)
    assert np.all(np.abs(mus.mean(axis=0)) < 0.01)


def test_linear_meta_prior_near_delta():
    meta = LinearMetaPrior(
        mu_0=np.array([0.4, -0.2]),
        Lambda_0=1e9 * np.eye(2),
        Sigma=0.01 * np.eye(2),
        features=np.zeros((3, 2)),
    )
    s = derive_stream(3, 0, 0)
    prior = sample_instance_prior(meta, s)
    assert np.all(np.abs(prior.theta_0 - meta.mu_0) < 1e-3)


def test_beta_instance_mean():
    p1, _ = beta_pair()
    s = derive_stream(4, 0, 0)
    thetas = np.array([sample_task_instance(p1, s).theta for _ in range(100_000)])
    assert abs(thetas[:, 0].mean() - 0.75) < 0.005
    assert abs(thetas[:, 1].mean() - 0.25) < 0.005
    assert np.all((thetas >= 0.0) & (thetas <= 1.0))


def test_gaussian_instance_degenerate_width():
    prior = GaussianDiagPrior(mu=np.array([0.3, -0.1]), sigma_0=1e-9)
    s = derive_stream(5, 0, 0)
    inst = sample_task_instance(prior, s, reward_noise=1.0)
    assert np.all(np.abs(inst.theta - prior.mu) < 1e-6)


def test_linear_instance_deterministic_map():
    # d=1, X=[[2]], theta_0=0.3, Sigma=[[0]] -> arm mean 0.6 exactly
    prior = LinearGaussianPrior(
        theta_0=np.array([0.3]),
        Sigma=np.array([[0.0]]),
        features=np.array([[2.0]]),
    )
    s = derive_stream(6, 0, 0)
    inst = sample_task_instance(prior, s, reward_noise=1.0)
    assert inst.theta == pytest.approx([0.6], abs=1e-15)
    assert inst.param == pytest.approx([0.3], abs=1e-15)


def test_gaussian_marginal_consistency():
    # Composing the two sampling levels gives variance sigma_q^2 + sigma_0^2
    meta = GaussianMetaPrior(sigma_q=0.5, num_arms=2, sigma_0=0.1)
    s = derive_stream(7, 0, 0)
    n = 100_000
    thetas = np.empty((n, 2))
    for i in range(n):
        prior = sample_instance_prior(meta, s)
        thetas[i] = sample_task_instance(prior, s, reward_noise=1.0).theta
    target = 0.26
    stderr = target * np.sqrt(2.0 / (n - 1))
    assert np.all(np.abs(thetas.var(axis=0, ddof=1) - target) < 3.0 * stderr)


def test_bernoulli_instance_validation():
    with pytest.raises(ValueError):
        BanditInstance(family="bernoulli", theta=np.array([0.5, 1.2]))


def test_linear_instance_consistency_enforced():
    with pytest.raises(ValueError):
        BanditInstance(
            family="linear",
            theta=np.array([1.0]),
            reward_noise=1.0,
            param=np.array([0.3]),
            features=np.array([[2.0]]),
        )


def test_bernoulli_rewards():
    inst = BanditInstance(family="bernoulli", theta=np.array([1.0, 0.75]))
    s = derive_stream(8, 0, 0)
    assert all(sample_reward(inst, 0, s) == 1.0 for _ in range(100))
    draws = np.array([sample_reward(inst, 1, s) for _ in range(100_000)])
    assert set(np.unique(draws)) <= {0.0, 1.0}
    assert abs(draws.mean() - 0.75) < 0.007


def test_gaussian_reward_noise():
    inst = BanditInstance(
        family="gaussian", theta=np.array([0.2, 0.0]), reward_noise=1.0
    )
    s = derive_stream(9, 0, 0)
    draws = np.array([sample_reward(inst, 0, s) for _ in range(100_000)])
    assert abs(draws.var(ddof=1) - 1.0) < 0.03
    assert abs(draws.mean() - 0.2) < 0.02


def test_reward_arm_out_of_range():
    inst = BanditInstance(family="bernoulli", theta=np.array([0.5, 0.5]))
    s = derive_stream(1, 0, 0)
    with pytest.raises(ValueError):
        sample_reward(inst, 2, s)


def test_reward_table_matches_family():
    inst = BanditInstance(
        family="gaussian", theta=np.array([0.2, -0.3]), reward_noise=1.0
    )
    table = reward_table(inst, 50, derive_stream(10, 0, 0))
    assert table.shape == (50, 2)
    binst = BanditInstance(family="bernoulli", theta=np.array([0.0, 1.0]))
    btable = reward_table(binst, 25, derive_stream(10, 0, 1))
    assert np.all(btable[:, 0] == 0.0) and np.all(btable[:, 1] == 1.0)


def test_reward_table_deterministic_in_stream():
    inst = BanditInstance(
        family="gaussian", theta=np.array([0.2, -0.3]), reward_noise=1.0
    )
    t1 = reward_table(inst, 20, derive_stream(11, 0, 0))
    t2 = reward_table(inst, 20, derive_stream(11, 0, 0))
    assert np.array_equal(t1, t2)


def test_optimal_arm():
    mk = lambda *theta: BanditInstance(family="bernoulli", theta=np.array(theta))
    assert optimal_arm(mk(0.3, 0.7)) == (1, 0.7)
    assert optimal_arm(mk(0.5, 0.5)) == (0, 0.5)  # tie toward lowest index
    assert optimal_arm(mk(0.1, 0.9, 0.4)) == (1, 0.9)


def test_optimal_arm_append_smaller_invariant():
    inst = BanditInstance(family="gaussian", theta=np.array([0.4, 0.9]), reward_noise=1.0)
    arm, best = optimal_arm(inst)
    bigger = BanditInstance(
        family="gaussian", theta=np.array([0.4, 0.9, 0.1, 0.85]), reward_noise=1.0
    )
    assert optimal_arm(bigger) == (arm, best)
