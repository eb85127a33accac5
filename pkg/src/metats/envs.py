"""Generative hierarchy for meta-bandit simulation.

Three levels: a meta-prior over instance priors, an instance prior over arm
means, and per-round stochastic rewards. Three conjugate families are
supported: Bernoulli arms under Beta-product priors chosen from a categorical
meta-prior, Gaussian arms under diagonal-Gaussian priors, and linear bandits
whose arm means are a fixed feature matrix times a latent parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream, sample_beta, sample_categorical, sample_gaussian

__all__ = [
    "BetaProductPrior",
    "GaussianDiagPrior",
    "LinearGaussianPrior",
    "CategoricalMetaPrior",
    "GaussianMetaPrior",
    "LinearMetaPrior",
    "BanditInstance",
    "sample_instance_prior",
    "sample_task_instance",
    "sample_reward",
    "reward_table",
    "optimal_arm",
]

BERNOULLI = "bernoulli"
GAUSSIAN = "gaussian"
LINEAR = "linear"
FAMILIES = (BERNOULLI, GAUSSIAN, LINEAR)


def _as_vector(x, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be a nonempty finite vector")
    return v


def _check_spd(mat, name: str, *, allow_semidefinite: bool = False) -> np.ndarray:
    """Validate a symmetric (semi)definite matrix; returns it as an array."""
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} must be finite")
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-12:
        raise ValueError(f"{name} must be symmetric within 1e-12")
    eps = -1e-12 * max(1.0, float(np.max(np.abs(m))))
    if allow_semidefinite:
        if np.min(np.linalg.eigvalsh(m)) < eps:
            raise ValueError(f"{name} must be positive semi-definite")
    else:
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise ValueError(f"{name} must be positive-definite") from None
    return m


@dataclass
class BetaProductPrior:
    """Independent Beta(alpha_i, beta_i) prior per arm."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = _as_vector(self.alpha, "alpha")
        self.beta = _as_vector(self.beta, "beta")
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must have equal length")
        if np.any(self.alpha <= 0.0) or np.any(self.beta <= 0.0):
            raise ValueError("Beta shapes must be strictly positive")

    @property
    def num_arms(self) -> int:
        return self.alpha.size


@dataclass
class GaussianDiagPrior:
    """N(mu_i, sigma_0^2) prior per arm, shared width sigma_0."""

    mu: np.ndarray
    sigma_0: float

    def __post_init__(self):
        self.mu = _as_vector(self.mu, "mu")
        self.sigma_0 = float(self.sigma_0)
        if not self.sigma_0 > 0.0:
            raise ValueError("sigma_0 must be > 0")

    @property
    def num_arms(self) -> int:
        return self.mu.size


@dataclass
class LinearGaussianPrior:
    """Latent parameter theta ~ N(theta_0, Sigma); arm means are X @ theta."""

    theta_0: np.ndarray
    Sigma: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.theta_0 = _as_vector(self.theta_0, "theta_0")
        # Semidefinite allowed: a zero covariance is the degenerate point prior.
        self.Sigma = _check_spd(self.Sigma, "Sigma", allow_semidefinite=True)
        self.features = np.asarray(self.features, dtype=float)
        d = self.theta_0.size
        if self.Sigma.shape != (d, d):
            raise ValueError("Sigma shape must match theta_0 dimension")
        if self.features.ndim != 2 or self.features.shape[1] != d:
            raise ValueError("features must be a K x d matrix")

    @property
    def num_arms(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.theta_0.size


@dataclass
class CategoricalMetaPrior:
    """Finite mixture over candidate Beta-product priors with known weights."""

    weights: np.ndarray
    priors: tuple

    def __post_init__(self):
        self.weights = _as_vector(self.weights, "weights")
        self.priors = tuple(self.priors)
        if len(self.priors) != self.weights.size:
            raise ValueError("need one candidate prior per weight")
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1 within 1e-9")
        arms = {p.num_arms for p in self.priors}
        if len(arms) != 1:
            raise ValueError("all candidate priors must share the arm count")

    @property
    def num_arms(self) -> int:
        return self.priors[0].num_arms


@dataclass
class GaussianMetaPrior:
    """Meta-prior N(0, sigma_q^2 I_K) over per-arm prior means.

    sigma_0 is the known width of the instance priors this meta-prior ranges
    over (the Gaussian-diagonal analog of the linear family's task covariance).
    """

    sigma_q: float
    num_arms: int
    sigma_0: float

    def __post_init__(self):
        self.sigma_q = float(self.sigma_q)
        self.num_arms = int(self.num_arms)
        self.sigma_0 = float(self.sigma_0)
        if not self.sigma_q > 0.0:
            raise ValueError("sigma_q must be > 0")
        if not self.sigma_0 > 0.0:
            raise ValueError("sigma_0 must be > 0")
        if self.num_arms < 1:
            raise ValueError("num_arms must be >= 1")


@dataclass
class LinearMetaPrior:
    """Meta-prior N(mu_0, Lambda_0^-1) over the shared parameter theta_0."""

    mu_0: np.ndarray
    Lambda_0: np.ndarray
    Sigma: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.mu_0 = _as_vector(self.mu_0, "mu_0")
        self.Lambda_0 = _check_spd(self.Lambda_0, "Lambda_0")
        self.Sigma = _check_spd(self.Sigma, "Sigma")
        self.features = np.asarray(self.features, dtype=float)
        d = self.mu_0.size
        if self.Lambda_0.shape != (d, d) or self.Sigma.shape != (d, d):
            raise ValueError("Lambda_0 and Sigma must be d x d")
        if self.features.ndim != 2 or self.features.shape[1] != d:
            raise ValueError("features must be a K x d matrix")

    @property
    def num_arms(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.mu_0.size


@dataclass
class BanditInstance:
    """Realized task: true arm means plus the reward noise model."""

    family: str
    theta: np.ndarray
    reward_noise: float = 0.0
    param: np.ndarray | None = field(default=None, repr=False)
    features: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        self.theta = _as_vector(self.theta, "theta")
        self.reward_noise = float(self.reward_noise)
        if self.reward_noise < 0.0:
            raise ValueError("reward_noise must be >= 0")
        if self.family == BERNOULLI and (
            np.any(self.theta < 0.0) or np.any(self.theta > 1.0)
        ):
            raise ValueError("Bernoulli arm means must lie in [0, 1]")
        if self.family == LINEAR:
            if self.param is None or self.features is None:
                raise ValueError("linear instances need param and features")
            derived = self.features @ self.param
            if np.max(np.abs(derived - self.theta)) > 1e-12:
                raise ValueError("theta must equal features @ param within 1e-12")

    @property
    def num_arms(self) -> int:
        return self.theta.size


def sample_instance_prior(meta, stream: RngStream):
    """Draw one instance prior from the meta-prior."""
    if isinstance(meta, CategoricalMetaPrior):
        j = sample_categorical(stream, meta.weights)
        return meta.priors[j]
    if isinstance(meta, GaussianMetaPrior):
        mu = sample_gaussian(stream, 0.0, meta.sigma_q**2, size=meta.num_arms)
        return GaussianDiagPrior(mu=mu, sigma_0=meta.sigma_0)
    if isinstance(meta, LinearMetaPrior):
        cov = np.linalg.inv(meta.Lambda_0)
        theta_0 = meta.mu_0 + _sample_mvn_zero(cov, stream)
        return LinearGaussianPrior(theta_0=theta_0, Sigma=meta.Sigma, features=meta.features)
    raise TypeError(f"not a meta-prior: {type(meta).__name__}")


def _sample_mvn_zero(cov: np.ndarray, stream: RngStream) -> np.ndarray:
    """Zero-mean multivariate normal draw; tolerates semidefinite covariance."""
    z = sample_gaussian(stream, 0.0, 1.0, size=cov.shape[0])
    z = np.atleast_1d(z)
    try:
        root = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return root @ z


def sample_task_instance(prior, stream: RngStream, reward_noise: float = 0.0) -> BanditInstance:
    """Draw one bandit instance from an instance prior.

    reward_noise is the observation noise sigma attached to the instance for
    the Gaussian and linear families; the Bernoulli family ignores it.
    """
    if isinstance(prior, BetaProductPrior):
        theta = sample_beta(stream, prior.alpha, prior.beta)
        return BanditInstance(family=BERNOULLI, theta=np.atleast_1d(theta))
    if isinstance(prior, GaussianDiagPrior):
        theta = sample_gaussian(stream, prior.mu, prior.sigma_0**2)
        return BanditInstance(
            family=GAUSSIAN, theta=np.atleast_1d(theta), reward_noise=reward_noise
        )
    if isinstance(prior, LinearGaussianPrior):
        param = prior.theta_0 + _sample_mvn_zero(prior.Sigma, stream)
        return BanditInstance(
            family=LINEAR,
            theta=prior.features @ param,
            reward_noise=reward_noise,
            param=param,
            features=prior.features,
        )
    raise TypeError(f"not an instance prior: {type(prior).__name__}")


def sample_reward(instance: BanditInstance, arm: int, stream: RngStream) -> float:
    """One stochastic reward for pulling `arm`."""
    if not 0 <= arm < instance.num_arms:
        raise ValueError(f"arm {arm} out of range for K={instance.num_arms}")
    if instance.family == BERNOULLI:
        stream.counter += 1
        return float(stream.gen.random() < instance.theta[arm])
    return sample_gaussian(stream, instance.theta[arm], instance.reward_noise**2)


def reward_table(instance: BanditInstance, horizon: int, stream: RngStream) -> np.ndarray:
    """Pre-draw the full horizon x K reward matrix for one task.

    Row t holds the rewards every arm would have paid in round t. Drawing the
    whole matrix from one agent-independent stream is what lets all compared
    agents face common random numbers.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    k = instance.num_arms
    stream.counter += 1
    if instance.family == BERNOULLI:
        return (stream.gen.random((horizon, k)) < instance.theta).astype(float)
    noise = stream.gen.standard_normal((horizon, k))
    return instance.theta + instance.reward_noise * noise


def optimal_arm(instance: BanditInstance) -> tuple[int, float]:
    """Best arm index and its mean; ties break toward the lowest index."""
    if instance.num_arms < 1:
        raise ValueError("instance has no arms")
    idx = int(np.argmax(instance.theta))
    return idx, float(instance.theta[idx])
