"""Conjugate posterior state: within-task updates and per-family meta updates.

Within a task the agent holds a TaskPosterior updated after every reward.
Across tasks it holds a MetaPosterior over instance priors, updated exactly
once per completed task from the task's full interaction log. All updates are
pure: they return new state objects and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .envs import BetaProductPrior, GaussianDiagPrior, LinearGaussianPrior
from .rng import RngStream, sample_beta, sample_categorical, sample_gaussian
from .special import log_gamma

__all__ = [
    "NumericalError",
    "TaskLog",
    "BetaCounts",
    "GaussianArms",
    "LinearGaussianPosterior",
    "CategoricalWeights",
    "GaussianDiagState",
    "LinearState",
    "init_task_posterior",
    "update_task_posterior",
    "sample_task_posterior",
    "categorical_log_evidence",
    "update_meta_posterior_categorical",
    "update_meta_posterior_gaussian",
    "update_meta_posterior_linear",
    "sample_meta_posterior",
]

WEIGHT_FLOOR = 1e-300
PIVOT_FLOOR = 1e-12


class NumericalError(RuntimeError):
    """A linear solve was refused because the system is numerically singular."""


def _spd_factor(mat: np.ndarray, context: str) -> np.ndarray:
    """Cholesky factor with an explicit pivot floor instead of silent regularization."""
    try:
        lower = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        cond = float(np.linalg.cond(mat))
        raise NumericalError(
            f"{context}: matrix is not positive-definite (condition number {cond:.3e})"
        ) from None
    if float(np.min(np.diag(lower))) < PIVOT_FLOOR:
        cond = float(np.linalg.cond(mat))
        raise NumericalError(
            f"{context}: Cholesky pivot below {PIVOT_FLOOR:g} (condition number {cond:.3e})"
        )
    return lower


def _spd_solve(mat: np.ndarray, rhs: np.ndarray, context: str) -> np.ndarray:
    lower = _spd_factor(mat, context)
    return np.linalg.solve(lower.T, np.linalg.solve(lower, rhs))


@dataclass
class TaskLog:
    """Interaction record of one task: pulls in order plus per-arm summaries."""

    num_arms: int
    arms: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    def append(self, arm: int, reward: float) -> None:
        if not 0 <= arm < self.num_arms:
            raise ValueError(f"arm {arm} out of range for K={self.num_arms}")
        self.arms.append(int(arm))
        self.rewards.append(float(reward))

    def __len__(self) -> int:
        return len(self.arms)

    @property
    def pull_counts(self) -> np.ndarray:
        return np.bincount(self.arms, minlength=self.num_arms).astype(float)

    @property
    def reward_sums(self) -> np.ndarray:
        # Summation in a canonical order (by arm, then value) so that permuting
        # rounds cannot change the result by even one ulp.
        arms = np.asarray(self.arms, dtype=int)
        rewards = np.asarray(self.rewards, dtype=float)
        order = np.lexsort((rewards, arms))
        return np.bincount(
            arms[order], weights=rewards[order], minlength=self.num_arms
        ).astype(float)

    @property
    def positive_counts(self) -> np.ndarray:
        """Per-arm count of reward 1 (Bernoulli logs)."""
        self._check_binary()
        return self.reward_sums

    @property
    def negative_counts(self) -> np.ndarray:
        """Per-arm count of reward 0 (Bernoulli logs)."""
        return self.pull_counts - self.positive_counts

    def _check_binary(self) -> None:
        for r in self.rewards:
            if r not in (0.0, 1.0):
                raise ValueError(f"non-binary reward {r!r} in a Bernoulli log")


# ---------------------------------------------------------------------------
# Within-task posteriors


@dataclass
class BetaCounts:
    """Beta posterior shapes per arm."""

    alpha: np.ndarray
    beta: np.ndarray


@dataclass
class GaussianArms:
    """Normal-normal posterior per arm with known observation noise.

    Stores sufficient statistics; mean and variance are evaluated in closed
    form, so the variance after N pulls is exactly sigma^2/(sigma^2/sigma_0^2 + N).
    """

    prior_mu: np.ndarray
    sigma_0: float
    sigma: float
    pulls: np.ndarray
    sums: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return self.sigma**2 / (self.sigma**2 / self.sigma_0**2 + self.pulls)

    @property
    def mean(self) -> np.ndarray:
        v = self.variance
        return v * (self.prior_mu / self.sigma_0**2 + self.sums / self.sigma**2)


@dataclass
class LinearGaussianPosterior:
    """Gaussian posterior over the latent parameter of a linear bandit."""

    precision: np.ndarray
    info: np.ndarray  # precision @ mean
    sigma: float
    features: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return _spd_solve(self.precision, self.info, "linear task posterior mean")


def init_task_posterior(prior, sigma: float = 1.0):
    """Posterior at zero observations: the prior itself.

    sigma is the known reward noise used by the Gaussian and linear families;
    the Bernoulli family ignores it.
    """
    if isinstance(prior, BetaProductPrior):
        return BetaCounts(alpha=prior.alpha.copy(), beta=prior.beta.copy())
    if isinstance(prior, GaussianDiagPrior):
        k = prior.num_arms
        return GaussianArms(
            prior_mu=prior.mu.copy(),
            sigma_0=prior.sigma_0,
            sigma=float(sigma),
            pulls=np.zeros(k),
            sums=np.zeros(k),
        )
    if isinstance(prior, LinearGaussianPrior):
        precision = _spd_solve(
            prior.Sigma, np.eye(prior.dim), "linear prior covariance inverse"
        )
        precision = 0.5 * (precision + precision.T)
        return LinearGaussianPosterior(
            precision=precision,
            info=precision @ prior.theta_0,
            sigma=float(sigma),
            features=prior.features,
        )
    raise TypeError(f"not an instance prior: {type(prior).__name__}")


def update_task_posterior(post, arm: int, reward: float):
    """Absorb one (arm, reward) observation; returns a new posterior."""
    if isinstance(post, BetaCounts):
        if reward not in (0.0, 1.0):
            raise ValueError(f"Bernoulli reward must be 0 or 1, got {reward!r}")
        alpha = post.alpha.copy()
        beta = post.beta.copy()
        alpha[arm] += reward
        beta[arm] += 1.0 - reward
        return BetaCounts(alpha=alpha, beta=beta)
    if isinstance(post, GaussianArms):
        pulls = post.pulls.copy()
        sums = post.sums.copy()
        pulls[arm] += 1.0
        sums[arm] += reward
        return replace(post, pulls=pulls, sums=sums)
    if isinstance(post, LinearGaussianPosterior):
        x = post.features[arm]
        precision = post.precision + np.outer(x, x) / post.sigma**2
        info = post.info + x * (reward / post.sigma**2)
        return replace(post, precision=precision, info=info)
    raise TypeError(f"not a task posterior: {type(post).__name__}")


def sample_task_posterior(post, stream: RngStream) -> np.ndarray:
    """One posterior sample of the arm-mean vector."""
    if isinstance(post, BetaCounts):
        return np.atleast_1d(sample_beta(stream, post.alpha, post.beta))
    if isinstance(post, GaussianArms):
        return np.atleast_1d(sample_gaussian(stream, post.mean, post.variance))
    if isinstance(post, LinearGaussianPosterior):
        lower = _spd_factor(post.precision, "linear task posterior sampling")
        mean = np.linalg.solve(lower.T, np.linalg.solve(lower, post.info))
        z = np.atleast_1d(sample_gaussian(stream, 0.0, 1.0, size=post.info.size))
        # precision = L L^T, so L^-T z has the posterior covariance.
        theta = mean + np.linalg.solve(lower.T, z)
        return post.features @ theta
    raise TypeError(f"not a task posterior: {type(post).__name__}")


# ---------------------------------------------------------------------------
# Meta-posteriors


@dataclass
class CategoricalWeights:
    """Posterior weights over a finite set of candidate Beta-product priors."""

    weights: np.ndarray
    priors: tuple

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.priors = tuple(self.priors)
        if self.weights.size != len(self.priors):
            raise ValueError("need one weight per candidate prior")
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1 within 1e-9")


@dataclass
class GaussianDiagState:
    """Gaussian meta-posterior over per-arm prior means, diagonal covariance."""

    mu: np.ndarray
    var: np.ndarray
    sigma_0: float
    sigma: float

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.var = np.asarray(self.var, dtype=float)
        if self.mu.shape != self.var.shape:
            raise ValueError("mu and var must have equal length")
        if np.any(self.var <= 0.0):
            raise ValueError("meta variances must be > 0")


@dataclass
class LinearState:
    """Gaussian meta-posterior over the shared linear parameter theta_0."""

    mu: np.ndarray
    Lambda: np.ndarray
    Sigma: np.ndarray
    sigma: float
    features: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.Lambda = np.asarray(self.Lambda, dtype=float)
        self.Sigma = np.asarray(self.Sigma, dtype=float)
        self.features = np.asarray(self.features, dtype=float)
        d = self.mu.size
        if self.Lambda.shape != (d, d) or self.Sigma.shape != (d, d):
            raise ValueError("Lambda and Sigma must be d x d")


def categorical_log_evidence(prior: BetaProductPrior, log: TaskLog) -> float:
    """log of the marginal likelihood of a Bernoulli task log under one prior.

    Product over arms of Beta-Binomial evidence, written with log-Gamma so the
    shapes may exceed the horizon without overflow.
    """
    a, b = prior.alpha, prior.beta
    pos = log.positive_counts
    neg = log.negative_counts
    total = log.pull_counts
    terms = (
        log_gamma(a + b)
        + log_gamma(a + pos)
        + log_gamma(b + neg)
        - log_gamma(a)
        - log_gamma(b)
        - log_gamma(a + b + total)
    )
    return float(np.sum(terms))


def update_meta_posterior_categorical(
    meta: CategoricalWeights, log: TaskLog
) -> CategoricalWeights:
    """Reweight candidate priors by their evidence for the completed task."""
    with np.errstate(divide="ignore"):
        logw = np.log(meta.weights)
    logw = logw + np.array([categorical_log_evidence(p, log) for p in meta.priors])
    logw -= np.max(logw[np.isfinite(logw)])
    w = np.exp(logw)
    w /= w.sum()
    w[w < WEIGHT_FLOOR] = 0.0
    w /= w.sum()
    return CategoricalWeights(weights=w, priors=meta.priors)


def update_meta_posterior_gaussian(
    meta: GaussianDiagState, log: TaskLog
) -> GaussianDiagState:
    """Per-arm precision-weighted update from one completed Gaussian task.

    An arm pulled T times with reward mean ybar contributes one effective
    observation of weight T/(T sigma_0^2 + sigma^2); unpulled arms keep their
    state bit-for-bit. Depends on the log only through (T, sum of rewards).
    """
    pulls = log.pull_counts
    sums = log.reward_sums
    pulled = pulls > 0
    t = pulls[pulled]
    weight = t / (t * meta.sigma_0**2 + meta.sigma**2)
    old_precision = 1.0 / meta.var[pulled]
    new_var = meta.var.copy()
    new_mu = meta.mu.copy()
    new_var[pulled] = 1.0 / (old_precision + weight)
    ybar = sums[pulled] / t
    new_mu[pulled] = new_var[pulled] * (
        meta.mu[pulled] * old_precision + ybar * weight
    )
    return replace(meta, mu=new_mu, var=new_var)


def update_meta_posterior_linear(
    meta: LinearState, log: TaskLog, mode: str = "woodbury"
) -> LinearState:
    """Absorb one completed linear task into the meta-posterior.

    mode="direct" solves the pull-count-sized system sigma^2 I + X_t Sigma X_t^T;
    mode="woodbury" solves only d x d systems via S_t = X_t^T X_t, c_t = X_t^T y_t.
    The two are algebraically identical.
    """
    if len(log) == 0:
        return meta
    x_rows = meta.features[log.arms]
    y = np.asarray(log.rewards, dtype=float)
    sig2 = meta.sigma**2
    if mode == "direct":
        mid = sig2 * np.eye(len(y)) + x_rows @ meta.Sigma @ x_rows.T
        gain = _spd_solve(mid, x_rows, "linear meta update (direct)")
        lam_new = meta.Lambda + x_rows.T @ gain
        rhs = meta.Lambda @ meta.mu + gain.T @ y
    elif mode == "woodbury":
        s_t = x_rows.T @ x_rows / sig2
        c_t = x_rows.T @ y / sig2
        sigma_inv = _spd_solve(
            meta.Sigma, np.eye(meta.Sigma.shape[0]), "task covariance inverse"
        )
        inner = sigma_inv + s_t
        correction = _spd_solve(
            inner, np.column_stack([s_t, c_t]), "linear meta update (woodbury)"
        )
        lam_new = meta.Lambda + s_t - s_t @ correction[:, :-1]
        rhs = meta.Lambda @ meta.mu + c_t - s_t @ correction[:, -1]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    lam_new = 0.5 * (lam_new + lam_new.T)
    mu_new = _spd_solve(lam_new, rhs, "linear meta posterior mean")
    return replace(meta, mu=mu_new, Lambda=lam_new)


def sample_meta_posterior(meta, stream: RngStream):
    """Draw one instance prior from the current meta-posterior."""
    if isinstance(meta, CategoricalWeights):
        j = sample_categorical(stream, meta.weights)
        return meta.priors[j]
    if isinstance(meta, GaussianDiagState):
        mu = np.atleast_1d(sample_gaussian(stream, meta.mu, meta.var))
        return GaussianDiagPrior(mu=mu, sigma_0=meta.sigma_0)
    if isinstance(meta, LinearState):
        lower = _spd_factor(meta.Lambda, "linear meta posterior sampling")
        z = np.atleast_1d(sample_gaussian(stream, 0.0, 1.0, size=meta.mu.size))
        theta_0 = meta.mu + np.linalg.solve(lower.T, z)
        return LinearGaussianPrior(
            theta_0=theta_0, Sigma=meta.Sigma, features=meta.features
        )
    raise TypeError(f"not a meta posterior: {type(meta).__name__}")
