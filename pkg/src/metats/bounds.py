"""Closed-form regret bound evaluators and Monte Carlo certifications.

The evaluators compute the prior-dependent per-task bound, the prior-mismatch
sensitivity bound, the meta-posterior concentration radius, and the m-task
bound assembled from them. Certification routines replay the corresponding
simulations and check the inequalities empirically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agents import METATS, Agent, AgentSpec
from .envs import GAUSSIAN, reward_table, sample_instance_prior, sample_task_instance
from .harness import (
    SUB_INSTANCE,
    SUB_REWARDS,
    SUB_RUN,
    ExperimentConfig,
    build_meta_prior,
    run_experiment,
    run_task,
)
from .rng import derive_stream, name_substream

__all__ = [
    "BoundParams",
    "Theorem1Bound",
    "CertResult",
    "root_gap",
    "lemma1_bound",
    "lemma2_bound",
    "lemma3_radius",
    "theorem1_bound",
    "certify_lemma1",
    "certify_lemma3",
    "check_technical_lemmas",
    "bounds_report",
]


@dataclass(frozen=True)
class BoundParams:
    """Problem parameters the bounds are evaluated at; defaults are the
    two-armed Gaussian benchmark (n=200, sigma=1, sigma_0=0.1, sigma_q=0.5)."""

    K: int = 2
    n: int = 200
    m: int = 20
    sigma: float = 1.0
    sigma_0: float = 0.1
    sigma_q: float = 0.5
    delta: float = 0.05

    def __post_init__(self):
        if self.K < 1 or self.n < 1 or self.m < 1:
            raise ValueError("K, n, m must be >= 1")
        if not (self.sigma > 0.0 and self.sigma_0 > 0.0 and self.sigma_q > 0.0):
            raise ValueError("sigma, sigma_0, sigma_q must be > 0")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must be in (0, 1)")

    def replaced(self, **kw) -> "BoundParams":
        data = {
            "K": self.K,
            "n": self.n,
            "m": self.m,
            "sigma": self.sigma,
            "sigma_0": self.sigma_0,
            "sigma_q": self.sigma_q,
            "delta": self.delta,
        }
        data.update(kw)
        return BoundParams(**data)


def root_gap(n: int, K: int, sigma: float, sigma_0: float) -> float:
    """sqrt(n + sigma^2 sigma_0^-2 K) - sqrt(sigma^2 sigma_0^-2 K).

    The prior-concentration factor of the per-task bound: it vanishes as the
    prior narrows and approaches sqrt(n) for a diffuse prior.
    """
    kappa = sigma**2 / sigma_0**2 * K
    return math.sqrt(n + kappa) - math.sqrt(kappa)


def lemma1_bound(p: BoundParams) -> float:
    """Per-task Bayes regret of TS that samples from the true instance prior."""
    log_term = math.log(1.0 / p.delta)
    c_delta = 2.0 * math.sqrt(2.0 * p.sigma_0**2 * log_term) * p.K
    c_delta += math.sqrt(2.0 * p.sigma_0**2 / math.pi) * p.K * p.n * p.delta
    explore = 4.0 * math.sqrt(2.0 * p.sigma**2 * p.K * log_term)
    return c_delta + explore * root_gap(p.n, p.K, p.sigma, p.sigma_0)


def lemma2_bound(p: BoundParams, mu_star_maxnorm: float, epsilon: float) -> float:
    """Extra per-task regret of TS whose prior means are off by at most epsilon
    in the max norm, relative to the true prior."""
    if epsilon < 0.0:
        raise ValueError("epsilon must be >= 0")
    first = (
        4.0
        * (math.sqrt(p.sigma_0**2 / (2.0 * math.pi)) + mu_star_maxnorm)
        * p.K
        * p.n
        * p.delta
    )
    second = (
        2.0
        * (mu_star_maxnorm + math.sqrt(2.0 * p.sigma_0**2 * math.log(1.0 / p.delta)))
        * math.sqrt(2.0 / (math.pi * p.sigma_0**2))
        * p.K
        * p.n**2
        * epsilon
    )
    return first + second


def lemma3_radius(p: BoundParams, s: int) -> float:
    """Max-norm radius around the true prior means that the prior sampled at
    task s stays within, jointly over all tasks w.p. at least 1 - m delta."""
    if s < 1:
        raise ValueError("task index s must be >= 1")
    width = p.sigma_0**2 + p.sigma**2
    var_s = width / (width / p.sigma_q**2 + s - 1.0)
    return 2.0 * math.sqrt(2.0 * var_s * math.log(4.0 * p.K / p.delta))


@dataclass(frozen=True)
class Theorem1Bound:
    """The m-task bound split into its displayed pieces.

    first_term is linear in m (per-task cost of TS with a known prior),
    second_term is the O(sqrt(m)) cost of prior estimation, and residue is
    the explicit task-1 and forced-pull remainder the statement absorbs into
    its additive O~(Km + n) term.
    """

    c1: float
    c2: float
    c3: float
    first_term: float
    second_term: float
    residue: float

    @property
    def leading_terms(self) -> float:
        return self.first_term + self.second_term

    @property
    def full(self) -> float:
        return self.leading_terms + self.residue

    def to_json_dict(self) -> dict:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "first_term": self.first_term,
            "second_term": self.second_term,
            "residue": self.residue,
            "leading_terms": self.leading_terms,
            "full": self.full,
        }


def theorem1_bound(p: BoundParams) -> Theorem1Bound:
    """Bayes regret of the meta-learning policy over m tasks of horizon n."""
    log_n = math.log(p.n)
    log_2k = math.log(2.0 * p.K / p.delta)
    log_4k = math.log(4.0 * p.K / p.delta)
    c1 = 4.0 * math.sqrt(2.0 * p.sigma**2 * log_n)
    c2 = 2.0 * (
        math.sqrt(2.0 * p.sigma_q**2 * log_2k) + math.sqrt(2.0 * p.sigma_0**2 * log_n)
    )
    c3 = 8.0 * math.sqrt((p.sigma_0**2 + p.sigma**2) * log_4k / (math.pi * p.sigma_0**2))
    gap = root_gap(p.n, p.K, p.sigma, p.sigma_0)
    first = c1 * math.sqrt(p.K) * gap * p.m
    second = c2 * c3 * p.K * p.n**2 * math.sqrt(p.m)
    residue = (
        4.0
        * math.sqrt((p.sigma_q**2 + p.sigma_0**2) * log_2k)
        * (p.n + p.K * p.m)
    )
    return Theorem1Bound(
        c1=c1, c2=c2, c3=c3, first_term=first, second_term=second, residue=residue
    )


@dataclass(frozen=True)
class CertResult:
    """Empirical quantity vs. a closed-form bound, with Monte Carlo stderr."""

    empirical: float
    bound: float
    stderr: float

    @property
    def passed(self) -> bool:
        return self.empirical <= self.bound + 3.0 * self.stderr

    def to_json_dict(self) -> dict:
        return {
            "empirical": self.empirical,
            "bound": self.bound,
            "stderr": self.stderr,
            "passed": self.passed,
        }


def certify_lemma1(config: ExperimentConfig, R: int = 1000) -> CertResult:
    """Single-task regret of TS with the correct prior vs. its bound at
    delta = 1/n. Runs R independent single-task Gaussian experiments."""
    if config.family != GAUSSIAN:
        raise ValueError("lemma 1 certification needs the gaussian family")
    cert = ExperimentConfig(
        family=GAUSSIAN,
        K=config.K,
        m=1,
        n=config.n,
        runs=int(R),
        sigma=config.sigma,
        sigma_0=config.sigma_0,
        sigma_q=config.sigma_q,
        agents=({"kind": "oracle"},),
        master_seed=config.master_seed,
    )
    report = run_experiment(cert)
    name = report.agent_names[0]
    # delta = 1/n, clamped below 1 so the n=1 degenerate horizon stays valid
    # (log(1/delta) -> 0 there, leaving only the n*delta part of c(delta)).
    p = BoundParams(
        K=config.K,
        n=config.n,
        m=1,
        sigma=config.sigma,
        sigma_0=config.sigma_0,
        sigma_q=config.sigma_q,
        delta=min(1.0 / config.n, 1.0 - 1e-9),
    )
    return CertResult(
        empirical=report.final_mean(name),
        bound=lemma1_bound(p),
        stderr=report.final_stderr(name),
    )


def certify_lemma3(
    config: ExperimentConfig, R: int = 1000, delta: float = 0.1
) -> float:
    """Fraction of replications where some task's sampled prior mean leaves
    the concentration radius around the true prior mean.

    Each replication draws one true prior, then runs the meta-learning agent
    with forced terminal pulls (every arm seen at least once per task, the
    hypothesis of the radius formula) and checks the sampled prior at the
    start of every task. The guarantee is frequency <= m * delta.
    """
    if config.family != GAUSSIAN:
        raise ValueError("lemma 3 certification needs the gaussian family")
    if config.n < config.K:
        raise ValueError("horizon must be >= K for forced terminal pulls")
    p = BoundParams(
        K=config.K,
        n=config.n,
        m=config.m,
        sigma=config.sigma,
        sigma_0=config.sigma_0,
        sigma_q=config.sigma_q,
        delta=delta,
    )
    radii = np.array([lemma3_radius(p, s) for s in range(1, config.m + 1)])
    seed = config.master_seed
    violations = 0
    for rep in range(int(R)):
        run_stream = derive_stream(seed, rep, 0, SUB_RUN)
        meta_prior = build_meta_prior(config, run_stream)
        true_prior = sample_instance_prior(meta_prior, run_stream)
        agent = Agent(
            AgentSpec(kind=METATS, meta_prior=meta_prior, forced_last_k=True),
            reward_noise=config.sigma,
        )
        substream = name_substream(agent.name)
        for s in range(1, config.m + 1):
            stream = derive_stream(seed, rep, s, substream)
            agent.begin_task(stream, config.n)
            gap = float(np.max(np.abs(agent.task_prior.mu - true_prior.mu)))
            if gap > radii[s - 1]:
                violations += 1
                break
            instance = sample_task_instance(
                true_prior,
                derive_stream(seed, rep, s, SUB_INSTANCE),
                reward_noise=config.sigma,
            )
            table = reward_table(
                instance, config.n, derive_stream(seed, rep, s, SUB_REWARDS)
            )
            run_task(agent, instance, config.n, stream, rewards=table)
            agent.end_task()
    return violations / float(R)


def check_technical_lemmas(trials: int = 10_000, seed: int = 0) -> dict:
    """Verify the two partial-sum inequalities the proofs integrate against.

    For random (n <= 1e4, a in [0, 1e3]): sum 1/sqrt(i+a) <= 2(sqrt(n+a) -
    sqrt(a)) <= 2 sqrt(n), and for a > 0: sum 1/(i+a) <= log(1 + n/a).
    Sums are computed directly, not by the integral approximation under test.
    """
    stream = derive_stream(seed, 0, 0, 0)
    failures = 0
    worst_sqrt = -math.inf
    worst_log = -math.inf
    cases = [(1, 0.0), (100, 0.0), (10, 1.0)]
    stream.counter += 1
    ns = stream.gen.integers(1, 10_000 + 1, size=trials)
    stream.counter += 1
    avals = stream.gen.uniform(0.0, 1_000.0, size=trials)
    stream.counter += 1
    zero_a = stream.gen.random(size=trials) < 0.125
    avals[zero_a] = 0.0
    cases.extend(zip(ns.tolist(), avals.tolist()))

    for n, a in cases:
        i = np.arange(1, n + 1, dtype=float)
        sqrt_sum = float(np.sum(1.0 / np.sqrt(i + a)))
        sqrt_bound = 2.0 * (math.sqrt(n + a) - math.sqrt(a))
        if sqrt_sum > sqrt_bound or sqrt_bound > 2.0 * math.sqrt(n) + 1e-12:
            failures += 1
        worst_sqrt = max(worst_sqrt, sqrt_sum - sqrt_bound)
        if a > 0.0:
            log_sum = float(np.sum(1.0 / (i + a)))
            log_bound = math.log1p(n / a)
            if log_sum > log_bound:
                failures += 1
            worst_log = max(worst_log, log_sum - log_bound)

    return {
        "passed": failures == 0,
        "trials": len(cases),
        "failures": failures,
        "worst_sqrt_slack": worst_sqrt,
        "worst_log_slack": worst_log,
    }


def bounds_report(
    p: BoundParams,
    certify: bool = False,
    runs: int = 1000,
    lemma3_delta: float = 0.1,
    trials: int = 10_000,
    master_seed: int = 23,
) -> dict:
    """JSON-shaped summary of every evaluator at the given params.

    With certify=True the Monte Carlo certifications are appended; they cost
    on the order of runs * m * n simulated rounds.
    """
    t1 = theorem1_bound(p)
    marginal_width = math.sqrt(p.sigma_q**2 + p.sigma_0**2)
    report = {
        "params": {
            "K": p.K,
            "n": p.n,
            "m": p.m,
            "sigma": p.sigma,
            "sigma_0": p.sigma_0,
            "sigma_q": p.sigma_q,
            "delta": p.delta,
        },
        "root_gap_prior": root_gap(p.n, p.K, p.sigma, p.sigma_0),
        "root_gap_marginal": root_gap(p.n, p.K, p.sigma, marginal_width),
        "lemma1_bound": lemma1_bound(p),
        "lemma1_bound_marginal": lemma1_bound(p.replaced(sigma_0=marginal_width)),
        "lemma3_radius_task1": lemma3_radius(p, 1),
        "lemma3_radius_final": lemma3_radius(p, p.m),
        "theorem1": t1.to_json_dict(),
        "leading_terms": t1.leading_terms,
        "full_bound": t1.full,
        "empirical": None,
        "violation_frequency": None,
    }
    if certify:
        config = ExperimentConfig(
            family=GAUSSIAN,
            K=p.K,
            m=p.m,
            n=p.n,
            runs=1,
            sigma=p.sigma,
            sigma_0=p.sigma_0,
            sigma_q=p.sigma_q,
            master_seed=master_seed,
        )
        lemma1 = certify_lemma1(config, R=runs)
        report["empirical"] = lemma1.to_json_dict()
        report["violation_frequency"] = certify_lemma3(
            config, R=runs, delta=lemma3_delta
        )
        report["technical_lemmas"] = check_technical_lemmas(trials=trials)
    return report
