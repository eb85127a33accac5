"""Thompson sampling policies: meta-learning, oracle, and prior-agnostic.

All three run the same within-task TS loop over a conjugate posterior; they
differ only in where the task prior comes from. MetaTS samples it from a
meta-posterior that it updates after every completed task; OracleTS uses the
true instance prior; the agnostic baseline uses a fixed marginal or
uninformative prior and never learns across tasks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import (
    CategoricalMetaPrior,
    GaussianMetaPrior,
    LinearMetaPrior,
)
from .posteriors import (
    CategoricalWeights,
    GaussianDiagState,
    LinearState,
    TaskLog,
    init_task_posterior,
    sample_meta_posterior,
    sample_task_posterior,
    update_meta_posterior_categorical,
    update_meta_posterior_gaussian,
    update_meta_posterior_linear,
    update_task_posterior,
)
from .rng import RngStream

__all__ = ["METATS", "ORACLE", "AGNOSTIC", "KINDS", "AgentSpec", "Agent"]

METATS = "metats"
ORACLE = "oracle"
AGNOSTIC = "agnostic"
KINDS = (METATS, ORACLE, AGNOSTIC)


def _default_name(kind: str, scale: float) -> str:
    if kind == ORACLE:
        return "OracleTS"
    if kind == AGNOSTIC:
        return "TS"
    if scale == 1.0:
        return "MetaTS"
    if scale > 1.0:
        return f"MetaTSx{scale:g}"
    return f"MetaTS/{1.0 / scale:g}"


@dataclass
class AgentSpec:
    """Static description of one policy; exactly one prior field per kind."""

    kind: str
    meta_prior: object = None
    true_instance_prior: object = None
    agnostic_prior: object = None
    forced_last_k: bool = False
    misspecification_scale: float = 1.0
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        self.misspecification_scale = float(self.misspecification_scale)
        if not self.misspecification_scale > 0.0:
            raise ValueError("misspecification_scale must be > 0")
        wanted = {
            METATS: "meta_prior",
            ORACLE: "true_instance_prior",
            AGNOSTIC: "agnostic_prior",
        }[self.kind]
        for attr in ("meta_prior", "true_instance_prior", "agnostic_prior"):
            have = getattr(self, attr) is not None
            if have != (attr == wanted):
                raise ValueError(f"kind {self.kind!r} requires exactly {wanted} to be set")
        if self.kind != METATS and self.misspecification_scale != 1.0:
            raise ValueError("misspecification_scale applies to MetaTS only")
        if self.name is None:
            self.name = _default_name(self.kind, self.misspecification_scale)


def _init_meta_state(meta_prior, scale: float, reward_noise: float):
    """Meta-posterior at zero tasks, with the believed width scaled if asked."""
    if isinstance(meta_prior, CategoricalMetaPrior):
        if scale != 1.0:
            raise ValueError("categorical meta-priors have no width to misspecify")
        return CategoricalWeights(
            weights=meta_prior.weights.copy(), priors=meta_prior.priors
        )
    if isinstance(meta_prior, GaussianMetaPrior):
        k = meta_prior.num_arms
        width = meta_prior.sigma_q * scale
        return GaussianDiagState(
            mu=np.zeros(k),
            var=np.full(k, width**2),
            sigma_0=meta_prior.sigma_0,
            sigma=reward_noise,
        )
    if isinstance(meta_prior, LinearMetaPrior):
        return LinearState(
            mu=meta_prior.mu_0.copy(),
            Lambda=meta_prior.Lambda_0 / scale**2,
            Sigma=meta_prior.Sigma,
            sigma=reward_noise,
            features=meta_prior.features,
        )
    raise TypeError(f"not a meta-prior: {type(meta_prior).__name__}")


class Agent:
    """One policy instance: a single-threaded state machine for one run.

    Lifecycle per task: begin_task, then horizon times (select_action followed
    by observe of that same arm), then end_task. MetaTS updates its
    meta-posterior in end_task, never mid-task.
    """

    def __init__(self, spec: AgentSpec, reward_noise: float = 1.0):
        self.spec = spec
        self.name = spec.name
        self.reward_noise = float(reward_noise)
        self.meta = None
        if spec.kind == METATS:
            self.meta = _init_meta_state(
                spec.meta_prior, spec.misspecification_scale, self.reward_noise
            )
        self.task_prior = None
        self.task_posterior = None
        self.log = None
        self.horizon = 0
        self.rounds_played = 0
        self.tasks_completed = 0
        self._in_task = False
        self._pending_arm = None

    @property
    def num_arms(self) -> int:
        if self.task_prior is None:
            raise RuntimeError("no active task")
        return self.task_prior.num_arms

    def begin_task(self, stream: RngStream, horizon: int) -> None:
        if self._in_task:
            raise RuntimeError("begin_task called before the previous task ended")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.spec.kind == METATS:
            self.task_prior = sample_meta_posterior(self.meta, stream)
        elif self.spec.kind == ORACLE:
            self.task_prior = self.spec.true_instance_prior
        else:
            self.task_prior = self.spec.agnostic_prior
        self.task_posterior = init_task_posterior(self.task_prior, sigma=self.reward_noise)
        self.log = TaskLog(num_arms=self.task_prior.num_arms)
        self.horizon = int(horizon)
        self.rounds_played = 0
        self._pending_arm = None
        self._in_task = True

    def select_action(self, stream: RngStream) -> int:
        if not self._in_task:
            raise RuntimeError("select_action outside a task")
        if self._pending_arm is not None:
            raise RuntimeError("observe the previous action before selecting again")
        if self.rounds_played >= self.horizon:
            raise RuntimeError("horizon exhausted; call end_task")
        k = self.num_arms
        if self.spec.forced_last_k and self.rounds_played >= self.horizon - k:
            arm = self.rounds_played - (self.horizon - k)
        else:
            draw = sample_task_posterior(self.task_posterior, stream)
            arm = int(np.argmax(draw))
        self._pending_arm = arm
        return arm

    def observe(self, arm: int, reward: float) -> None:
        if self._pending_arm is None or arm != self._pending_arm:
            raise RuntimeError(
                f"observe({arm}) does not match the selected action {self._pending_arm}"
            )
        self.task_posterior = update_task_posterior(self.task_posterior, arm, reward)
        self.log.append(arm, reward)
        self.rounds_played += 1
        self._pending_arm = None

    def end_task(self) -> None:
        if not self._in_task:
            raise RuntimeError("end_task outside a task")
        if self.rounds_played < self.horizon:
            raise RuntimeError(
                f"end_task after {self.rounds_played}/{self.horizon} rounds"
            )
        if self.spec.kind == METATS:
            if isinstance(self.meta, CategoricalWeights):
                self.meta = update_meta_posterior_categorical(self.meta, self.log)
            elif isinstance(self.meta, GaussianDiagState):
                self.meta = update_meta_posterior_gaussian(self.meta, self.log)
            else:
                self.meta = update_meta_posterior_linear(self.meta, self.log)
        self.tasks_completed += 1
        self._in_task = False
