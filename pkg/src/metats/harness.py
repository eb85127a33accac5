"""Monte Carlo experiment engine and machine-readable regret reports.

One experiment is R independent runs. Each run draws one instance prior from
the meta-prior, then m task instances from it, and plays every configured
agent against the same instances and the same pre-drawn reward tables (common
random numbers). Runs are keyed by index, so serial and parallel execution
produce bit-identical reports.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import __version__
from .agents import AGNOSTIC, KINDS, METATS, ORACLE, Agent, AgentSpec
from .envs import (
    BERNOULLI,
    FAMILIES,
    GAUSSIAN,
    LINEAR,
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
from .posteriors import CategoricalWeights
from .rng import derive_stream, name_substream

__all__ = [
    "ExperimentConfig",
    "RegretReport",
    "DEFAULT_BERNOULLI_PRIOR_TABLE",
    "DEFAULT_BERNOULLI_WEIGHTS",
    "build_meta_prior",
    "agnostic_prior_for",
    "run_task",
    "run_experiment",
    "regret_slope",
    "emit_report",
]

# Substream ids reserved by the harness; agent substreams are name-hashed
# and start at 16 (see rng.name_substream).
SUB_RUN = 0
SUB_INSTANCE = 1
SUB_REWARDS = 2

# Two mirrored, well-separated candidate priors over two Bernoulli arms.
DEFAULT_BERNOULLI_PRIOR_TABLE = (((6.0, 2.0), (2.0, 6.0)), ((2.0, 6.0), (6.0, 2.0)))
DEFAULT_BERNOULLI_WEIGHTS = (0.5, 0.5)

_AGENT_KEYS = {"kind", "forced_last_k", "misspecification_scale", "name"}


@dataclass
class ExperimentConfig:
    """Fully validated experiment description; field names match the JSON keys."""

    family: str = GAUSSIAN
    K: int = 2
    d: int = 2
    m: int = 20
    n: int = 200
    runs: int = 100
    sigma: float = 1.0
    sigma_0: float = 0.1
    sigma_q: float = 0.5
    prior_table: tuple | None = None
    prior_weights: tuple | None = None
    agents: tuple = (
        {"kind": "oracle"},
        {"kind": "metats"},
        {"kind": "agnostic"},
    )
    master_seed: int = 23
    output_dir: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        for key in ("K", "d", "m", "n", "runs", "master_seed"):
            setattr(self, key, int(getattr(self, key)))
        for key in ("sigma", "sigma_0", "sigma_q"):
            setattr(self, key, float(getattr(self, key)))
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.m < 1 or self.n < 1 or self.runs < 1:
            raise ValueError("m, n, runs must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be >= 0")
        if not (self.sigma > 0.0 and self.sigma_0 > 0.0 and self.sigma_q > 0.0):
            raise ValueError("sigma, sigma_0, sigma_q must be > 0")
        self._validate_bernoulli_table()
        self.agents = self._validate_agents(self.agents)

    def _validate_bernoulli_table(self) -> None:
        if self.family != BERNOULLI:
            if self.prior_table is not None or self.prior_weights is not None:
                raise ValueError("prior_table/prior_weights apply to the bernoulli family only")
            return
        if self.prior_table is None:
            if self.K != 2:
                raise ValueError("prior_table is required for bernoulli with K != 2")
            self.prior_table = DEFAULT_BERNOULLI_PRIOR_TABLE
            if self.prior_weights is None:
                self.prior_weights = DEFAULT_BERNOULLI_WEIGHTS
        table = tuple(
            tuple((float(a), float(b)) for a, b in candidate)
            for candidate in self.prior_table
        )
        if len(table) < 1:
            raise ValueError("prior_table must list at least one candidate prior")
        for candidate in table:
            if len(candidate) != self.K:
                raise ValueError("each prior_table candidate needs one (alpha, beta) per arm")
            for a, b in candidate:
                if a <= 0.0 or b <= 0.0:
                    raise ValueError("prior_table shapes must be > 0")
        if self.prior_weights is None:
            self.prior_weights = tuple(1.0 / len(table) for _ in table)
        weights = tuple(float(w) for w in self.prior_weights)
        if len(weights) != len(table):
            raise ValueError("prior_weights length must match prior_table")
        if any(w < 0.0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError("prior_weights must be nonnegative and sum to 1")
        self.prior_table = table
        self.prior_weights = weights

    def _validate_agents(self, entries) -> tuple:
        if not entries:
            raise ValueError("agents must list at least one agent")
        resolved = []
        names = set()
        for entry in entries:
            if not isinstance(entry, dict):
                raise ValueError("each agents entry must be an object")
            unknown = set(entry) - _AGENT_KEYS
            if unknown:
                raise ValueError(f"unknown agent key(s): {sorted(unknown)}")
            if entry.get("kind") not in KINDS:
                raise ValueError(f"agent kind must be one of {KINDS}, got {entry.get('kind')!r}")
            spec = AgentSpec(
                kind=entry["kind"],
                meta_prior=_PROBE_META if entry["kind"] == METATS else None,
                true_instance_prior=_PROBE_PRIOR if entry["kind"] == ORACLE else None,
                agnostic_prior=_PROBE_PRIOR if entry["kind"] == AGNOSTIC else None,
                forced_last_k=bool(entry.get("forced_last_k", False)),
                misspecification_scale=float(entry.get("misspecification_scale", 1.0)),
                name=entry.get("name"),
            )
            if spec.name in names:
                raise ValueError(f"duplicate agent name {spec.name!r}")
            names.add(spec.name)
            resolved.append(
                {
                    "kind": spec.kind,
                    "forced_last_k": spec.forced_last_k,
                    "misspecification_scale": spec.misspecification_scale,
                    "name": spec.name,
                }
            )
        return tuple(resolved)

    @property
    def agent_names(self) -> tuple:
        return tuple(entry["name"] for entry in self.agents)

    def echo(self) -> dict:
        """Config as a JSON-able dict, excluding delivery knobs (output_dir)."""
        out = {}
        for f in fields(self):
            if f.name == "output_dir":
                continue
            value = getattr(self, f.name)
            out[f.name] = _to_jsonable(value)
        return out


# Placeholder priors used only to exercise AgentSpec validation inside config
# checking; real priors are bound per run.
_PROBE_META = object()
_PROBE_PRIOR = object()


def _to_jsonable(value):
    if isinstance(value, tuple):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    return value


def build_meta_prior(config: ExperimentConfig, stream):
    """The run-level meta-prior; for the linear family this draws the run's features."""
    if config.family == BERNOULLI:
        priors = tuple(
            BetaProductPrior(
                alpha=np.array([a for a, _ in candidate]),
                beta=np.array([b for _, b in candidate]),
            )
            for candidate in config.prior_table
        )
        return CategoricalMetaPrior(weights=np.array(config.prior_weights), priors=priors)
    if config.family == GAUSSIAN:
        return GaussianMetaPrior(
            sigma_q=config.sigma_q, num_arms=config.K, sigma_0=config.sigma_0
        )
    stream.counter += 1
    features = stream.gen.uniform(-0.5, 0.5, size=(config.K, config.d))
    return LinearMetaPrior(
        mu_0=np.zeros(config.d),
        Lambda_0=np.eye(config.d) / config.sigma_q**2,
        Sigma=config.sigma_0**2 * np.eye(config.d),
        features=features,
    )


def agnostic_prior_for(config: ExperimentConfig, meta_prior):
    """The fixed prior of the baseline that never learns across tasks.

    Bernoulli: uninformative Beta(1,1) per arm. Gaussian/linear: the marginal
    of instance parameters under the meta-prior, N(0, (sigma_q^2 + sigma_0^2) I).
    """
    if config.family == BERNOULLI:
        return BetaProductPrior(alpha=np.ones(config.K), beta=np.ones(config.K))
    if config.family == GAUSSIAN:
        width = float(np.sqrt(config.sigma_q**2 + config.sigma_0**2))
        return GaussianDiagPrior(mu=np.zeros(config.K), sigma_0=width)
    marginal = (config.sigma_q**2 + config.sigma_0**2) * np.eye(config.d)
    return LinearGaussianPrior(
        theta_0=np.zeros(config.d), Sigma=marginal, features=meta_prior.features
    )


def _materialize_agents(config: ExperimentConfig, meta_prior, true_prior):
    agents = []
    for entry in config.agents:
        spec = AgentSpec(
            kind=entry["kind"],
            meta_prior=meta_prior if entry["kind"] == METATS else None,
            true_instance_prior=true_prior if entry["kind"] == ORACLE else None,
            agnostic_prior=(
                agnostic_prior_for(config, meta_prior)
                if entry["kind"] == AGNOSTIC
                else None
            ),
            forced_last_k=entry["forced_last_k"],
            misspecification_scale=entry["misspecification_scale"],
            name=entry["name"],
        )
        agents.append(Agent(spec, reward_noise=config.sigma))
    return agents


def run_task(
    agent: Agent,
    instance: BanditInstance,
    horizon: int,
    action_stream,
    rewards: np.ndarray | None = None,
    reward_stream=None,
):
    """Play one task to completion; returns (task log, per-round pseudo-regret).

    Rewards come either from a pre-drawn horizon x K table (common random
    numbers) or are sampled on the fly from reward_stream. Regret uses the
    true means, not the realized rewards. begin_task/end_task are the
    caller's responsibility.
    """
    if (rewards is None) == (reward_stream is None):
        raise ValueError("pass exactly one of rewards or reward_stream")
    theta = instance.theta
    best = optimal_arm(instance)[1]
    regret = np.empty(horizon)
    for t in range(horizon):
        arm = agent.select_action(action_stream)
        if rewards is not None:
            r = float(rewards[t, arm])
        else:
            r = sample_reward(instance, arm, reward_stream)
        agent.observe(arm, r)
        regret[t] = best - theta[arm]
    return agent.log, regret


def _simulate_run(config: ExperimentConfig, run_idx: int):
    """One independent run: every agent against the same environment draws."""
    seed = config.master_seed
    run_stream = derive_stream(seed, run_idx, 0, SUB_RUN)
    meta_prior = build_meta_prior(config, run_stream)
    true_prior = sample_instance_prior(meta_prior, run_stream)
    agents = _materialize_agents(config, meta_prior, true_prior)

    noise = 0.0 if config.family == BERNOULLI else config.sigma
    per_task = np.zeros((len(agents), config.m))
    traces = {}
    j_star = None
    if config.family == BERNOULLI:
        j_star = next(
            i for i, p in enumerate(meta_prior.priors) if p is true_prior
        )
        for agent in agents:
            if isinstance(agent.meta, CategoricalWeights):
                trace = np.zeros(config.m + 1)
                trace[0] = agent.meta.weights[j_star]
                traces[agent.name] = trace

    for s in range(1, config.m + 1):
        instance = sample_task_instance(
            true_prior, derive_stream(seed, run_idx, s, SUB_INSTANCE), reward_noise=noise
        )
        table = reward_table(
            instance, config.n, derive_stream(seed, run_idx, s, SUB_REWARDS)
        )
        for a_idx, agent in enumerate(agents):
            stream = derive_stream(seed, run_idx, s, name_substream(agent.name))
            agent.begin_task(stream, config.n)
            _, regrets = run_task(agent, instance, config.n, stream, rewards=table)
            agent.end_task()
            per_task[a_idx, s - 1] = float(regrets.sum())
            if agent.name in traces:
                traces[agent.name][s] = agent.meta.weights[j_star]
    return per_task, traces


def _run_payload(args):
    config, run_idx = args
    return run_idx, _simulate_run(config, run_idx)


@dataclass(eq=False)
class RegretReport:
    """Per-(agent, run, task) cumulative pseudo-regret plus aggregation."""

    agent_names: tuple
    cum_regret: np.ndarray  # shape (agents, runs, tasks)
    config: dict
    master_seed: int
    version: str = __version__
    true_prior_weight: dict = field(default_factory=dict)

    @property
    def num_tasks(self) -> int:
        return self.cum_regret.shape[2]

    @property
    def runs(self) -> int:
        return self.cum_regret.shape[1]

    def agent_index(self, agent: str) -> int:
        try:
            return self.agent_names.index(agent)
        except ValueError:
            raise KeyError(f"no agent named {agent!r}") from None

    def mean(self) -> np.ndarray:
        return self.cum_regret.mean(axis=1)

    def stderr(self) -> np.ndarray:
        if self.runs < 2:
            return np.zeros((len(self.agent_names), self.num_tasks))
        return self.cum_regret.std(axis=1, ddof=1) / np.sqrt(self.runs)

    def final_mean(self, agent: str) -> float:
        return float(self.mean()[self.agent_index(agent), -1])

    def final_stderr(self, agent: str) -> float:
        return float(self.stderr()[self.agent_index(agent), -1])

    def to_json_dict(self) -> dict:
        out = {
            "version": self.version,
            "master_seed": self.master_seed,
            "config": self.config,
            "agents": list(self.agent_names),
            "runs": self.runs,
            "num_tasks": self.num_tasks,
            "cum_regret": {
                name: self.cum_regret[i].tolist()
                for i, name in enumerate(self.agent_names)
            },
            "summary": {
                name: {
                    "mean": self.mean()[i].tolist(),
                    "stderr": self.stderr()[i].tolist(),
                }
                for i, name in enumerate(self.agent_names)
            },
        }
        if self.true_prior_weight:
            out["true_prior_weight"] = {
                name: trace.tolist() for name, trace in self.true_prior_weight.items()
            }
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "RegretReport":
        names = tuple(data["agents"])
        cum = np.array([data["cum_regret"][name] for name in names], dtype=float)
        traces = {
            name: np.array(trace, dtype=float)
            for name, trace in data.get("true_prior_weight", {}).items()
        }
        return cls(
            agent_names=names,
            cum_regret=cum,
            config=data["config"],
            master_seed=data["master_seed"],
            version=data["version"],
            true_prior_weight=traces,
        )


def run_experiment(
    config: ExperimentConfig, threads: int = 1, progress=None
) -> RegretReport:
    """Run the full R x m x n benchmark described by the config.

    threads > 1 farms runs out to worker processes; results are keyed by run
    index, so the report is identical for any thread count.
    """
    num_agents = len(config.agents)
    per_task = np.zeros((num_agents, config.runs, config.m))
    traces = {}

    def _store(run_idx, result):
        run_regret, run_traces = result
        per_task[:, run_idx, :] = run_regret
        for name, trace in run_traces.items():
            traces.setdefault(name, np.zeros((config.runs, config.m + 1)))
            traces[name][run_idx] = trace

    if threads <= 1 or config.runs == 1:
        for run_idx in range(config.runs):
            _store(run_idx, _simulate_run(config, run_idx))
            if progress is not None:
                progress(run_idx + 1, config.runs)
    else:
        jobs = [(config, r) for r in range(config.runs)]
        done = 0
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for run_idx, result in pool.map(
                _run_payload, jobs, chunksize=max(1, config.runs // (threads * 4))
            ):
                _store(run_idx, result)
                done += 1
                if progress is not None:
                    progress(done, config.runs)

    return RegretReport(
        agent_names=config.agent_names,
        cum_regret=np.cumsum(per_task, axis=2),
        config=config.echo(),
        master_seed=config.master_seed,
        true_prior_weight=traces,
    )


def regret_slope(report: RegretReport, agent: str, window: tuple) -> float:
    """Least-squares slope of mean cumulative regret over a 1-based task window."""
    start, end = int(window[0]), int(window[1])
    if not (1 <= start <= end <= report.num_tasks):
        raise ValueError(f"window {window} outside [1, {report.num_tasks}]")
    if end - start < 1:
        raise ValueError("window must span at least 2 tasks")
    y = report.mean()[report.agent_index(agent), start - 1 : end]
    x = np.arange(start, end + 1, dtype=float)
    return float(np.polyfit(x, y, 1)[0])


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def emit_report(report: RegretReport, out_dir: str, fmt: str = "both") -> list:
    """Write rows/summary CSVs and/or the JSON mirror; returns written paths.

    All floats are written with 17 significant digits so emitted files are
    byte-reproducible and round-trip exactly.
    """
    if fmt not in ("csv", "json", "both"):
        raise ValueError(f"format must be csv, json or both, got {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if fmt in ("csv", "both"):
        rows_path = os.path.join(out_dir, "rows.csv")
        with open(rows_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("agent,run,task,cum_regret\n")
            for i, name in enumerate(report.agent_names):
                for r in range(report.runs):
                    for s in range(report.num_tasks):
                        fh.write(f"{name},{r},{s + 1},{_fmt(report.cum_regret[i, r, s])}\n")
        written.append(rows_path)
        summary_path = os.path.join(out_dir, "summary.csv")
        mean = report.mean()
        stderr = report.stderr()
        with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("agent,task,mean,stderr\n")
            for i, name in enumerate(report.agent_names):
                for s in range(report.num_tasks):
                    fh.write(f"{name},{s + 1},{_fmt(mean[i, s])},{_fmt(stderr[i, s])}\n")
        written.append(summary_path)
    if fmt in ("json", "both"):
        json_path = os.path.join(out_dir, "report.json")
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(json_path)
    return written
