"""Seeded trials, ensembles and their statistics.

A trial alternates ``next_query`` / oracle answer / ``observe`` for a fixed
number of steps and records, for each step, the query, the point the policy
bet on, the answer, the regret ``|target - optimum|`` and the posterior mass
inside ``optimum +- eps``.  Trial ``i`` of an ensemble is seeded from
``(master seed, i)`` alone, so ensembles are reproducible and independent of
how the trials are scheduled.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from .environments import DirectionalOracle, SplEnvironment, benchmark_function
from .policies import (
    PAPER_DIRECTION_SAMPLES,
    POLICY_IDS,
    SA_DEFAULT_SCALE,
    GridPolicy,
    PolicyOptions,
    estimate_direction,
    make_policy,
)
from .posterior import POSITION_ATOL, Direction
from .priors import parse_prior

log = logging.getLogger(__name__)

ENVIRONMENTS = ("spl", "srf")
DEFAULT_EDGES = (0.01, 0.99)


class ConfigError(ValueError):
    """Raised for unresolvable policy or environment settings."""


@dataclass(frozen=True)
class TrialConfig:
    """Everything needed to reproduce one trial (together with its index)."""

    policy: str = "ts-spl"
    environment: str = "spl"
    lambda_star: float = 0.85
    pi: float = 0.85
    function: str = "A"
    horizon: int = 1000
    eps: float = 0.01
    threshold: float = 0.95
    seed: int = 0
    num_doors: int = 201
    num_truth_levels: Optional[int] = None
    truth_low: Optional[float] = None
    truth_high: Optional[float] = None
    truth_include_low: Optional[bool] = None
    door_prior: str = "flat"
    truth_prior: str = "flat"
    assumed_truth: Optional[float] = None
    sampling_phase: bool = False
    direction_samples: int = PAPER_DIRECTION_SAMPLES
    direction_edges: Tuple[float, ...] = DEFAULT_EDGES
    sign_convention: int = 1
    sa_scale: float = SA_DEFAULT_SCALE
    stop_at_convergence: bool = False
    truth_snapshots: Tuple[int, ...] = ()
    record_steps: bool = True

    def __post_init__(self):
        if self.horizon < 0:
            raise ConfigError("horizon must be non-negative")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.policy not in POLICY_IDS:
            raise ConfigError(f"unknown policy {self.policy!r}; expected one of {', '.join(POLICY_IDS)}")
        if self.environment not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.environment!r}; expected spl or srf")
        if self.sign_convention not in (-1, 1):
            raise ConfigError("sign convention must be -1 or +1")

    def replace(self, **changes) -> "TrialConfig":
        return dataclasses.replace(self, **changes)

    @property
    def optimum(self) -> float:
        if self.environment == "spl":
            return self.lambda_star
        return benchmark_function(self.function, self.pi).x_star

    def describe(self) -> Dict[str, object]:
        """Flat parameter tuple written next to every CSV row."""
        env = ({"lambda_star": self.lambda_star} if self.environment == "spl"
               else {"function": self.function})
        return {"policy": self.policy, "environment": self.environment, **env,
                "pi": self.pi, "horizon": self.horizon, "eps": self.eps,
                "threshold": self.threshold, "doors": self.num_doors,
                "truth_levels": _opt(self.num_truth_levels),
                "truth_low": _opt(self.truth_low), "truth_high": _opt(self.truth_high),
                "door_prior": self.door_prior, "truth_prior": self.truth_prior,
                "sampling_phase": int(self.sampling_phase), "seed": self.seed}


def _opt(v) -> object:
    return "" if v is None else v


@dataclass
class TrialResult:
    regret: np.ndarray
    queries: np.ndarray
    targets: np.ndarray
    answers: np.ndarray           # +1 left, -1 right
    masses: np.ndarray            # mass in the interval, prior first; empty without a belief
    convergence_step: Optional[int]
    sampling_steps: int = 0
    truth_snapshots: Dict[int, np.ndarray] = field(default_factory=dict)
    truth_levels: Optional[np.ndarray] = None

    @property
    def cumulative_regret(self) -> float:
        return float(self.regret.sum())

    @property
    def post_sampling_regret(self) -> float:
        return float(self.regret[self.sampling_steps:].sum())


@dataclass
class EnsembleStats:
    trials: int
    mean_regret: float
    std_regret: float
    mean_post_sampling: float
    std_post_sampling: float
    mean_convergence: Optional[float]
    std_convergence: Optional[float]
    converged: int

    @property
    def sem_regret(self) -> float:
        return self.std_regret / math.sqrt(self.trials)

    @property
    def sem_convergence(self) -> Optional[float]:
        if self.std_convergence is None:
            return None
        return self.std_convergence / math.sqrt(self.converged)


def convergence_step(masses: Sequence[float], threshold: float = 0.95) -> Optional[int]:
    """First index whose mass strictly exceeds ``threshold``; ``None`` if never."""
    above = np.flatnonzero(np.asarray(masses, dtype=float) > threshold)
    return int(above[0]) if above.size else None


def trial_rngs(seed: int, index: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Independent (policy, environment) generators for trial ``index``."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    a, b = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def build_policy(config: TrialConfig):
    truth_range = None
    include_low = config.truth_include_low
    if config.truth_low is not None or config.truth_high is not None:
        truth_range = (0.0 if config.truth_low is None else config.truth_low,
                       1.0 if config.truth_high is None else config.truth_high)
        # an explicit range means the closed interval unless told otherwise
        if include_low is None:
            include_low = True
    assumed = config.assumed_truth
    if assumed is None and config.policy in ("pbs", "sgbs", "bz"):
        assumed = config.pi
    opts = PolicyOptions(
        num_doors=config.num_doors,
        num_truth_levels=config.num_truth_levels,
        truth_range=truth_range,
        truth_include_low=include_low,
        door_prior=parse_prior(config.door_prior),
        truth_prior=parse_prior(config.truth_prior),
        assumed_truth=assumed,
        sa_scale=config.sa_scale,
    )
    try:
        return make_policy(config.policy, opts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_environment(config: TrialConfig):
    try:
        if config.environment == "spl":
            return SplEnvironment(config.lambda_star, config.pi)
        return benchmark_function(config.function, config.pi)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def run_trial(config: TrialConfig, index: int = 0) -> TrialResult:
    """Run one seeded trial; see the module docstring for what is recorded."""
    policy = build_policy(config)
    env = build_environment(config)
    policy_rng, env_rng = trial_rngs(config.seed, index)
    horizon = config.horizon
    optimum = env.target
    lo, hi = optimum - config.eps, optimum + config.eps

    regret = np.zeros(horizon)
    queries = np.full(horizon, np.nan)
    targets = np.full(horizon, np.nan)
    answers = np.zeros(horizon, dtype=np.int8)
    step = 0

    # Root finding: the informative-only schemes first learn the sign
    # convention from repeated edge samples; every sample costs a step.
    sampling_steps = 0
    convention = config.sign_convention
    if config.environment == "srf":
        if config.sampling_phase and policy.needs_direction:
            sampling_steps = min(config.direction_samples, horizon)
            edges = config.direction_edges
            for i in range(sampling_steps):
                x = edges[i % len(edges)]
                regret[i] = abs(x - optimum)
                queries[i] = targets[i] = x
            convention = estimate_direction(env.sign, edges, sampling_steps, env_rng)
            step = sampling_steps
        if policy.consumes_value:
            policy.sign_convention = convention
        env = DirectionalOracle(env, convention)

    belief = policy.door_belief()
    masses: List[float] = []
    if belief is not None:
        masses.append(_interval_mass(belief, lo, hi))
    snapshots: Dict[int, np.ndarray] = {}
    want = set(config.truth_snapshots)
    grid = policy.grid if isinstance(policy, GridPolicy) else None
    if grid is not None and 0 in want:
        snapshots[0] = grid.truth_marginal()

    n_obs = 0
    converged_at = convergence_step(masses, config.threshold) if masses else None
    while step < horizon:
        if config.stop_at_convergence and converged_at is not None:
            break
        q = policy.next_query(policy_rng)
        regret[step] = abs(q.target - optimum)
        if config.record_steps:
            queries[step] = q.position
            targets[step] = q.target
        if policy.consumes_value:
            y = env.value(q.position, env_rng)
            policy.observe_value(y)
            answers[step] = 1 if y > 0 else -1
        else:
            a = env.direction(q.position, env_rng)
            policy.observe(q, a)
            answers[step] = 1 if a is Direction.LEFT else -1
        step += 1
        n_obs += 1
        if belief is not None:
            masses.append(_interval_mass(policy.door_belief(), lo, hi))
            if converged_at is None and masses[-1] > config.threshold:
                converged_at = len(masses) - 1
        if grid is not None and n_obs in want:
            snapshots[n_obs] = grid.truth_marginal()

    if step < horizon:
        # stopped early at convergence; keep only what was run
        regret, queries, targets, answers = (a[:step] for a in (regret, queries, targets, answers))
    return TrialResult(
        regret=regret,
        queries=queries,
        targets=targets,
        answers=answers,
        masses=np.asarray(masses),
        convergence_step=converged_at,
        sampling_steps=sampling_steps,
        truth_snapshots=snapshots,
        truth_levels=None if grid is None else grid.truth_levels.copy(),
    )


def _interval_mass(belief, lo: float, hi: float) -> float:
    doors, probs = belief
    i = int(np.searchsorted(doors, lo - POSITION_ATOL, side="left"))
    j = int(np.searchsorted(doors, hi + POSITION_ATOL, side="right"))
    return float(probs[i:j].sum())


def _run_indexed(args):
    config, index = args
    return run_trial(config, index)


def run_ensemble(config: TrialConfig, trials: int, parallelism: int = 1
                 ) -> Tuple[EnsembleStats, List[TrialResult]]:
    """Run ``trials`` independent trials and aggregate them.

    ``parallelism > 1`` fans trials out over worker processes; the results
    are gathered in trial order, so the statistics do not depend on it.
    """
    if trials < 1:
        raise ConfigError("need at least one trial")
    jobs = [(config, i) for i in range(trials)]
    if parallelism is None or parallelism <= 0:
        parallelism = os.cpu_count() or 1
    if parallelism == 1 or trials == 1:
        results = [run_trial(config, i) for i in range(trials)]
    else:
        chunk = max(1, trials // (4 * parallelism))
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_indexed, jobs, chunksize=chunk))
    return summarize(results), results


def summarize(results: Sequence[TrialResult]) -> EnsembleStats:
    regret = np.array([r.cumulative_regret for r in results])
    post = np.array([r.post_sampling_regret for r in results])
    steps = np.array([r.convergence_step for r in results if r.convergence_step is not None], dtype=float)
    return EnsembleStats(
        trials=len(results),
        mean_regret=float(regret.mean()),
        std_regret=float(regret.std()),
        mean_post_sampling=float(post.mean()),
        std_post_sampling=float(post.std()),
        mean_convergence=float(steps.mean()) if steps.size else None,
        std_convergence=float(steps.std()) if steps.size else None,
        converged=int(steps.size),
    )


# ----------------------------------------------------------------------
# CSV export
# ----------------------------------------------------------------------

TRIAL_COLUMNS = ("step", "query", "target", "answer", "regret", "interval_mass")
ENSEMBLE_COLUMNS = ("mean_regret", "std_regret", "mean_post_sampling", "std_post_sampling",
                    "mean_convergence", "std_convergence", "converged", "trials")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def write_trial_csv(fh: TextIO, result: TrialResult, config: Optional[TrialConfig] = None,
                    trial: int = 0, header: bool = True) -> None:
    """Per-step rows; ``interval_mass`` is the mass after the step's update.

    Steps of a direction-sampling phase have no answer and no mass.
    """
    params = config.describe() if config is not None else {}
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(list(params) + ["trial"] + list(TRIAL_COLUMNS))
    masses = result.masses
    for k in range(result.regret.size):
        mass = masses[k + 1 - result.sampling_steps] if masses.size and k >= result.sampling_steps else None
        answer = {1: "left", -1: "right"}.get(int(result.answers[k]), "")
        w.writerow([_fmt(v) for v in params.values()] + [
            trial, k, _fmt(float(result.queries[k])), _fmt(float(result.targets[k])), answer,
            _fmt(float(result.regret[k])), _fmt(None if mass is None else float(mass))])


def ensemble_row(config: TrialConfig, stats: EnsembleStats) -> Dict[str, str]:
    row = {k: _fmt(v) for k, v in config.describe().items()}
    for name in ENSEMBLE_COLUMNS:
        row[name] = _fmt(getattr(stats, name))
    return row


def write_rows(fh: TextIO, rows: Sequence[Dict[str, str]]) -> None:
    """Write dict rows with the union of their keys as header, in first-seen order."""
    header: List[str] = []
    for r in rows:
        for k in r:
            if k not in header:
                header.append(k)
    w = csv.DictWriter(fh, fieldnames=header, restval="", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
