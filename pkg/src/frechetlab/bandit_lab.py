"""Frechet-UCB, classical UCB and the heteroscedastic Gaussian bandit harness.

Policies work on :class:`ArmStatistics` whose arrays may carry a leading
trial axis, so one call advances every trial of a simulation at once.
Rewards come from a per-trial "tape": the n-th pull of arm k in trial i
always returns ``mu_k + sigma_k * z[i, k, n]``.  Different policies run on
the same seed therefore see common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .gaussian_manifold import Gaussian, MetricKind, fisher_rao_univariate_sq
from .rng import StreamFactory
from .spatial_field import PppConfig, sample_ppp

VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class ArmSpec:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("arm variance must be positive")


@dataclass(frozen=True)
class BanditEnv:
    arms: tuple
    horizon: int
    locations: Optional[np.ndarray] = None
    max_variance: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        if len(self.arms) < 2:
            raise ValueError("need at least two arms")
        if self.horizon < len(self.arms):
            raise ValueError("horizon must cover the initialization round-robin")
        if any(a.variance > self.max_variance for a in self.arms):
            raise ValueError("arm variance above the declared maximum")

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def means(self) -> np.ndarray:
        return np.array([a.mean for a in self.arms])

    @property
    def variances(self) -> np.ndarray:
        return np.array([a.variance for a in self.arms])

    @property
    def best_arm(self) -> int:
        # np.argmax breaks ties towards the lowest index
        return int(np.argmax(self.means))

    @property
    def gaps(self) -> np.ndarray:
        return self.means.max() - self.means

    def shifted(self, c: float) -> "BanditEnv":
        arms = [ArmSpec(a.mean + c, a.variance) for a in self.arms]
        return BanditEnv(arms, self.horizon, self.locations, self.max_variance)


def make_reference_env(horizon: int = 3000) -> BanditEnv:
    """Ten arms: three high-mean/high-variance, four moderate, three low."""
    groups = [
        (np.linspace(0.87, 0.90, 3), 2.25),
        (np.linspace(0.72, 0.75, 4), 0.01),
        (np.linspace(0.40, 0.50, 3), 0.01),
    ]
    arms = [ArmSpec(float(m), v) for means, v in groups for m in means]
    return BanditEnv(arms, horizon, max_variance=2.25)


def make_ppp_env(cfg: PppConfig, mean_fn, variance_fn, rng, horizon: int) -> BanditEnv:
    """Arms at PPP locations with location-dependent reward parameters."""
    pts = sample_ppp(cfg, rng)
    arms = [ArmSpec(float(mean_fn(p)), float(variance_fn(p))) for p in pts]
    return BanditEnv(arms, horizon, locations=pts)


class ArmStatistics:
    """Per-arm pull counts, running means and sums of squared deviations."""

    def __init__(self, n_arms: int, batch: Sequence[int] = ()):
        shape = tuple(batch) + (n_arms,)
        self.pulls = np.zeros(shape, dtype=np.int64)
        self.empirical_mean = np.zeros(shape)
        self._m2 = np.zeros(shape)

    @classmethod
    def from_arrays(cls, pulls, means, variances):
        pulls = np.asarray(pulls, dtype=np.int64)
        s = cls(pulls.shape[-1], pulls.shape[:-1])
        s.pulls = pulls.copy()
        s.empirical_mean = np.asarray(means, dtype=float).copy()
        s._m2 = np.asarray(variances, dtype=float) * np.maximum(pulls - 1, 0)
        return s

    @property
    def n_arms(self) -> int:
        return self.pulls.shape[-1]

    @property
    def empirical_var(self) -> np.ndarray:
        """Unbiased sample variance; zero for arms with fewer than two pulls."""
        n = self.pulls
        return np.where(n >= 2, self._m2 / np.maximum(n - 1, 1), 0.0)

    def floored_var(self, floor: float = VARIANCE_FLOOR) -> np.ndarray:
        return np.maximum(self.empirical_var, floor)

    def update(self, arms, rewards) -> None:
        """Welford update; ``arms`` and ``rewards`` have the batch shape."""
        arms = np.asarray(arms)
        idx = np.indices(arms.shape) if arms.ndim else ()
        sel = tuple(idx) + (arms,)
        n = self.pulls[sel] + 1
        delta = rewards - self.empirical_mean[sel]
        new_mean = self.empirical_mean[sel] + delta / n
        self._m2[sel] += delta * (rewards - new_mean)
        self.empirical_mean[sel] = new_mean
        self.pulls[sel] = n


def _first_argmax(x) -> np.ndarray:
    return np.argmax(x, axis=-1)


def ucb_index(stats: ArmStatistics, t: int) -> np.ndarray:
    n = stats.pulls
    with np.errstate(divide="ignore"):
        bonus = np.sqrt(2.0 * math.log(t) / n)
    return np.where(n > 0, stats.empirical_mean + bonus, np.inf)


def _unpulled_first(stats):
    unpulled = stats.pulls == 0
    return unpulled.any(axis=-1), np.argmax(unpulled, axis=-1)


def classical_ucb_step(stats: ArmStatistics, t: int):
    """argmax of mean + sqrt(2 ln t / n); unpulled arms are played first."""
    forced, first = _unpulled_first(stats)
    choice = _first_argmax(ucb_index(stats, t))
    return np.where(forced, first, choice)


def constant_beta(value: float) -> Callable[[int], float]:
    def beta(t):
        return value

    beta.value = value
    return beta


@dataclass
class FrechetUcbConfig:
    """Knobs of Frechet-UCB.

    ``eps=None`` selects the adaptive radius: no restriction for the first
    ``2K`` rounds, then twice the sample standard deviation of the current
    arm-to-belief distances.
    """

    eps: Optional[float] = None
    beta: Union[float, Callable[[int], float]] = 1.0
    metric: MetricKind = MetricKind.WASSERSTEIN2
    variance_floor: float = VARIANCE_FLOOR
    warmup_factor: int = 2

    def __post_init__(self):
        self.metric = MetricKind.parse(self.metric)
        if self.metric is MetricKind.AFFINE_INVARIANT:
            raise ValueError("the bandit needs a metric on Gaussians")
        if not callable(self.beta):
            if not self.beta >= 0:
                raise ValueError("beta must be non-negative")
            self.beta = constant_beta(float(self.beta))
        if self.eps is not None and not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.variance_floor > 0:
            raise ValueError("variance floor must be positive")

    def radius(self, distances: np.ndarray, t: int, n_arms: int):
        if self.eps is not None:
            return np.full(distances.shape[:-1], float(self.eps))
        if t <= self.warmup_factor * n_arms:
            return np.full(distances.shape[:-1], np.inf)
        return 2.0 * np.std(distances, axis=-1, ddof=1)

    def params(self):
        return {
            "eps": "adaptive" if self.eps is None else self.eps,
            "beta": getattr(self.beta, "value", repr(self.beta)),
            "metric": self.metric.value,
            "variance_floor": self.variance_floor,
            "warmup_rounds": f"{self.warmup_factor}K",
        }


def frechet_belief_params(stats: ArmStatistics, cfg: FrechetUcbConfig):
    """Precision-weighted mean and aggregate variance 1 / sum(precisions)."""
    w = 1.0 / stats.floored_var(cfg.variance_floor)
    total = w.sum(axis=-1)
    return (w * stats.empirical_mean).sum(axis=-1) / total, 1.0 / total


def frechet_belief(stats: ArmStatistics, cfg: FrechetUcbConfig) -> Gaussian:
    if stats.pulls.ndim != 1:
        raise ValueError("frechet_belief works on a single trial; use frechet_belief_params")
    mean, var = frechet_belief_params(stats, cfg)
    return Gaussian([mean], [[var]])


def belief_distances_sq(stats: ArmStatistics, cfg: FrechetUcbConfig) -> np.ndarray:
    """d^2 between each arm belief N(mean_k, var_k) and the aggregate belief."""
    mf, vf = frechet_belief_params(stats, cfg)
    mf, vf = mf[..., None], vf[..., None]
    mk = stats.empirical_mean
    vk = stats.floored_var(cfg.variance_floor)
    if cfg.metric is MetricKind.WASSERSTEIN2:
        return (mk - mf) ** 2 + (np.sqrt(vk) - np.sqrt(vf)) ** 2
    return fisher_rao_univariate_sq(mk, vk, mf, vf)


def frechet_ucb_scores(stats: ArmStatistics, cfg: FrechetUcbConfig, t: int):
    """Acquisition values d^2 - beta * UCB, +inf outside the neighbourhood."""
    d2 = belief_distances_sq(stats, cfg)
    d = np.sqrt(d2)
    eps = cfg.radius(d, t, stats.n_arms)[..., None]
    inside = d <= eps
    inside = np.where(inside.any(axis=-1, keepdims=True), inside, True)
    score = d2 - cfg.beta(t) * ucb_index(stats, t)
    return np.where(inside, score, np.inf)


def frechet_ucb_step(stats: ArmStatistics, cfg: FrechetUcbConfig, t: int):
    forced, first = _unpulled_first(stats)
    choice = np.argmin(frechet_ucb_scores(stats, cfg, t), axis=-1)
    return np.where(forced, first, choice)


# ---------------------------------------------------------------------------
# policies and the regret harness


class Policy:
    name = "policy"

    def reset(self, n_trials: int, n_arms: int, streams: StreamFactory) -> None:
        pass

    def select(self, stats: ArmStatistics, t: int) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        return {}


class ClassicalUcb(Policy):
    name = "classical_ucb"

    def select(self, stats, t):
        return classical_ucb_step(stats, t)


class FrechetUcb(Policy):
    name = "frechet_ucb"

    def __init__(self, config: Optional[FrechetUcbConfig] = None):
        self.config = config or FrechetUcbConfig()

    def select(self, stats, t):
        return frechet_ucb_step(stats, self.config, t)

    def params(self):
        return self.config.params()


class FixedArm(Policy):
    """Always plays one arm; with the best arm this is the oracle."""

    name = "fixed_arm"

    def __init__(self, arm: int):
        self.arm = arm

    def select(self, stats, t):
        return np.full(stats.pulls.shape[:-1], self.arm)

    def params(self):
        return {"arm": self.arm}


class UniformRandom(Policy):
    name = "uniform_random"

    def reset(self, n_trials, n_arms, streams):
        self._rngs = [streams("policy", self.name, i) for i in range(n_trials)]

    def select(self, stats, t):
        k = stats.n_arms
        return np.array([g.integers(k) for g in self._rngs])


@dataclass
class RegretTrace:
    per_trial: np.ndarray
    mean_path: np.ndarray
    ci95_half_width: np.ndarray
    choices: np.ndarray = field(repr=False)
    policy: str = ""

    @classmethod
    def from_paths(cls, per_trial, choices, policy=""):
        per_trial = np.asarray(per_trial)
        mean = per_trial.mean(axis=0)
        n = per_trial.shape[0]
        sd = per_trial.std(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
        return cls(per_trial, mean, 1.96 * sd / np.sqrt(n), choices, policy)

    @property
    def trials(self) -> int:
        return self.per_trial.shape[0]

    @property
    def horizon(self) -> int:
        return self.per_trial.shape[1]

    def final(self):
        return float(self.mean_path[-1]), float(self.ci95_half_width[-1])

    def pull_counts(self, n_arms: int) -> np.ndarray:
        """(trials, K) number of times each arm was played."""
        return np.stack([np.bincount(c, minlength=n_arms) for c in self.choices])

    def pulls_after(self, round_index: int, arms) -> np.ndarray:
        """Per-trial plays of ``arms`` in rounds strictly after ``round_index`` (1-based)."""
        tail = self.choices[:, round_index:]
        return np.isin(tail, list(arms)).sum(axis=1)

    def rows(self):
        for t in range(self.horizon):
            yield t + 1, self.mean_path[t], self.ci95_half_width[t]


def reward_tape(env: BanditEnv, trials: int, streams: StreamFactory) -> np.ndarray:
    """(trials, K, T) standard normals; trial i uses its own substream."""
    k, T = env.n_arms, env.horizon
    return np.stack([streams("bandit-tape", i).standard_normal((k, T)) for i in range(trials)])


def run_policy(env: BanditEnv, policy: Policy, trials: int, streams: StreamFactory,
               tape: Optional[np.ndarray] = None) -> RegretTrace:
    """Cumulative pseudo-regret paths of ``policy`` over independent trials.

    Rounds 1..K play arms 0..K-1 in order for every policy.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    K, T = env.n_arms, env.horizon
    if tape is None:
        tape = reward_tape(env, trials, streams)
    mu, sd, gaps = env.means, np.sqrt(env.variances), env.gaps
    policy.reset(trials, K, streams)
    stats = ArmStatistics(K, (trials,))
    rows = np.arange(trials)
    choices = np.empty((trials, T), dtype=np.int64)
    for t in range(1, T + 1):
        if t <= K:
            arm = np.full(trials, t - 1)
        else:
            arm = np.asarray(policy.select(stats, t))
        z = tape[rows, arm, stats.pulls[rows, arm]]
        stats.update(arm, mu[arm] + sd[arm] * z)
        choices[:, t - 1] = arm
    regret = np.cumsum(gaps[choices], axis=1)
    return RegretTrace.from_paths(regret, choices, policy.name)


def ucb_pull_bound(gap: float, horizon: int) -> float:
    """8 ln T / gap^2 + 1 + pi^2/3 expected plays of a suboptimal arm."""
    return 8.0 * math.log(horizon) / gap**2 + 1.0 + math.pi**2 / 3.0


def arm_distance(env: BanditEnv, i: int, j: int, metric=MetricKind.WASSERSTEIN2) -> float:
    a, b = env.arms[i], env.arms[j]
    if MetricKind.parse(metric) is MetricKind.FISHER_RAO:
        return float(np.sqrt(fisher_rao_univariate_sq(a.mean, a.variance, b.mean, b.variance)))
    return float(np.hypot(a.mean - b.mean, np.sqrt(a.variance) - np.sqrt(b.variance)))


def regret_bound_decomposition(env: BanditEnv, eps: float, horizon: int, metric=MetricKind.WASSERSTEIN2,
                               outside_rounds: Optional[float] = None, intensity: Optional[float] = None,
                               excluded_area: Optional[float] = None):
    """Inner and outer terms of the two-regime regret bound.

    Inner: sum over suboptimal arms within ``eps`` of the best arm of
    ``8 ln T / gap``.  Outer: with ``intensity`` and ``excluded_area`` the
    spatial form ``intensity * area * max_gap * T``; otherwise
    ``sum_{outside} gap * outside_rounds`` with ``outside_rounds``
    defaulting to the horizon.
    """
    best = env.best_arm
    gaps = env.gaps
    inner = 0.0
    outer_gaps = []
    for k in range(env.n_arms):
        near = arm_distance(env, k, best, metric) <= eps
        if near:
            if gaps[k] > 0:
                inner += 8.0 * math.log(horizon) / gaps[k]
        else:
            outer_gaps.append(gaps[k])
    if intensity is not None and excluded_area is not None:
        outer = intensity * excluded_area * float(gaps.max()) * horizon
    else:
        rounds = horizon if outside_rounds is None else outside_rounds
        outer = float(sum(outer_gaps)) * rounds
    return inner, outer
